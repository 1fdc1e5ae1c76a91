//! Standalone SVG line chart of the mean squared error against `k`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

use super::RunResult;

#[derive(Debug, Clone, PartialEq)]
pub struct ChartOptions {
    pub log_y: bool,
    pub title: String,
}

impl Default for ChartOptions {
    fn default() -> Self {
        Self {
            log_y: false,
            title: "Mean squared error".into(),
        }
    }
}

const W: f64 = 720.0;
const H: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// SVG text of the chart; the x axis spans `[0, horizon]`.
pub fn render_chart(result: &RunResult, opts: &ChartOptions) -> String {
    let horizon = result.config.horizon.max(1) as f64;
    let pts: Vec<(f64, f64)> = result
        .aggregate
        .iter()
        .filter(|r| r.mse_mean.is_finite() && (!opts.log_y || r.mse_mean > 0.0))
        .map(|r| (r.k as f64, if opts.log_y { r.mse_mean.log10() } else { r.mse_mean }))
        .collect();
    let (mut lo, mut hi) = pts
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
    if pts.is_empty() {
        (lo, hi) = (0.0, 1.0);
    }
    if opts.log_y {
        lo = lo.floor();
        hi = hi.ceil();
        if hi <= lo {
            hi = lo + 1.0;
        }
    } else {
        if lo > 0.0 {
            lo = 0.0;
        }
        if hi <= lo {
            hi = lo + 1.0;
        }
    }
    let (pw, ph) = (W - LEFT - RIGHT, H - TOP - BOTTOM);
    let sx = |x: f64| LEFT + x / horizon * pw;
    let sy = |y: f64| TOP + (hi - y) / (hi - lo) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        W / 2.0,
        escape(&opts.title)
    );
    // axes
    let _ = writeln!(
        s,
        r#"<path d="M{l} {t} V{b} H{r}" fill="none" stroke="black"/>"#,
        l = LEFT,
        t = TOP,
        b = TOP + ph,
        r = LEFT + pw
    );
    for i in 0..=5 {
        let x = horizon * i as f64 / 5.0;
        let px = sx(x);
        let _ = writeln!(
            s,
            r#"<line x1="{px:.2}" y1="{y0}" x2="{px:.2}" y2="{y1}" stroke="black"/><text x="{px:.2}" y="{ty}" text-anchor="middle">{}</text>"#,
            fmt_tick(x.round()),
            y0 = TOP + ph,
            y1 = TOP + ph + 5.0,
            ty = TOP + ph + 20.0
        );
    }
    let y_ticks: Vec<f64> = if opts.log_y {
        (lo as i64..=hi as i64).map(|e| e as f64).collect()
    } else {
        (0..=5).map(|i| lo + (hi - lo) * i as f64 / 5.0).collect()
    };
    for y in y_ticks {
        let py = sy(y);
        let label = if opts.log_y { format!("1e{}", y as i64) } else { fmt_tick(y) };
        let _ = writeln!(
            s,
            r##"<line x1="{x0}" y1="{py:.2}" x2="{x1}" y2="{py:.2}" stroke="#ddd"/><text x="{tx}" y="{ty:.2}" text-anchor="end">{label}</text>"##,
            x0 = LEFT,
            x1 = LEFT + pw,
            tx = LEFT - 8.0,
            ty = py + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">k</text>"#,
        LEFT + pw / 2.0,
        H - 12.0
    );
    let ylabel = if opts.log_y { "mean squared error (log scale)" } else { "mean squared error" };
    let _ = writeln!(
        s,
        r#"<text x="18" y="{c}" text-anchor="middle" transform="rotate(-90 18 {c})">{ylabel}</text>"#,
        c = TOP + ph / 2.0
    );
    match pts.len() {
        0 => {}
        1 => {
            let _ = writeln!(
                s,
                r##"<circle cx="{:.3}" cy="{:.3}" r="3" fill="#1f4e9c"/>"##,
                sx(pts[0].0),
                sy(pts[0].1)
            );
        }
        _ => {
            let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.3},{:.3}", sx(x), sy(y))).collect();
            let _ = writeln!(
                s,
                r##"<polyline fill="none" stroke="#1f4e9c" stroke-width="1.5" points="{}"/>"##,
                coords.join(" ")
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

pub fn emit_chart(result: &RunResult, path: &Path, opts: &ChartOptions) -> Result<()> {
    std::fs::write(path, render_chart(result, opts)).map_err(|e| Error::io(path, e))
}
