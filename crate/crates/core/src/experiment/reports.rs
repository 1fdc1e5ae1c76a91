//! CSV tables for the path, excitation, decomposition and rate-bound reports.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::analysis::{DecompositionTrace, RateRow};
use crate::error::Result;
use crate::excitation::PEReport;
use crate::path_oracle::PathOracle;

use super::csv_io::write_table;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathRow {
    pub k: usize,
    pub lambda_k: f64,
    pub path_norm: f64,
    pub approx_error: f64,
    pub drift: f64,
    /// `drift / (a_k lambda_k)`
    pub drift_over_ak_lk: f64,
}

pub fn path_rows(oracle: &PathOracle, ks: &[usize]) -> Result<Vec<PathRow>> {
    ks.par_iter()
        .map(|&k| {
            let path = oracle.path_at(k)?;
            let drift = oracle.drift(k)?;
            let lambda_k = oracle.reg(k);
            Ok(PathRow {
                k,
                lambda_k,
                path_norm: path.norm(),
                approx_error: path.distance(oracle.spec().target().expansion())?,
                drift,
                drift_over_ak_lk: drift / (oracle.schedule().gain(k) * lambda_k),
            })
        })
        .collect()
}

pub fn emit_path_csv(rows: &[PathRow], path: &Path) -> Result<()> {
    write_table(
        path,
        &["k", "lambda_k", "path_norm", "approx_error", "drift", "drift_over_ak_lk"],
        rows.iter().map(|r| {
            [
                r.k.to_string(),
                r.lambda_k.to_string(),
                r.path_norm.to_string(),
                r.approx_error.to_string(),
                r.drift.to_string(),
                r.drift_over_ak_lk.to_string(),
            ]
        }),
    )
}

pub fn emit_pe_csv(report: &PEReport, path: &Path) -> Result<()> {
    write_table(
        path,
        &["k", "j", "lambda_j"],
        report.rows.iter().flat_map(|(k, e)| {
            e.iter()
                .enumerate()
                .map(move |(j, v)| [k.to_string(), (j + 1).to_string(), v.to_string()])
        }),
    )
}

/// Human-readable summary of an excitation report.
pub fn pe_summary(report: &PEReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "window h = {}, k in [{}, {}], floor tolerance {:e}",
        report.h,
        report.k_range.start(),
        report.k_range.end(),
        report.floor_tolerance
    );
    for (j, v) in report.per_j_infimum.iter().enumerate() {
        let mark = if *v > report.floor_tolerance { "" } else { "  (below floor)" };
        let _ = writeln!(s, "  inf Lambda_{:<2} = {v:.6e}{mark}", j + 1);
    }
    let _ = writeln!(
        s,
        "eigenvalue floor: {} ({} of {} modes above tolerance)",
        if report.eigen_verdict() { "pass" } else { "fail" },
        report.excited_modes(),
        report.j_max
    );
    if let Some(m) = &report.measure_domination {
        match m.first_failure {
            None => {
                let _ = writeln!(s, "measure domination at scale {}: pass", m.scale);
            }
            Some(k) => {
                let _ = writeln!(s, "measure domination at scale {}: fail (first failing k = {k})", m.scale);
            }
        }
    }
    s
}

pub fn emit_decomposition_csv(trace: &DecompositionTrace, path: &Path) -> Result<()> {
    write_table(
        path,
        &["step", "delta_norm", "m_norm", "d_norm", "identity_residual"],
        (0..trace.steps.len()).map(|i| {
            [
                trace.steps[i].to_string(),
                trace.delta_norm[i].to_string(),
                trace.m_norm[i].to_string(),
                trace.d_norm[i].to_string(),
                trace.identity_residual[i].to_string(),
            ]
        }),
    )
}

pub fn emit_bounds_csv(rows: &[RateRow], path: &Path) -> Result<()> {
    write_table(
        path,
        &["k", "a_sum", "a_ratio", "b_sum", "b_ratio", "product", "product_ratio"],
        rows.iter().map(|r| {
            [
                r.k.to_string(),
                r.a_sum.to_string(),
                r.a_ratio.to_string(),
                r.b_sum.to_string(),
                r.b_ratio.to_string(),
                r.product.to_string(),
                r.product_ratio.to_string(),
            ]
        }),
    )
}
