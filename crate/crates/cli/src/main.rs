use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};

use rkhs_online::analysis::{self, log_spaced, DecompositionStart};
use rkhs_online::excitation::{eigen_floor, measure_pe_check};
use rkhs_online::experiment::{self, ChartOptions, ExperimentConfig};
use rkhs_online::{Error, PathOracle, Result};

#[derive(Parser, Debug)]
#[command(name = "rkhs-online", version, about = "Online kernel regression on non-stationary streams")]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Monte-Carlo runs of the configured experiment.
    Run {
        /// Log-scaled y axis in the chart.
        #[arg(long)]
        log_y: bool,
    },
    /// Regularization path, its drift and approximation error.
    Path {
        #[arg(long, default_value_t = 1000)]
        k_max: usize,
        #[arg(long, default_value_t = 10)]
        per_decade: usize,
    },
    /// Persistence-of-excitation evidence.
    PeCheck {
        #[arg(long, default_value_t = 2)]
        h: usize,
        #[arg(long, default_value_t = 10)]
        j_max: usize,
        #[arg(long, default_value_t = 200)]
        k_max: usize,
        /// Domination scale against Lebesgue measure.
        #[arg(long, default_value_t = 0.5)]
        gamma: f64,
        #[arg(long, default_value_t = 1000)]
        measure_k_max: usize,
    },
    /// Tracking-error decomposition along one run.
    Decompose {
        #[arg(long, default_value_t = 300)]
        horizon: usize,
        #[arg(long, default_value_t = 1)]
        record_every: usize,
        #[arg(long, default_value_t = 0)]
        run: u64,
        #[arg(long, value_enum, default_value_t = Start::Zero)]
        start: Start,
    },
    /// Scalar rate sums against their envelopes.
    Bounds {
        #[arg(long, default_value_t = 100_000)]
        k_max: usize,
        #[arg(long, default_value_t = 20)]
        per_decade: usize,
    },
    /// The shifting-uniform experiment with its default settings.
    ReproducePaper {
        #[arg(long, default_value_t = 5000)]
        horizon: usize,
        #[arg(long, default_value_t = 50)]
        runs: usize,
    },
    /// Parses and validates the configuration.
    ValidateConfig,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Start {
    Zero,
    Path,
}

fn load_config(cli: &Cli, required: bool) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None if required => return Err(Error::Config("this command needs --config".into())),
        None => ExperimentConfig::paper(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output = Some(o.clone());
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg: &ExperimentConfig) -> Result<PathBuf> {
    let dir = cli.out.clone().or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("results"));
    std::fs::create_dir_all(&dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
    Ok(dir)
}

fn oracle(cfg: &ExperimentConfig) -> Result<PathOracle> {
    let s = cfg.build()?;
    PathOracle::new(&s.kernel, &s.spec, s.schedule, cfg.grid_n)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

fn execute(cli: &Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::Parameter(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Run { log_y } => {
            let cfg = load_config(cli, true)?;
            let dir = out_dir(cli, &cfg)?;
            let result = experiment::run_experiment(&cfg)?;
            let files = experiment::write_run(
                &result,
                &dir,
                &ChartOptions {
                    log_y: *log_y,
                    ..ChartOptions::default()
                },
            )?;
            let last = result.aggregate.last();
            println!(
                "{} runs x {} steps, final mse {}; wrote {}",
                cfg.runs,
                cfg.horizon,
                last.map_or(f64::NAN, |r| r.mse_mean),
                files.aggregate.display()
            );
        }
        Command::Path { k_max, per_decade } => {
            let cfg = load_config(cli, false)?;
            let dir = out_dir(cli, &cfg)?;
            let mut ks = vec![0];
            ks.extend(log_spaced(1, (*k_max).max(1), (*per_decade).max(1)));
            ks.dedup();
            let rows = experiment::path_rows(&oracle(&cfg)?, &ks)?;
            let p = dir.join("path.csv");
            experiment::emit_path_csv(&rows, &p)?;
            println!("{} path rows; wrote {}", rows.len(), p.display());
        }
        Command::PeCheck {
            h,
            j_max,
            k_max,
            gamma,
            measure_k_max,
        } => {
            let cfg = load_config(cli, false)?;
            let dir = out_dir(cli, &cfg)?;
            let s = cfg.build()?;
            let mut report = eigen_floor(&s.kernel, &s.spec, *h, *j_max, 0..=*k_max, cfg.grid_n)?;
            report.measure_domination = Some(measure_pe_check(&s.spec, *h, *gamma, 0..=*measure_k_max)?);
            let p = dir.join("pe.csv");
            experiment::emit_pe_csv(&report, &p)?;
            let summary = experiment::pe_summary(&report);
            write_text(&dir.join("pe_summary.txt"), &summary)?;
            print!("{summary}");
            println!("wrote {}", p.display());
        }
        Command::Decompose {
            horizon,
            record_every,
            run,
            start,
        } => {
            let cfg = load_config(cli, false)?;
            let dir = out_dir(cli, &cfg)?;
            let start = match start {
                Start::Zero => DecompositionStart::Zero,
                Start::Path => DecompositionStart::Path,
            };
            let trace = analysis::simulate_decomposition(&oracle(&cfg)?, *horizon, *record_every, *run, start)?;
            let p = dir.join("decomposition.csv");
            experiment::emit_decomposition_csv(&trace, &p)?;
            println!(
                "max relative identity residual {:e}; wrote {}",
                trace.max_relative_residual(),
                p.display()
            );
        }
        Command::Bounds { k_max, per_decade } => {
            let cfg = load_config(cli, false)?;
            let dir = out_dir(cli, &cfg)?;
            let s = cfg.build()?;
            if *k_max < 100 {
                return Err(Error::Parameter(format!("k_max must be at least 100, got {k_max}")));
            }
            let rows = analysis::rate_values(s.schedule, &log_spaced(100, *k_max, (*per_decade).max(1)));
            let p = dir.join("bounds.csv");
            experiment::emit_bounds_csv(&rows, &p)?;
            println!("{} rows; wrote {}", rows.len(), p.display());
        }
        Command::ReproducePaper { horizon, runs } => {
            let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("results"));
            let seed = cli.seed.unwrap_or(experiment::PAPER_SEED);
            let (result, files) = experiment::reproduce_paper(&dir, *horizon, *runs, seed)?;
            let at = |k| result.mean_at(k).map_or("n/a".to_string(), |v| format!("{v:.6}"));
            println!(
                "R = {}, T = {}; mse at k=50: {}, k=2000: {}, k={}: {}; wrote {} and {}",
                runs,
                horizon,
                at(50),
                at(2000),
                horizon,
                at(*horizon),
                files.aggregate.display(),
                files.chart.display()
            );
        }
        Command::ValidateConfig => {
            let cfg = load_config(cli, true)?;
            cfg.build()?;
            println!("ok {}", cfg.hash());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("usage: {first}");
            return ExitCode::from(2);
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}: {}", e.category(), e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
