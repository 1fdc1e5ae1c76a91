//! Monte-Carlo orchestration and result files.

mod chart;
mod config;
mod csv_io;
mod reports;

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::pairwise_sum;
use crate::error::{Error, Result};
use crate::learner::{self, Trajectory};

pub use chart::{emit_chart, render_chart, ChartOptions};
pub use config::{
    ExperimentConfig, KernelConfig, MeasureConfig, NoiseConfig, Setup, StreamConfig, TargetConfig, PAPER_SEED,
};
pub use csv_io::{
    emit_csv, emit_trajectories, parse_aggregate_csv, parse_trajectories_csv, write_table, AGGREGATE_HEADER,
    TRAJECTORY_HEADER,
};
pub use reports::{
    emit_bounds_csv, emit_decomposition_csv, emit_path_csv, emit_pe_csv, path_rows, pe_summary, PathRow,
};

/// Build identifier written into result metadata.
pub const VERSION: &str = concat!("rkhs-online ", env!("CARGO_PKG_VERSION"));

/// Mean and spread of the squared error over runs at one recorded `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateRow {
    pub k: usize,
    pub mse_mean: f64,
    /// Sample standard deviation over runs (0 for a single run).
    pub mse_std: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub config_hash: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub version: String,
    pub threads: usize,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub config: ExperimentConfig,
    pub trajectories: Vec<Trajectory>,
    pub aggregate: Vec<AggregateRow>,
    pub metadata: Metadata,
}

impl RunResult {
    pub fn mean_at(&self, k: usize) -> Option<f64> {
        self.aggregate.iter().find(|r| r.k == k).map(|r| r.mse_mean)
    }
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Runs `cfg.runs` independent learners from `f_0 = 0`; run `r` draws from
/// stream `r` of the configured seed.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunResult> {
    let setup = cfg.build()?;
    let started_unix = unix_now();
    let trajectories: Vec<Trajectory> = (0..cfg.runs as u64)
        .into_par_iter()
        .map(|r| {
            let stream_id = if cfg.equal_seeds { 0 } else { r };
            let mut t = learner::run(&setup.spec, setup.schedule, cfg.horizon, cfg.record_every, stream_id)?;
            t.run_id = r;
            Ok(t)
        })
        .collect::<Result<_>>()?;
    let aggregate = aggregate(&trajectories);
    Ok(RunResult {
        config: cfg.clone(),
        trajectories,
        aggregate,
        metadata: Metadata {
            config_hash: cfg.hash(),
            started_unix,
            finished_unix: unix_now(),
            version: VERSION.to_string(),
            threads: rayon::current_num_threads(),
        },
    })
}

/// Per-`k` mean and sample standard deviation, summed pairwise in run order.
pub fn aggregate(trajectories: &[Trajectory]) -> Vec<AggregateRow> {
    let Some(first) = trajectories.first() else {
        return Vec::new();
    };
    let runs = trajectories.len();
    (0..first.records.len())
        .map(|i| {
            let col: Vec<f64> = trajectories.iter().map(|t| t.records[i].1).collect();
            let mean = pairwise_sum(&col) / runs as f64;
            let dev: Vec<f64> = col.iter().map(|v| (v - mean) * (v - mean)).collect();
            let std = if runs > 1 { (pairwise_sum(&dev) / (runs - 1) as f64).sqrt() } else { 0.0 };
            AggregateRow {
                k: first.records[i].0,
                mse_mean: mean,
                mse_std: std,
                runs,
            }
        })
        .collect()
}

/// Paths of the files written by [`write_run`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunFiles {
    pub aggregate: PathBuf,
    pub trajectories: PathBuf,
    pub chart: PathBuf,
    pub metadata: PathBuf,
}

/// Writes `mse.csv`, `trajectories.csv`, `mse.svg` and `metadata.json` into `dir`.
pub fn write_run(result: &RunResult, dir: &Path, chart: &ChartOptions) -> Result<RunFiles> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = RunFiles {
        aggregate: dir.join("mse.csv"),
        trajectories: dir.join("trajectories.csv"),
        chart: dir.join("mse.svg"),
        metadata: dir.join("metadata.json"),
    };
    emit_csv(result, &files.aggregate)?;
    emit_trajectories(result, &files.trajectories)?;
    emit_chart(result, &files.chart, chart)?;
    let meta = serde_json::json!({
        "metadata": result.metadata,
        "config": result.config,
    });
    let text = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    std::fs::write(&files.metadata, text + "\n").map_err(|e| Error::io(&files.metadata, e))?;
    Ok(files)
}

/// The shifting-uniform experiment with `horizon` steps and `runs` runs,
/// written to `output_dir`.
pub fn reproduce_paper(output_dir: &Path, horizon: usize, runs: usize, seed: u64) -> Result<(RunResult, RunFiles)> {
    let mut cfg = ExperimentConfig::paper();
    cfg.horizon = horizon;
    cfg.runs = runs;
    cfg.seed = seed;
    cfg.output = Some(output_dir.to_path_buf());
    let result = run_experiment(&cfg)?;
    let files = write_run(
        &result,
        output_dir,
        &ChartOptions {
            log_y: true,
            title: "Mean squared error".into(),
        },
    )?;
    Ok((result, files))
}
