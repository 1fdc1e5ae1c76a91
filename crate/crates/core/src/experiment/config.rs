//! TOML experiment configuration.
//!
//! ```toml
//! tau1 = 0.7
//! tau2 = 0.15
//! horizon = 5000
//! runs = 50
//! seed = 2024
//!
//! [kernel]
//! kind = "gaussian"
//! bandwidth = 1.0
//!
//! [stream]
//! kind = "shifting_uniform"
//!
//! [noise]
//! kind = "gaussian"
//! variance = 0.1
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kernel::{Interval, Kernel};
use crate::rkhs::{KernelExpansion, TargetFunction};
use crate::schedule::GainSchedule;
use crate::stream::{MarginalMeasure, NoiseModel, StreamKind, StreamSpec};

fn unit_domain() -> [f64; 2] {
    [0.0, 1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelConfig {
    Gaussian {
        bandwidth: f64,
        #[serde(default = "unit_domain")]
        domain: [f64; 2],
    },
    /// Symmetric table on `nodes`, one row per node.
    Tabulated {
        nodes: Vec<f64>,
        values: Vec<Vec<f64>>,
        #[serde(default = "unit_domain")]
        domain: [f64; 2],
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureConfig {
    pub breakpoints: Vec<f64>,
    pub densities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StreamConfig {
    ShiftingUniform {},
    Iid { breakpoints: Vec<f64>, densities: Vec<f64> },
    Scripted { measures: Vec<MeasureConfig> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseConfig {
    Zero {},
    Gaussian { variance: f64 },
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig::Zero {}
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetConfig {
    /// `f* = K(center, .)`
    KernelSection { center: f64 },
    Expansion { centers: Vec<f64>, coefficients: Vec<f64> },
}

impl Default for TargetConfig {
    fn default() -> Self {
        TargetConfig::KernelSection { center: 0.0 }
    }
}

fn default_grid_n() -> usize {
    64
}

fn default_record_every() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub tau1: f64,
    pub tau2: f64,
    pub horizon: usize,
    pub runs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_grid_n")]
    pub grid_n: usize,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Diagnostic: every run replays the stream of run 0.
    #[serde(default)]
    pub equal_seeds: bool,
    pub kernel: KernelConfig,
    pub stream: StreamConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub target: TargetConfig,
}

/// Objects built from a validated configuration.
#[derive(Debug, Clone)]
pub struct Setup {
    pub kernel: Arc<Kernel>,
    pub spec: StreamSpec,
    pub schedule: GainSchedule,
}

pub const PAPER_SEED: u64 = 2024;

impl ExperimentConfig {
    /// Shifting-uniform experiment with `f* = exp(-x^2)`, noise variance 0.1,
    /// schedule (0.7, 0.15), 50 runs of 5000 steps.
    pub fn paper() -> Self {
        Self {
            tau1: 0.7,
            tau2: 0.15,
            horizon: 5000,
            runs: 50,
            seed: PAPER_SEED,
            grid_n: 64,
            record_every: 10,
            output: None,
            equal_seeds: false,
            kernel: KernelConfig::Gaussian {
                bandwidth: 1.0,
                domain: unit_domain(),
            },
            stream: StreamConfig::ShiftingUniform {},
            noise: NoiseConfig::Gaussian { variance: 0.1 },
            target: TargetConfig::KernelSection { center: 0.0 },
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(one_line(&e.to_string())))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml_string().as_bytes()))
    }

    /// Checks the numeric ranges and the schedule before anything is built.
    pub fn validate(&self) -> Result<()> {
        GainSchedule::new(self.tau1, self.tau2)?;
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if self.runs == 0 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        if self.grid_n < 2 {
            return Err(Error::Config("grid_n must be at least 2".into()));
        }
        if self.record_every == 0 {
            return Err(Error::Config("record_every must be at least 1".into()));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Setup> {
        self.validate()?;
        let schedule = GainSchedule::new(self.tau1, self.tau2)?;
        let kernel = Arc::new(match &self.kernel {
            KernelConfig::Gaussian { bandwidth, domain } => Kernel::gaussian(*bandwidth, interval(domain)?)?,
            KernelConfig::Tabulated { nodes, values, domain } => {
                if values.len() != nodes.len() || values.iter().any(|r| r.len() != nodes.len()) {
                    return Err(Error::Config("tabulated kernel needs one row of len(nodes) values per node".into()));
                }
                Kernel::tabulated(nodes.clone(), values.concat(), interval(domain)?)?
            }
        });
        let target = match &self.target {
            TargetConfig::KernelSection { center } => TargetFunction::kernel_section(kernel.clone(), *center)?,
            TargetConfig::Expansion { centers, coefficients } => TargetFunction::from_expansion(KernelExpansion::new(
                kernel.clone(),
                centers.clone(),
                coefficients.clone(),
            )?),
        };
        let kind = match &self.stream {
            StreamConfig::ShiftingUniform {} => StreamKind::ShiftingUniform,
            StreamConfig::Iid { breakpoints, densities } => {
                StreamKind::Iid(MarginalMeasure::new(breakpoints.clone(), densities.clone())?)
            }
            StreamConfig::Scripted { measures } => StreamKind::Scripted(
                measures
                    .iter()
                    .map(|m| MarginalMeasure::new(m.breakpoints.clone(), m.densities.clone()))
                    .collect::<Result<_>>()?,
            ),
        };
        let noise = match self.noise {
            NoiseConfig::Zero {} => NoiseModel::Zero,
            NoiseConfig::Gaussian { variance } => NoiseModel::gaussian(variance)?,
        };
        let spec = StreamSpec::new(kind, noise, target, self.seed)?;
        Ok(Setup { kernel, spec, schedule })
    }
}

fn interval(d: &[f64; 2]) -> Result<Interval> {
    Interval::new(d[0], d[1])
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
