//! Online regularized learner `f_{k+1} = f_k - a_k((f_k(x_k) - y_k) K_{x_k} + lambda_k f_k)`
//! in coefficient form: every old coefficient shrinks by `1 - a_k lambda_k`
//! and the new center `x_k` receives `-a_k (f_k(x_k) - y_k)`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::rkhs::{KernelExpansion, TargetFunction};
use crate::schedule::GainSchedule;
use crate::stream::StreamSpec;

/// How the per-step shrink of old coefficients is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpdateMode {
    /// Store `alpha_i / P_k` with the running product `P_k` of shrink factors,
    /// so a step writes one coefficient instead of `k`.
    #[default]
    CumulativeShrink,
    /// Multiply every stored coefficient each step.
    Naive,
}

/// Rescale stored coefficients once the running product falls below this.
const RESCALE_BELOW: f64 = 1e-150;

#[derive(Debug, Clone)]
pub struct LearnerState {
    kernel: Arc<Kernel>,
    schedule: GainSchedule,
    mode: UpdateMode,
    step: usize,
    centers: Vec<f64>,
    stored: Vec<f64>,
    scale: f64,
}

/// Quantities produced by one update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    /// `f_k(x_k)`
    pub prediction: f64,
    /// `1 - a_k lambda_k`
    pub shrink: f64,
    /// Coefficient of the new center.
    pub new_coefficient: f64,
}

impl LearnerState {
    /// State at `k = 0`; the centers of `f0` become permanent centers.
    pub fn init(kernel: Arc<Kernel>, schedule: GainSchedule, f0: &KernelExpansion) -> Result<Self> {
        Self::init_with_mode(kernel, schedule, f0, UpdateMode::default())
    }

    pub fn init_with_mode(
        kernel: Arc<Kernel>,
        schedule: GainSchedule,
        f0: &KernelExpansion,
        mode: UpdateMode,
    ) -> Result<Self> {
        if !(Arc::ptr_eq(&kernel, f0.kernel()) || *kernel == **f0.kernel()) {
            return Err(Error::KernelMismatch);
        }
        Ok(Self {
            kernel,
            schedule,
            mode,
            step: 0,
            centers: f0.centers().to_vec(),
            stored: f0.coefficients().to_vec(),
            scale: 1.0,
        })
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn schedule(&self) -> GainSchedule {
        self.schedule
    }

    pub fn kernel(&self) -> &Arc<Kernel> {
        &self.kernel
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    /// Current coefficients `alpha_{k, i}`.
    pub fn coefficients(&self) -> Vec<f64> {
        self.stored.iter().map(|a| a * self.scale).collect()
    }

    pub fn hypothesis(&self) -> KernelExpansion {
        KernelExpansion::from_parts(self.kernel.clone(), self.centers.clone(), self.coefficients())
    }

    /// `f_k(x)`, one pass over the centers.
    pub fn predict(&self, x: f64) -> f64 {
        let k = &self.kernel;
        let s: f64 = self.centers.iter().zip(&self.stored).map(|(&c, &a)| a * k.k(c, x)).sum();
        s * self.scale
    }

    /// Consumes the state and returns `f_{k+1}`.
    pub fn step(mut self, x: f64, y: f64) -> Result<Self> {
        self.step_mut(x, y)?;
        Ok(self)
    }

    pub fn step_mut(&mut self, x: f64, y: f64) -> Result<StepReport> {
        self.kernel.domain().check(x)?;
        let a = self.schedule.gain(self.step);
        let lambda = self.schedule.reg(self.step);
        Ok(self.update(x, y, a, lambda))
    }

    /// Update with explicit `(a, lambda)`, bypassing the schedule. The step
    /// counter still advances.
    pub fn step_with(&mut self, x: f64, y: f64, a: f64, lambda: f64) -> Result<StepReport> {
        self.kernel.domain().check(x)?;
        Ok(self.update(x, y, a, lambda))
    }

    fn update(&mut self, x: f64, y: f64, a: f64, lambda: f64) -> StepReport {
        let prediction = self.predict(x);
        let shrink = 1.0 - a * lambda;
        let new_coefficient = -a * (prediction - y);
        match self.mode {
            UpdateMode::Naive => {
                for c in &mut self.stored {
                    *c *= shrink;
                }
                self.stored.push(new_coefficient);
            }
            UpdateMode::CumulativeShrink => {
                if shrink == 0.0 {
                    self.stored.iter_mut().for_each(|c| *c = 0.0);
                    self.scale = 1.0;
                } else {
                    self.scale *= shrink;
                    if self.scale.abs() < RESCALE_BELOW {
                        let s = self.scale;
                        self.stored.iter_mut().for_each(|c| *c *= s);
                        self.scale = 1.0;
                    }
                }
                self.stored.push(new_coefficient / self.scale);
            }
        }
        self.centers.push(x);
        self.step += 1;
        StepReport {
            prediction,
            shrink,
            new_coefficient,
        }
    }

    /// Drops centers whose coefficient is below `threshold` in magnitude.
    /// Breaks the one-center-per-step invariant; 0 is a no-op.
    pub fn prune(&mut self, threshold: f64) {
        if threshold <= 0.0 {
            return;
        }
        let cut = threshold / self.scale.abs();
        let keep: Vec<bool> = self.stored.iter().map(|a| a.abs() >= cut).collect();
        let mut it = keep.iter();
        self.centers.retain(|_| *it.next().unwrap());
        let mut it = keep.iter();
        self.stored.retain(|_| *it.next().unwrap());
    }
}

/// Incrementally maintained `||f_k - f*||_K^2` for hypotheses that evolve as
/// `f <- c f + beta K_x`.
#[derive(Debug, Clone)]
struct ErrorTracker {
    norm_sq: f64,
    target_centers: Vec<f64>,
    target_coeffs: Vec<f64>,
    at_target: Vec<f64>,
    target_norm_sq: f64,
}

impl ErrorTracker {
    fn new(f0: &KernelExpansion, target: &TargetFunction) -> Self {
        let t = target.expansion();
        Self {
            norm_sq: f0.norm_squared(),
            target_centers: t.centers().to_vec(),
            target_coeffs: t.coefficients().to_vec(),
            at_target: t.centers().iter().map(|&z| f0.eval_at(z)).collect(),
            target_norm_sq: t.norm_squared(),
        }
    }

    fn update(&mut self, kernel: &Kernel, x: f64, r: &StepReport) {
        let (c, b) = (r.shrink, r.new_coefficient);
        self.norm_sq = c * c * self.norm_sq + 2.0 * c * b * r.prediction + b * b * kernel.k(x, x);
        for (g, &z) in self.at_target.iter_mut().zip(&self.target_centers) {
            *g = c * *g + b * kernel.k(x, z);
        }
    }

    fn squared_error(&self) -> f64 {
        let cross: f64 = self.at_target.iter().zip(&self.target_coeffs).map(|(g, t)| g * t).sum();
        (self.norm_sq - 2.0 * cross + self.target_norm_sq).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LearnerOptions {
    pub mode: UpdateMode,
    /// Coefficient pruning threshold; 0 disables pruning.
    pub prune_threshold: f64,
}

/// Squared RKHS errors of one run at the recorded steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub run_id: u64,
    /// `(k, ||f_k - f*||_K^2)` for `k = record_every, 2 record_every, ... <= T`.
    pub records: Vec<(usize, f64)>,
}

/// Runs the learner from `f_0 = 0` for `horizon` steps on stream run `run_id`.
pub fn run(
    spec: &StreamSpec,
    schedule: GainSchedule,
    horizon: usize,
    record_every: usize,
    run_id: u64,
) -> Result<Trajectory> {
    let f0 = KernelExpansion::zero(spec.target().kernel().clone());
    run_from(spec, schedule, &f0, horizon, record_every, run_id, LearnerOptions::default())
}

pub fn run_from(
    spec: &StreamSpec,
    schedule: GainSchedule,
    f0: &KernelExpansion,
    horizon: usize,
    record_every: usize,
    run_id: u64,
    options: LearnerOptions,
) -> Result<Trajectory> {
    if horizon == 0 {
        return Err(Error::Parameter("horizon must be at least 1".into()));
    }
    if record_every == 0 {
        return Err(Error::Parameter("record_every must be at least 1".into()));
    }
    let kernel = spec.target().kernel().clone();
    let mut state = LearnerState::init_with_mode(kernel.clone(), schedule, f0, options.mode)?;
    let mut tracker = ErrorTracker::new(f0, spec.target());
    let rng = spec.rng(run_id);
    let mut records = Vec::with_capacity(horizon / record_every);
    for k in 0..horizon {
        let s = spec.sample(k, &rng);
        let report = state.step_mut(s.x, s.y)?;
        if options.prune_threshold > 0.0 {
            state.prune(options.prune_threshold);
        } else {
            tracker.update(&kernel, s.x, &report);
        }
        let n = k + 1;
        if n % record_every == 0 {
            let err = if options.prune_threshold > 0.0 {
                state.hypothesis().distance(spec.target().expansion())?.powi(2)
            } else {
                tracker.squared_error()
            };
            records.push((n, err));
        }
    }
    Ok(Trajectory { run_id, records })
}

/// One recorded step of the noise-free companion run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseFreeRecord {
    /// Number of completed steps `n = k + 1`.
    pub step: usize,
    /// `||f~_n - f*||_K`
    pub error_norm: f64,
    /// `||B_k||_K` with `B_k = sum_{i<=k} a_i lambda_i Phi(k, i+1) f*`.
    pub bias_norm: f64,
    /// `||(f~_n - f*) - (Phi(k, 0)(f~_0 - f*) - B_k)||_K`
    pub identity_residual: f64,
}

#[derive(Debug, Clone)]
pub struct NoiseFreeReport {
    pub records: Vec<NoiseFreeRecord>,
    pub final_hypothesis: KernelExpansion,
    pub final_bias: KernelExpansion,
}

/// Noise-free learner run alongside the separately propagated bias term and
/// the homogeneous part `Phi(k, 0)(f~_0 - f*)`.
pub fn run_noise_free(
    spec: &StreamSpec,
    schedule: GainSchedule,
    f0: &KernelExpansion,
    horizon: usize,
    record_every: usize,
    run_id: u64,
) -> Result<NoiseFreeReport> {
    if !spec.noise().is_zero() {
        return Err(Error::Contract("noise-free run requires a zero-noise stream".into()));
    }
    if horizon == 0 || record_every == 0 {
        return Err(Error::Parameter("horizon and record_every must be positive".into()));
    }
    let kernel = spec.target().kernel().clone();
    let target = spec.target().expansion();
    let mut state = LearnerState::init(kernel.clone(), schedule, f0)?;
    let mut homogeneous = KernelExpansion::combine_merged(1.0, f0, -1.0, target)?;
    let mut bias = KernelExpansion::zero(kernel.clone());
    let rng = spec.rng(run_id);
    let mut records = Vec::new();
    for k in 0..horizon {
        let s = spec.sample(k, &rng);
        let (a, lambda) = (schedule.gain(k), schedule.reg(k));
        state.step_mut(s.x, s.y)?;
        homogeneous = homogeneous.step_operator(s.x, a, lambda);
        bias = KernelExpansion::combine_merged(1.0, &bias.step_operator(s.x, a, lambda), a * lambda, target)?;
        let n = k + 1;
        if n % record_every == 0 {
            let err = KernelExpansion::combine_merged(1.0, &state.hypothesis(), -1.0, target)?;
            let predicted = KernelExpansion::combine_merged(1.0, &homogeneous, -1.0, &bias)?;
            records.push(NoiseFreeRecord {
                step: n,
                error_norm: err.norm(),
                bias_norm: bias.norm(),
                identity_residual: err.distance(&predicted)?,
            });
        }
    }
    Ok(NoiseFreeReport {
        records,
        final_hypothesis: state.hypothesis(),
        final_bias: bias,
    })
}
