//! Numerical checks of the error structure of the learner: the split of the
//! tracking error `delta_k = f_k - f_lambda(k)` into a noise-driven part `M_k`
//! and a drift-driven part `D_k`, the contraction of the transition products,
//! the mean-square decay of `M_k`, and the scalar rate sums behind the bounds.
//!
//! The coupled recursions all share the step factor `1 - a_k lambda_k` and the
//! input `x_k`, so every tracked element is stored on one basis: a fixed part
//! (the path grid plus the target centers) and the observed inputs, the latter
//! with a shared running scale.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::path_oracle::PathOracle;
use crate::rkhs::KernelExpansion;
use crate::schedule::GainSchedule;

const RESCALE_BELOW: f64 = 1e-150;

/// One element `sum_j phi_j K_{z_j} + scale * sum_i s_i K_{x_i}` with cached
/// values at the fixed centers and its squared norm.
#[derive(Debug, Clone)]
struct Tracked {
    fixed: Vec<f64>,
    stored: Vec<f64>,
    at_fixed: Vec<f64>,
    norm_sq: f64,
}

/// Contribution to one element in a step: `new = c * old + u + beta K_x`.
struct Increment<'a> {
    u: Option<&'a [f64]>,
    beta: f64,
}

#[derive(Debug, Clone)]
struct SplitBasis {
    kernel: Arc<Kernel>,
    fixed_centers: Vec<f64>,
    fixed_gram: DMatrix<f64>,
    xs: Vec<f64>,
    scale: f64,
    elems: Vec<Tracked>,
    // per-step kernel rows, refreshed by `load`
    kz: Vec<f64>,
    kx: Vec<f64>,
    kxx: f64,
}

impl SplitBasis {
    fn new(kernel: Arc<Kernel>, fixed_centers: Vec<f64>, initial: &[Vec<f64>]) -> Self {
        let fixed_gram = kernel.gram_unchecked(&fixed_centers);
        let elems = initial
            .iter()
            .map(|phi| {
                let at_fixed: Vec<f64> = (&fixed_gram * nalgebra::DVector::from_column_slice(phi)).iter().copied().collect();
                let norm_sq = dot(phi, &at_fixed);
                Tracked {
                    fixed: phi.clone(),
                    stored: Vec::new(),
                    at_fixed,
                    norm_sq,
                }
            })
            .collect();
        Self {
            kernel,
            fixed_centers,
            fixed_gram,
            xs: Vec::new(),
            scale: 1.0,
            elems,
            kz: Vec::new(),
            kx: Vec::new(),
            kxx: 0.0,
        }
    }

    /// Kernel rows against the next input.
    fn load(&mut self, x: f64) {
        let k = &self.kernel;
        self.kz = self.fixed_centers.iter().map(|&z| k.k(z, x)).collect();
        self.kx = self.xs.iter().map(|&xi| k.k(xi, x)).collect();
        self.kxx = k.k(x, x);
    }

    /// Value of element `e` at the loaded input.
    fn value(&self, e: usize) -> f64 {
        let t = &self.elems[e];
        dot(&t.fixed, &self.kz) + self.scale * dot(&t.stored, &self.kx)
    }

    /// `fixed . K(z, x)` for an arbitrary fixed-basis vector.
    fn fixed_value(&self, u: &[f64]) -> f64 {
        dot(u, &self.kz)
    }

    fn step(&mut self, x: f64, c: f64, incs: &[Increment<'_>]) {
        debug_assert_eq!(incs.len(), self.elems.len());
        let new_scale = self.scale * c;
        for (t, inc) in self.elems.iter_mut().zip(incs) {
            let ax = dot(&t.fixed, &self.kz) + self.scale * dot(&t.stored, &self.kx);
            let mut q = c * c * t.norm_sq + inc.beta * inc.beta * self.kxx + 2.0 * c * inc.beta * ax;
            for (e, kz) in t.at_fixed.iter_mut().zip(&self.kz) {
                *e = c * *e + inc.beta * kz;
            }
            for p in t.fixed.iter_mut() {
                *p *= c;
            }
            if let Some(u) = inc.u {
                let gu: Vec<f64> = (&self.fixed_gram * nalgebra::DVector::from_column_slice(u)).iter().copied().collect();
                // <c A + beta K_x, u> with the already-updated cache minus the u-u term
                let au = dot(u, &t.at_fixed);
                q += 2.0 * au + dot(u, &gu);
                for (e, g) in t.at_fixed.iter_mut().zip(&gu) {
                    *e += g;
                }
                for (p, v) in t.fixed.iter_mut().zip(u) {
                    *p += v;
                }
            }
            t.norm_sq = q.max(0.0);
            if new_scale == 0.0 {
                t.stored.iter_mut().for_each(|s| *s = 0.0);
                t.stored.push(inc.beta);
            } else {
                t.stored.push(inc.beta / new_scale);
            }
        }
        self.xs.push(x);
        self.scale = if new_scale == 0.0 { 1.0 } else { new_scale };
        if self.scale.abs() < RESCALE_BELOW {
            for t in &mut self.elems {
                t.stored.iter_mut().for_each(|s| *s *= self.scale);
            }
            self.scale = 1.0;
        }
    }

    /// `sum_e w_e * element_e + fixed extra` as an explicit expansion.
    fn combination(&self, weights: &[f64], extra_fixed: Option<&[f64]>) -> KernelExpansion {
        let p = self.fixed_centers.len();
        let mut coefs = vec![0.0; p + self.xs.len()];
        for (t, &w) in self.elems.iter().zip(weights) {
            for (c, v) in coefs[..p].iter_mut().zip(&t.fixed) {
                *c += w * v;
            }
            for (c, v) in coefs[p..].iter_mut().zip(&t.stored) {
                *c += w * self.scale * v;
            }
        }
        if let Some(u) = extra_fixed {
            for (c, v) in coefs[..p].iter_mut().zip(u) {
                *c += v;
            }
        }
        let mut centers = self.fixed_centers.clone();
        centers.extend_from_slice(&self.xs);
        KernelExpansion::from_parts(self.kernel.clone(), centers, coefs)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Fixed basis for an oracle: grid nodes followed by the target centers.
fn fixed_basis(oracle: &PathOracle) -> (Vec<f64>, Vec<f64>) {
    let target = oracle.spec().target().expansion();
    let mut centers = oracle.grid().nodes().to_vec();
    centers.extend_from_slice(target.centers());
    let mut star = vec![0.0; oracle.grid().len()];
    star.extend_from_slice(target.coefficients());
    (centers, star)
}

fn on_grid(c: &[f64], p: usize) -> Vec<f64> {
    let mut v = c.to_vec();
    v.resize(p, 0.0);
    v
}

/// Initial hypothesis of a decomposition run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DecompositionStart {
    /// `f_0 = 0`.
    #[default]
    Zero,
    /// `f_0 = f_lambda(0)`.
    Path,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DecompositionTrace {
    /// Number of completed steps at each record.
    pub steps: Vec<usize>,
    pub delta_norm: Vec<f64>,
    pub m_norm: Vec<f64>,
    pub d_norm: Vec<f64>,
    /// `||delta_k - M_k - D_k||_K`
    pub identity_residual: Vec<f64>,
}

impl DecompositionTrace {
    /// Largest `residual / (1 + ||delta||)` over the records.
    pub fn max_relative_residual(&self) -> f64 {
        self.identity_residual
            .iter()
            .zip(&self.delta_norm)
            .map(|(r, d)| r / (1.0 + d))
            .fold(0.0, f64::max)
    }
}

/// Runs the learner, the `M` recursion and the `D` recursion on the same
/// samples and records exact norms every `record_every` steps (and at step 0).
pub fn simulate_decomposition(
    oracle: &PathOracle,
    horizon: usize,
    record_every: usize,
    run_id: u64,
    start: DecompositionStart,
) -> Result<DecompositionTrace> {
    if horizon < 2 {
        return Err(Error::Parameter("decomposition horizon must be at least 2".into()));
    }
    if record_every == 0 {
        return Err(Error::Parameter("record_every must be at least 1".into()));
    }
    let spec = oracle.spec();
    let schedule = oracle.schedule();
    let paths = oracle.path_table(horizon)?;
    let (centers, star) = fixed_basis(oracle);
    let p = centers.len();
    let path = |k: usize| on_grid(&paths[k], p);
    let f0 = match start {
        DecompositionStart::Zero => vec![0.0; p],
        DecompositionStart::Path => path(0),
    };
    let d0: Vec<f64> = path(0).iter().map(|v| -v).collect();
    // elements: 0 = f, 1 = M, 2 = D
    let mut basis = SplitBasis::new(oracle.kernel().clone(), centers, &[f0.clone(), f0, d0]);
    let rng = spec.rng(run_id);
    let mut trace = DecompositionTrace::default();
    let record = |basis: &SplitBasis, n: usize, trace: &mut DecompositionTrace| {
        let neg_path: Vec<f64> = path(n).iter().map(|v| -v).collect();
        let delta = basis.combination(&[1.0, 0.0, 0.0], Some(&neg_path));
        let residual = basis.combination(&[1.0, -1.0, -1.0], Some(&neg_path));
        trace.steps.push(n);
        trace.delta_norm.push(delta.norm());
        trace.m_norm.push(basis.combination(&[0.0, 1.0, 0.0], None).norm());
        trace.d_norm.push(basis.combination(&[0.0, 0.0, 1.0], None).norm());
        trace.identity_residual.push(residual.norm());
    };
    record(&basis, 0, &mut trace);
    for k in 0..horizon {
        let s = spec.sample(k, &rng);
        let (a, lambda) = (schedule.gain(k), oracle.reg(k));
        basis.load(s.x);
        let (ck, ck1) = (path(k), path(k + 1));
        let path_x = basis.fixed_value(&ck);
        let star_x = basis.fixed_value(&star);
        let beta_f = -a * (basis.value(0) - s.y);
        let beta_m = -a * (basis.value(1) + path_x - star_x - s.noise);
        let beta_d = -a * basis.value(2);
        let u_m: Vec<f64> = ck.iter().map(|v| -a * lambda * v).collect();
        let u_d: Vec<f64> = ck1.iter().zip(&ck).map(|(n, o)| -(n - o)).collect();
        basis.step(
            s.x,
            1.0 - a * lambda,
            &[
                Increment { u: None, beta: beta_f },
                Increment { u: Some(&u_m), beta: beta_m },
                Increment { u: Some(&u_d), beta: beta_d },
            ],
        );
        let n = k + 1;
        if n % record_every == 0 {
            record(&basis, n, &mut trace);
        }
    }
    Ok(trace)
}

/// `||D_k||_K` along one run of the drift recursion
/// `D_{k+1} = (1 - a_k lambda_k) D_k - a_k D_k(x_k) K_{x_k} - (f_lambda(k+1) - f_lambda(k))`.
pub fn drift_recursion_trace(
    oracle: &PathOracle,
    horizon: usize,
    record_every: usize,
    run_id: u64,
) -> Result<Vec<(usize, f64)>> {
    if horizon == 0 || record_every == 0 {
        return Err(Error::Parameter("horizon and record_every must be positive".into()));
    }
    let spec = oracle.spec();
    let schedule = oracle.schedule();
    let paths = oracle.path_table(horizon)?;
    let (centers, _) = fixed_basis(oracle);
    let p = centers.len();
    let d0: Vec<f64> = on_grid(&paths[0], p).iter().map(|v| -v).collect();
    let mut basis = SplitBasis::new(oracle.kernel().clone(), centers, &[d0]);
    let rng = spec.rng(run_id);
    let mut out = vec![(0, basis.elems[0].norm_sq.sqrt())];
    for k in 0..horizon {
        let s = spec.sample(k, &rng);
        let (a, lambda) = (schedule.gain(k), oracle.reg(k));
        basis.load(s.x);
        let u: Vec<f64> = on_grid(&paths[k + 1], p).iter().zip(on_grid(&paths[k], p)).map(|(n, o)| -(n - o)).collect();
        let beta = -a * basis.value(0);
        basis.step(s.x, 1.0 - a * lambda, &[Increment { u: Some(&u), beta }]);
        if (k + 1) % record_every == 0 {
            out.push((k + 1, basis.elems[0].norm_sq.sqrt()));
        }
    }
    Ok(out)
}

/// `||M_k||_K^2` along one run of the noise-driven recursion started at `M_0 = 0`.
fn martingale_run(oracle: &PathOracle, paths: &[Vec<f64>], horizon: usize, record_every: usize, run_id: u64) -> Vec<f64> {
    let spec = oracle.spec();
    let schedule = oracle.schedule();
    let (centers, star) = fixed_basis(oracle);
    let p = centers.len();
    let mut basis = SplitBasis::new(oracle.kernel().clone(), centers, &[vec![0.0; p]]);
    let rng = spec.rng(run_id);
    let mut out = Vec::with_capacity(horizon / record_every);
    for k in 0..horizon {
        let s = spec.sample(k, &rng);
        let (a, lambda) = (schedule.gain(k), oracle.reg(k));
        basis.load(s.x);
        let ck = on_grid(&paths[k], p);
        let w_x = basis.fixed_value(&ck) - basis.fixed_value(&star) - s.noise;
        let beta = -a * (basis.value(0) + w_x);
        let u: Vec<f64> = ck.iter().map(|v| -a * lambda * v).collect();
        basis.step(s.x, 1.0 - a * lambda, &[Increment { u: Some(&u), beta }]);
        if (k + 1) % record_every == 0 {
            out.push(basis.elems[0].norm_sq);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleReport {
    pub steps: Vec<usize>,
    /// `sqrt(mean_r ||M_k||^2)` over runs.
    pub rms: Vec<f64>,
    pub runs: usize,
    /// Least-squares slope of `ln rms` against `ln k` on the last decade.
    pub tail_slope: f64,
    /// `-(tau1 - 3 tau2) / 2`.
    pub envelope_exponent: f64,
    /// `C` such that `rms = C ln^{3/2}(k+1) (k+1)^{exponent}` at the first tail point.
    pub envelope_constant: f64,
    pub tail_start: usize,
    pub envelope_respected: bool,
}

impl MartingaleReport {
    pub fn envelope(&self, k: usize) -> f64 {
        let t = (k + 1) as f64;
        self.envelope_constant * t.ln().powf(1.5) * t.powf(self.envelope_exponent)
    }
}

/// Monte-Carlo estimate of `E||M_k||^2`, with the envelope calibrated at the
/// first recorded step `>= tail_start` and checked on every later record.
pub fn martingale_stability(
    oracle: &PathOracle,
    horizon: usize,
    runs: usize,
    record_every: usize,
    tail_start: usize,
) -> Result<MartingaleReport> {
    if runs == 0 || horizon == 0 || record_every == 0 {
        return Err(Error::Parameter("runs, horizon and record_every must be positive".into()));
    }
    let paths = oracle.path_table(horizon)?;
    let per_run: Vec<Vec<f64>> = (0..runs as u64)
        .into_par_iter()
        .map(|r| martingale_run(oracle, &paths, horizon, record_every, r))
        .collect();
    let steps: Vec<usize> = (1..=horizon / record_every).map(|i| i * record_every).collect();
    let rms: Vec<f64> = (0..steps.len())
        .map(|i| {
            let col: Vec<f64> = per_run.iter().map(|r| r[i]).collect();
            (pairwise_sum(&col) / runs as f64).sqrt()
        })
        .collect();
    let schedule = oracle.schedule();
    let envelope_exponent = -(schedule.tau1() - 3.0 * schedule.tau2()) / 2.0;
    let first = steps
        .iter()
        .position(|&k| k >= tail_start)
        .ok_or_else(|| Error::Parameter("tail start beyond horizon".into()))?;
    let shape = |k: usize| {
        let t = (k + 1) as f64;
        t.ln().powf(1.5) * t.powf(envelope_exponent)
    };
    let envelope_constant = rms[first] / shape(steps[first]);
    let envelope_respected = (first..steps.len()).all(|i| rms[i] <= envelope_constant * shape(steps[i]) * (1.0 + 1e-12));
    let decade = horizon / 10;
    let (lx, ly): (Vec<f64>, Vec<f64>) = steps
        .iter()
        .zip(&rms)
        .filter(|(&k, &r)| k >= decade && r > 0.0)
        .map(|(&k, &r)| ((k as f64).ln(), r.ln()))
        .unzip();
    Ok(MartingaleReport {
        steps,
        rms,
        runs,
        tail_slope: ls_slope(&lx, &ly),
        envelope_exponent,
        envelope_constant,
        tail_start: tail_start.max(record_every),
        envelope_respected,
    })
}

/// Least-squares slope; NaN with fewer than two points.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    if x.len() < 2 {
        return f64::NAN;
    }
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Order-fixed pairwise summation.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        n if n <= 8 => v.iter().sum(),
        n => pairwise_sum(&v[..n / 2]) + pairwise_sum(&v[n / 2..]),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionReport {
    /// Largest `||Phi(k,1) f|| / (prod_{j=1}^{k} (1 - a_j lambda_j) ||f||)` seen.
    pub max_ratio: f64,
    pub trials: usize,
    pub checkpoints: usize,
}

/// Applies `f -> (1 - a_k lambda_k) f - a_k f(x_k) K_{x_k}` for `k = 1..=horizon`
/// to random expansions along random inputs and compares exact norms with the
/// scalar product at checkpoints.
pub fn contraction_suite(
    kernel: &Arc<Kernel>,
    schedule: GainSchedule,
    horizon: usize,
    trials: usize,
    seed: u64,
) -> Result<ContractionReport> {
    if trials == 0 || horizon == 0 {
        return Err(Error::Parameter("trials and horizon must be positive".into()));
    }
    let prefix = schedule.log_product_prefix(horizon);
    let dom = kernel.domain();
    let checkpoint = |k: usize| k <= 10 || k % 25 == 0 || k == horizon;
    let results: Vec<(f64, usize)> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t);
            let m = rng.random_range(1..=8usize);
            let centers: Vec<f64> = (0..m).map(|_| rng.random_range(dom.lo()..=dom.hi())).collect();
            let coefs: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
            let mut f = KernelExpansion::new(kernel.clone(), centers, coefs)?;
            let f_norm = f.norm();
            let (mut worst, mut count) = (0.0f64, 0usize);
            for k in 1..=horizon {
                let x = rng.random_range(dom.lo()..=dom.hi());
                f = f.apply_step_operator(x, schedule.gain(k), schedule.reg(k))?;
                if checkpoint(k) {
                    let ratio = if f_norm == 0.0 { 0.0 } else { f.norm() / (prefix[k].exp() * f_norm) };
                    worst = worst.max(ratio);
                    count += 1;
                }
            }
            Ok((worst, count))
        })
        .collect::<Result<_>>()?;
    Ok(ContractionReport {
        max_ratio: results.iter().map(|r| r.0).fold(0.0, f64::max),
        trials,
        checkpoints: results.iter().map(|r| r.1).sum(),
    })
}

/// The three scalar sequences at one `k`, with their envelopes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateRow {
    pub k: usize,
    /// `sum_{i=1}^{k} a_i^2 prod_{j=i+1}^{k} (1 - a_j lambda_j)`
    pub a_sum: f64,
    /// `a_sum / ((k+1)^{tau2 - tau1} ln(k+1))`
    pub a_ratio: f64,
    /// `sum_{i=1}^{k} a_i^2 prod_{j=i+1}^{k} (1 - a_j lambda_j) sqrt(k - i + 1)`
    pub b_sum: f64,
    /// `b_sum / ((k+1)^{(3 tau2 - tau1)/2} ln^{3/2}(k+1))`
    pub b_ratio: f64,
    /// `prod_{j=1}^{k} (1 - a_j lambda_j)`
    pub product: f64,
    /// `product * (k+1)^{tau1 + tau2}`
    pub product_ratio: f64,
}

/// Roughly `per_decade` log-spaced integers in `[lo, hi]`, both ends included.
pub fn log_spaced(lo: usize, hi: usize, per_decade: usize) -> Vec<usize> {
    let lo = lo.max(1);
    let (a, b) = ((lo as f64).log10(), (hi as f64).log10());
    let n = (((b - a) * per_decade as f64).ceil() as usize).max(1);
    let mut v: Vec<usize> = (0..=n)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / n as f64).round() as usize)
        .map(|k| k.clamp(lo, hi))
        .collect();
    v.dedup();
    v
}

/// Exact values of the three sequences at the given `k`.
pub fn rate_values(schedule: GainSchedule, ks: &[usize]) -> Vec<RateRow> {
    let k_max = ks.iter().copied().max().unwrap_or(0);
    let prefix = schedule.log_product_prefix(k_max);
    let mut a_seq = vec![0.0; k_max + 1];
    for k in 1..=k_max {
        a_seq[k] = (1.0 - schedule.shrink_rate(k)) * a_seq[k - 1] + schedule.gain(k).powi(2);
    }
    let (t1, t2) = (schedule.tau1(), schedule.tau2());
    ks.par_iter()
        .map(|&k| {
            let terms: Vec<f64> = (1..=k)
                .map(|i| schedule.gain(i).powi(2) * (prefix[k] - prefix[i]).exp() * ((k - i + 1) as f64).sqrt())
                .collect();
            let b_sum = pairwise_sum(&terms);
            let t = (k + 1) as f64;
            let product = if k == 0 { 1.0 } else { prefix[k].exp() };
            RateRow {
                k,
                a_sum: a_seq[k],
                a_ratio: a_seq[k] / (t.powf(t2 - t1) * t.ln()),
                b_sum,
                b_ratio: b_sum / (t.powf((3.0 * t2 - t1) / 2.0) * t.ln().powf(1.5)),
                product,
                product_ratio: product * t.powf(t1 + t2),
            }
        })
        .collect()
}

/// [`rate_values`] on a log-spaced grid of `[100, k_max]`.
pub fn rate_bound_suite(schedule: GainSchedule, k_max: usize) -> Result<Vec<RateRow>> {
    if k_max < 100 {
        return Err(Error::Parameter(format!("k_max must be at least 100, got {k_max}")));
    }
    Ok(rate_values(schedule, &log_spaced(100, k_max, 20)))
}
