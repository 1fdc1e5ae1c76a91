//! Data streams `y_k = f*(x_k) + v_k` with independent, possibly
//! non-identically distributed inputs, and exact calculus on their
//! piecewise-constant marginal densities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::kernel::Interval;
use crate::rkhs::TargetFunction;

/// Probability measure with a piecewise-constant density. Cell `i` is
/// `[breakpoints[i], breakpoints[i + 1])` with density `densities[i]`; the last
/// cell is closed on the right.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalMeasure {
    breakpoints: Vec<f64>,
    densities: Vec<f64>,
}

impl MarginalMeasure {
    pub fn new(breakpoints: Vec<f64>, densities: Vec<f64>) -> Result<Self> {
        let m = Self::unnormalized(breakpoints, densities)?;
        let mass = m.mass();
        if (mass - 1.0).abs() > 1e-12 {
            return Err(Error::Parameter(format!("measure has total mass {mass}, expected 1")));
        }
        Ok(m)
    }

    fn unnormalized(breakpoints: Vec<f64>, densities: Vec<f64>) -> Result<Self> {
        if breakpoints.len() < 2 || breakpoints.len() != densities.len() + 1 {
            return Err(Error::Parameter(format!(
                "{} breakpoints do not bound {} cells",
                breakpoints.len(),
                densities.len()
            )));
        }
        if breakpoints.iter().any(|b| !b.is_finite()) || breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Parameter("breakpoints must be finite and strictly increasing".into()));
        }
        if densities.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::Parameter("densities must be finite and nonnegative".into()));
        }
        Ok(Self {
            breakpoints,
            densities,
        })
    }

    /// Uniform distribution on `[lo, hi]` inside `domain`.
    pub fn uniform(domain: Interval, lo: f64, hi: f64) -> Result<Self> {
        if !(domain.contains(lo) && domain.contains(hi) && lo < hi) {
            return Err(Error::Parameter(format!("[{lo}, {hi}] is not a subinterval of the domain")));
        }
        Self::uniform_with_density(domain, lo, hi, 1.0 / (hi - lo))
    }

    fn uniform_with_density(domain: Interval, lo: f64, hi: f64, density: f64) -> Result<Self> {
        let mut b = vec![domain.lo()];
        let mut d = Vec::new();
        if lo > domain.lo() {
            b.push(lo);
            d.push(0.0);
        }
        b.push(hi);
        d.push(density);
        if hi < domain.hi() {
            b.push(domain.hi());
            d.push(0.0);
        }
        Self::new(b, d)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn densities(&self) -> &[f64] {
        &self.densities
    }

    pub fn domain(&self) -> Interval {
        Interval::new(self.breakpoints[0], *self.breakpoints.last().unwrap()).expect("validated breakpoints")
    }

    pub fn mass(&self) -> f64 {
        self.cells().map(|(lo, hi, d)| d * (hi - lo)).sum()
    }

    fn cells(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.breakpoints.windows(2).zip(&self.densities).map(|(w, &d)| (w[0], w[1], d))
    }

    /// Density at `t`, right-open convention at interior breakpoints; 0 off the domain.
    pub fn density_at(&self, t: f64) -> f64 {
        let b = &self.breakpoints;
        if t < b[0] || t > b[b.len() - 1] {
            return 0.0;
        }
        let i = b.partition_point(|&p| p <= t).clamp(1, self.densities.len()) - 1;
        self.densities[i]
    }

    fn same_domain(&self, other: &Self) -> Result<()> {
        if self.domain() == other.domain() {
            Ok(())
        } else {
            Err(Error::Parameter("measures live on different domains".into()))
        }
    }

    fn merged_breakpoints<'a>(measures: impl IntoIterator<Item = &'a Self>) -> Vec<f64> {
        let mut all: Vec<f64> = measures.into_iter().flat_map(|m| m.breakpoints.iter().copied()).collect();
        all.sort_by(f64::total_cmp);
        all.dedup();
        all
    }

    /// `int |m_self - m_other|`, exact on the merged partition. Upper bound for
    /// (and here the stand-in for) the dual-norm distance of the two measures.
    pub fn l1_distance(&self, other: &Self) -> Result<f64> {
        self.same_domain(other)?;
        let b = Self::merged_breakpoints([self, other]);
        Ok(b.windows(2)
            .map(|w| {
                let mid = 0.5 * (w[0] + w[1]);
                (self.density_at(mid) - other.density_at(mid)).abs() * (w[1] - w[0])
            })
            .sum())
    }

    /// Pointwise density average.
    pub fn average(measures: &[Self]) -> Result<Self> {
        let first = measures
            .first()
            .ok_or_else(|| Error::Parameter("cannot average an empty list of measures".into()))?;
        for m in &measures[1..] {
            first.same_domain(m)?;
        }
        let b = Self::merged_breakpoints(measures);
        let n = measures.len() as f64;
        let d = b
            .windows(2)
            .map(|w| {
                let mid = 0.5 * (w[0] + w[1]);
                measures.iter().map(|m| m.density_at(mid)).sum::<f64>() / n
            })
            .collect();
        Self::new(b, d)
    }

    /// True iff the density is at least `scale` on every cell of positive
    /// length, i.e. the measure dominates `scale * Lebesgue`.
    pub fn dominates(&self, scale: f64) -> bool {
        self.densities.iter().all(|&d| d >= scale)
    }

    /// Inverse-CDF transform of `u in [0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        let mut acc = 0.0;
        let last = self.densities.len() - 1;
        let mut fallback = self.breakpoints[0];
        for (i, (lo, hi, d)) in self.cells().enumerate() {
            if d == 0.0 {
                continue;
            }
            let mass = d * (hi - lo);
            fallback = hi;
            if u < acc + mass || i == last {
                return (lo + (u - acc) / d).clamp(lo, hi);
            }
            acc += mass;
        }
        // u beyond the accumulated mass (roundoff): right end of the last charged cell
        fallback
    }

    /// Midpoint weights `w_j = m(t_j) * width` on a uniform grid.
    pub fn cell_weights(&self, nodes: &[f64], width: f64) -> Vec<f64> {
        nodes.iter().map(|&t| self.density_at(t) * width).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    Zero,
    /// Centered normal noise with the given variance.
    Gaussian { variance: f64 },
}

impl NoiseModel {
    pub fn gaussian(variance: f64) -> Result<Self> {
        if !(variance.is_finite() && variance >= 0.0) {
            return Err(Error::Parameter(format!("noise variance must be nonnegative, got {variance}")));
        }
        Ok(NoiseModel::Gaussian { variance })
    }

    /// Bound on the conditional variance.
    pub fn beta(&self) -> f64 {
        match self {
            NoiseModel::Zero => 0.0,
            NoiseModel::Gaussian { variance } => *variance,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.beta() == 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StreamKind {
    /// `x_k` uniform on `I_k`: the whole domain for `k = 0`, then alternately
    /// `[0, k/(k+1)]` (odd `k`) and `[1/(k+1), 1]` (even `k`) in unit coordinates.
    ShiftingUniform,
    Iid(MarginalMeasure),
    /// Cycles through the listed marginals: `x_k ~ measures[k % len]`.
    Scripted(Vec<MarginalMeasure>),
}

#[derive(Debug, Clone)]
pub struct StreamSpec {
    kind: StreamKind,
    noise: NoiseModel,
    target: TargetFunction,
    seed: u64,
}

/// One observation of the stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub x: f64,
    pub y: f64,
    pub noise: f64,
}

impl StreamSpec {
    pub fn new(kind: StreamKind, noise: NoiseModel, target: TargetFunction, seed: u64) -> Result<Self> {
        let domain = target.kernel().domain();
        match &kind {
            StreamKind::ShiftingUniform => {}
            StreamKind::Iid(m) => check_measure_domain(m, domain)?,
            StreamKind::Scripted(ms) => {
                if ms.is_empty() {
                    return Err(Error::Parameter("scripted stream needs at least one measure".into()));
                }
                for m in ms {
                    check_measure_domain(m, domain)?;
                }
            }
        }
        Ok(Self {
            kind,
            noise,
            target,
            seed,
        })
    }

    pub fn kind(&self) -> &StreamKind {
        &self.kind
    }

    pub fn noise(&self) -> NoiseModel {
        self.noise
    }

    pub fn target(&self) -> &TargetFunction {
        &self.target
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn domain(&self) -> Interval {
        self.target.kernel().domain()
    }

    pub fn with_noise(&self, noise: NoiseModel) -> Self {
        Self { noise, ..self.clone() }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    /// Marginal law of `x_k`.
    pub fn marginal_at(&self, k: usize) -> MarginalMeasure {
        match &self.kind {
            StreamKind::ShiftingUniform => shifting_uniform(self.domain(), k),
            StreamKind::Iid(m) => m.clone(),
            StreamKind::Scripted(ms) => ms[k % ms.len()].clone(),
        }
    }

    /// Random source for Monte-Carlo run `run`.
    pub fn rng(&self, run: u64) -> StreamRng {
        StreamRng::new(self.seed, run)
    }

    /// Draw `(x_k, y_k)`; depends only on `(seed, run, k)`.
    pub fn sample(&self, k: usize, rng: &StreamRng) -> Sample {
        let mut r = rng.at_step(k);
        let u: f64 = r.random();
        let x = self.marginal_at(k).quantile(u);
        let noise = match self.noise {
            NoiseModel::Zero => 0.0,
            NoiseModel::Gaussian { variance } => Normal::new(0.0, variance.sqrt())
                .expect("validated variance")
                .sample(&mut r),
        };
        let y = self.target.expansion().eval_at(x) + noise;
        Sample { x, y, noise }
    }
}

fn check_measure_domain(m: &MarginalMeasure, domain: Interval) -> Result<()> {
    if m.domain() == domain {
        Ok(())
    } else {
        Err(Error::Parameter("stream measure does not span the kernel domain".into()))
    }
}

/// Drift between consecutive marginals, measured as the L1 density distance.
pub fn dual_norm_drift(mu: &MarginalMeasure, nu: &MarginalMeasure) -> Result<f64> {
    mu.l1_distance(nu)
}

/// The shifting-uniform marginal at step `k`, mapped affinely onto `domain`.
pub fn shifting_uniform(domain: Interval, k: usize) -> MarginalMeasure {
    let (lo, len) = (domain.lo(), domain.length());
    let map = |t: f64| if t == 1.0 { domain.hi() } else { lo + len * t };
    let (a, b, density) = if k == 0 {
        (0.0, 1.0, 1.0)
    } else {
        let kf = k as f64;
        let density = (kf + 1.0) / kf;
        if k % 2 == 1 {
            (0.0, kf / (kf + 1.0), density)
        } else {
            (1.0 / (kf + 1.0), 1.0, density)
        }
    };
    MarginalMeasure::uniform_with_density(domain, map(a), map(b), density / len)
        .expect("shifting-uniform marginal is a probability measure")
}

/// Counter-addressed random source: the draws of step `k` in run `run` are a
/// fixed window of the ChaCha keystream, independent of evaluation order.
#[derive(Debug, Clone)]
pub struct StreamRng {
    base: ChaCha8Rng,
}

/// 32-bit words reserved per step.
const WORDS_PER_STEP: u128 = 64;

impl StreamRng {
    pub fn new(seed: u64, run: u64) -> Self {
        let mut base = ChaCha8Rng::seed_from_u64(seed);
        base.set_stream(run);
        Self { base }
    }

    pub fn at_step(&self, k: usize) -> ChaCha8Rng {
        let mut r = self.base.clone();
        r.set_word_pos(k as u128 * WORDS_PER_STEP);
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::Kernel;
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn unit() -> Interval {
        Interval::unit()
    }

    fn spec(kind: StreamKind, noise: NoiseModel) -> StreamSpec {
        let k = Arc::new(Kernel::gaussian(1.0, unit()).unwrap());
        StreamSpec::new(kind, noise, TargetFunction::kernel_section(k, 0.0).unwrap(), 42).unwrap()
    }

    #[test]
    fn shifting_uniform_first_marginals() {
        let m0 = shifting_uniform(unit(), 0);
        assert_eq!(m0.breakpoints(), &[0.0, 1.0]);
        assert_eq!(m0.densities(), &[1.0]);
        let m1 = shifting_uniform(unit(), 1);
        assert_eq!(m1.breakpoints(), &[0.0, 0.5, 1.0]);
        assert_eq!(m1.densities(), &[2.0, 0.0]);
        let m2 = shifting_uniform(unit(), 2);
        assert_eq!(m2.breakpoints(), &[0.0, 1.0 / 3.0, 1.0]);
        assert_eq!(m2.densities(), &[0.0, 1.5]);
    }

    #[test]
    fn shifting_uniform_density_formula() {
        for k in 1..=10_000usize {
            let m = shifting_uniform(unit(), k);
            let expected = (k as f64 + 1.0) / k as f64;
            assert!(m.densities().iter().all(|&d| d == 0.0 || d == expected));
            assert!((m.mass() - 1.0).abs() <= 1e-12);
            let inside = if k % 2 == 1 { 0.0 } else { 1.0 - 1e-9 };
            assert_eq!(m.density_at(inside), expected);
        }
    }

    #[test]
    fn shifting_uniform_on_other_domain() {
        let d = Interval::new(-1.0, 3.0).unwrap();
        let m = shifting_uniform(d, 1);
        assert_eq!(m.breakpoints(), &[-1.0, 1.0, 3.0]);
        assert_relative_eq!(m.mass(), 1.0);
    }

    #[test]
    fn measure_validation() {
        assert!(MarginalMeasure::new(vec![0.0, 1.0], vec![0.5]).is_err());
        assert!(MarginalMeasure::new(vec![0.0, 0.5, 0.5, 1.0], vec![1.0, 1.0, 1.0]).is_err());
        assert!(MarginalMeasure::new(vec![0.0, 0.5, 1.0], vec![3.0, -1.0]).is_err());
        assert!(MarginalMeasure::new(vec![0.0], vec![]).is_err());
        assert!(MarginalMeasure::uniform(unit(), 0.5, 2.0).is_err());
    }

    #[test]
    fn l1_examples() {
        let u = MarginalMeasure::uniform(unit(), 0.0, 1.0).unwrap();
        assert_eq!(u.l1_distance(&u).unwrap(), 0.0);
        let half = MarginalMeasure::uniform(unit(), 0.0, 0.5).unwrap();
        assert_relative_eq!(u.l1_distance(&half).unwrap(), 1.0, max_relative = 1e-15);
        let m1 = shifting_uniform(unit(), 1);
        let m2 = shifting_uniform(unit(), 2);
        assert_relative_eq!(m1.l1_distance(&m2).unwrap(), 1.5, max_relative = 1e-14);
        let other = MarginalMeasure::uniform(Interval::new(0.0, 2.0).unwrap(), 0.0, 2.0).unwrap();
        assert!(u.l1_distance(&other).is_err());
    }

    #[test]
    fn shifting_uniform_drift_closed_form() {
        // odd k: the closed form 2(k+2)/(k+1)^2; even k: the same integral by hand,
        // m_k on [1/(k+1), 1] and m_{k+1} on [0, (k+1)/(k+2)].
        for k in 1..200usize {
            let kf = k as f64;
            let d = shifting_uniform(unit(), k).l1_distance(&shifting_uniform(unit(), k + 1)).unwrap();
            let expected = if k % 2 == 1 {
                2.0 * (kf + 2.0) / ((kf + 1.0) * (kf + 1.0))
            } else {
                let (mk, mk1) = ((kf + 1.0) / kf, (kf + 2.0) / (kf + 1.0));
                let left = mk1 / (kf + 1.0);
                let middle = (mk - mk1).abs() * ((kf + 1.0) / (kf + 2.0) - 1.0 / (kf + 1.0));
                let right = mk / (kf + 2.0);
                left + middle + right
            };
            assert_relative_eq!(d, expected, max_relative = 1e-12);
        }
    }

    #[test]
    fn averaging() {
        let u = MarginalMeasure::uniform(unit(), 0.0, 1.0).unwrap();
        assert_eq!(MarginalMeasure::average(std::slice::from_ref(&u)).unwrap(), u);
        let a = MarginalMeasure::uniform(unit(), 0.0, 0.5).unwrap();
        let b = MarginalMeasure::uniform(unit(), 0.5, 1.0).unwrap();
        let avg = MarginalMeasure::average(&[a, b]).unwrap();
        assert!(avg.densities().iter().all(|&d| d == 1.0));
        assert!(MarginalMeasure::average(&[]).is_err());
        let s = MarginalMeasure::average(&[shifting_uniform(unit(), 1), shifting_uniform(unit(), 2)]).unwrap();
        assert!(s.dominates(0.5));
        assert!(s.densities().iter().all(|&d| 2.0 * d >= 1.0));
    }

    #[test]
    fn domination() {
        let u = MarginalMeasure::uniform(unit(), 0.0, 1.0).unwrap();
        assert!(u.dominates(1.0));
        let half = MarginalMeasure::uniform(unit(), 0.0, 0.5).unwrap();
        assert!(!half.dominates(1e-12));
        for k in 0..=1000usize {
            let pair = [shifting_uniform(unit(), k), shifting_uniform(unit(), k + 1)];
            assert!(MarginalMeasure::average(&pair).unwrap().dominates(0.5), "k={k}");
        }
    }

    #[test]
    fn quantile_hits_support() {
        let m = shifting_uniform(unit(), 4);
        for i in 0..1000 {
            let x = m.quantile(i as f64 / 1000.0);
            assert!((0.2..=1.0).contains(&x));
        }
        assert_eq!(m.quantile(0.0), 0.2);
    }

    #[test]
    fn noise_free_sample_is_exact() {
        let s = spec(StreamKind::ShiftingUniform, NoiseModel::Zero);
        let rng = s.rng(0);
        for k in 0..100 {
            let smp = s.sample(k, &rng);
            assert_eq!(smp.y, (-smp.x * smp.x).exp());
            assert_eq!(smp.noise, 0.0);
        }
    }

    #[test]
    fn samples_are_addressed_by_step() {
        let s = spec(StreamKind::ShiftingUniform, NoiseModel::gaussian(0.1).unwrap());
        let rng = s.rng(3);
        let a = s.sample(17, &rng);
        let _ = s.sample(5, &rng);
        assert_eq!(a, s.sample(17, &rng));
        assert_eq!(a, s.sample(17, &s.rng(3)));
        assert_ne!(a, s.sample(17, &s.rng(4)));
    }

    #[test]
    fn gaussian_noise_moments() {
        let s = spec(
            StreamKind::Iid(MarginalMeasure::uniform(unit(), 0.0, 1.0).unwrap()),
            NoiseModel::gaussian(0.1).unwrap(),
        );
        let rng = s.rng(0);
        let n = 100_000;
        let v: Vec<f64> = (0..n).map(|k| s.sample(k, &rng).noise).collect();
        let mean = v.iter().sum::<f64>() / n as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        assert!(mean.abs() < 0.01, "{mean}");
        assert!((var - 0.1).abs() < 0.01, "{var}");
    }

    #[test]
    fn samples_follow_marginal() {
        let s = spec(StreamKind::ShiftingUniform, NoiseModel::Zero);
        let rng = s.rng(1);
        for k in 1..2000usize {
            let x = s.sample(k, &rng).x;
            assert!(s.marginal_at(k).density_at(x) > 0.0 || x == 1.0 || x == 0.0, "k={k} x={x}");
        }
    }

    #[test]
    fn scripted_streams_cycle() {
        let a = MarginalMeasure::uniform(unit(), 0.0, 0.5).unwrap();
        let b = MarginalMeasure::uniform(unit(), 0.5, 1.0).unwrap();
        let s = spec(StreamKind::Scripted(vec![a.clone(), b.clone()]), NoiseModel::Zero);
        assert_eq!(s.marginal_at(0), a);
        assert_eq!(s.marginal_at(3), b);
        let k = Arc::new(Kernel::gaussian(1.0, unit()).unwrap());
        let t = TargetFunction::kernel_section(k, 0.0).unwrap();
        assert!(StreamSpec::new(StreamKind::Scripted(vec![]), NoiseModel::Zero, t, 1).is_err());
    }
}
