//! Persistence-of-excitation evidence over a finite range of windows: ordered
//! eigenvalues of the windowed operator `sum_{i=k+1}^{k+h} T_i`, and the
//! sufficient condition that the window-averaged marginal dominates a scaled
//! Lebesgue measure.

use std::ops::RangeInclusive;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::path_oracle::DiscretizedOperator;
use crate::stream::{MarginalMeasure, StreamSpec};

pub const DEFAULT_FLOOR_TOLERANCE: f64 = 1e-12;

/// `sum_{i=k+1}^{k+h}` of the discretized per-step operators.
pub fn windowed_operator(
    kernel: &Arc<Kernel>,
    spec: &StreamSpec,
    k: usize,
    h: usize,
    n: usize,
) -> Result<DiscretizedOperator> {
    if h == 0 {
        return Err(Error::Parameter("window length must be at least 1".into()));
    }
    let mut op = DiscretizedOperator::discretize(kernel, &spec.marginal_at(k + 1), n)?;
    for i in k + 2..=k + h {
        op = op.sum(&DiscretizedOperator::discretize(kernel, &spec.marginal_at(i), n)?)?;
    }
    Ok(op)
}

/// Outcome of the measure-domination check.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureDomination {
    pub scale: f64,
    pub holds: bool,
    pub first_failure: Option<usize>,
    /// Window average at the first failing `k`.
    pub witness: Option<MarginalMeasure>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PEReport {
    pub h: usize,
    pub j_max: usize,
    pub k_range: RangeInclusive<usize>,
    pub floor_tolerance: f64,
    /// `inf_k Lambda_j` for `j = 1..=j_max`.
    pub per_j_infimum: Vec<f64>,
    /// `(k, top j_max eigenvalues)` for every tested `k`.
    pub rows: Vec<(usize, Vec<f64>)>,
    pub measure_domination: Option<MeasureDomination>,
}

impl PEReport {
    /// Every infimum above the floor tolerance.
    pub fn eigen_verdict(&self) -> bool {
        self.per_j_infimum.iter().all(|&v| v > self.floor_tolerance)
    }

    /// Last index `j` (1-based) whose infimum clears the floor.
    pub fn excited_modes(&self) -> usize {
        self.per_j_infimum.iter().take_while(|&&v| v > self.floor_tolerance).count()
    }
}

pub fn eigen_floor(
    kernel: &Arc<Kernel>,
    spec: &StreamSpec,
    h: usize,
    j_max: usize,
    k_range: RangeInclusive<usize>,
    n: usize,
) -> Result<PEReport> {
    if j_max == 0 || j_max > n {
        return Err(Error::Parameter(format!("j_max must lie in 1..={n}, got {j_max}")));
    }
    if k_range.is_empty() {
        return Err(Error::Parameter("empty k range".into()));
    }
    let rows: Vec<(usize, Vec<f64>)> = k_range
        .clone()
        .into_par_iter()
        .map(|k| {
            let op = windowed_operator(kernel, spec, k, h, n)?;
            let mut e = op.eigenvalues();
            e.truncate(j_max);
            Ok((k, e))
        })
        .collect::<Result<_>>()?;
    let mut per_j_infimum = vec![f64::INFINITY; j_max];
    for (_, e) in &rows {
        for (inf, &v) in per_j_infimum.iter_mut().zip(e) {
            *inf = inf.min(v);
        }
    }
    Ok(PEReport {
        h,
        j_max,
        k_range,
        floor_tolerance: DEFAULT_FLOOR_TOLERANCE,
        per_j_infimum,
        rows,
        measure_domination: None,
    })
}

/// Checks `(1/h) sum_{i=k+1}^{k+h} rho_i >= scale * Lebesgue` for every `k` in range.
pub fn measure_pe_check(
    spec: &StreamSpec,
    h: usize,
    scale: f64,
    k_range: RangeInclusive<usize>,
) -> Result<MeasureDomination> {
    if h == 0 {
        return Err(Error::Parameter("window length must be at least 1".into()));
    }
    if !(scale > 0.0) {
        return Err(Error::Parameter(format!("domination scale must be positive, got {scale}")));
    }
    for k in k_range {
        let window: Vec<MarginalMeasure> = (k + 1..=k + h).map(|i| spec.marginal_at(i)).collect();
        let avg = MarginalMeasure::average(&window)?;
        if !avg.dominates(scale) {
            return Ok(MeasureDomination {
                scale,
                holds: false,
                first_failure: Some(k),
                witness: Some(avg),
            });
        }
    }
    Ok(MeasureDomination {
        scale,
        holds: true,
        first_failure: None,
        witness: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::Interval;
    use crate::rkhs::TargetFunction;
    use crate::stream::{NoiseModel, StreamKind};
    use proptest::prelude::*;

    fn kern() -> Arc<Kernel> {
        Arc::new(Kernel::gaussian(1.0, Interval::unit()).unwrap())
    }

    fn spec(kind: StreamKind) -> StreamSpec {
        let star = TargetFunction::kernel_section(kern(), 0.0).unwrap();
        StreamSpec::new(kind, NoiseModel::Zero, star, 3).unwrap()
    }

    fn uniform() -> MarginalMeasure {
        MarginalMeasure::uniform(Interval::unit(), 0.0, 1.0).unwrap()
    }

    #[test]
    fn single_window_is_single_operator() {
        let s = spec(StreamKind::ShiftingUniform);
        let w = windowed_operator(&kern(), &s, 6, 1, 32).unwrap();
        let d = DiscretizedOperator::discretize(&kern(), &s.marginal_at(7), 32).unwrap();
        assert_eq!(w.weights(), d.weights());
        assert!(windowed_operator(&kern(), &s, 6, 0, 32).is_err());
    }

    #[test]
    fn two_step_window_density_at_least_one() {
        let s = spec(StreamKind::ShiftingUniform);
        for k in 0..300 {
            let w = windowed_operator(&kern(), &s, k, 2, 64).unwrap();
            let width = 1.0 / 64.0;
            assert!(w.weights().iter().all(|&v| v / width >= 1.0 - 1e-12), "k={k}");
        }
    }

    #[test]
    fn iid_infima_constant() {
        let s = spec(StreamKind::Iid(uniform()));
        let r = eigen_floor(&kern(), &s, 3, 5, 0..=20, 32).unwrap();
        for (_, e) in &r.rows {
            assert_eq!(e, &r.rows[0].1);
        }
        assert_eq!(r.per_j_infimum, r.rows[0].1);
        assert!(eigen_floor(&kern(), &s, 3, 33, 0..=2, 32).is_err());
    }

    #[test]
    fn half_supported_stream_still_excited() {
        let half = MarginalMeasure::uniform(Interval::unit(), 0.0, 0.5).unwrap();
        let s = spec(StreamKind::Iid(half.clone()));
        let r = eigen_floor(&kern(), &s, 2, 3, 0..=4, 64).unwrap();
        assert!(r.per_j_infimum.iter().all(|&v| v > 0.0));
        assert!(!measure_pe_check(&s, 2, 0.01, 0..=4).unwrap().holds);
    }

    #[test]
    fn infima_are_ordered() {
        let s = spec(StreamKind::ShiftingUniform);
        let r = eigen_floor(&kern(), &s, 2, 6, 0..=40, 64).unwrap();
        assert!(r.per_j_infimum.windows(2).all(|w| w[0] >= w[1]));
        assert!(r.per_j_infimum.iter().all(|v| v.is_finite()));
        assert_eq!(r.rows.len(), 41);
    }

    #[test]
    fn measure_domination_examples() {
        let s = spec(StreamKind::ShiftingUniform);
        let ok = measure_pe_check(&s, 2, 0.5, 0..=1000).unwrap();
        assert!(ok.holds && ok.first_failure.is_none());
        let single = measure_pe_check(&s, 1, 1e-6, 0..=10).unwrap();
        assert_eq!(single.first_failure, Some(0));
        assert!(single.witness.is_some());
        let iid = spec(StreamKind::Iid(uniform()));
        assert!(measure_pe_check(&iid, 1, 1.0, 0..=10).unwrap().holds);
        assert!(measure_pe_check(&iid, 1, 0.0, 0..=10).is_err());
    }

    #[test]
    fn domination_implies_eigenvalue_domination() {
        let s = spec(StreamKind::ShiftingUniform);
        let (h, scale, n) = (2, 0.5, 64);
        let base = DiscretizedOperator::discretize(&kern(), &uniform(), n).unwrap().eigenvalues();
        for k in 0..60 {
            assert!(measure_pe_check(&s, h, scale, k..=k).unwrap().holds);
            let e = windowed_operator(&kern(), &s, k, h, n).unwrap().eigenvalues();
            for j in 0..10 {
                assert!(e[j] >= h as f64 * scale * base[j] - 1e-9, "k={k} j={j}");
            }
        }
    }

    fn random_measure(cuts: &[f64], dens: &[f64]) -> MarginalMeasure {
        let mut bps = vec![0.0];
        let mut c: Vec<f64> = cuts.to_vec();
        c.sort_by(f64::total_cmp);
        c.dedup();
        bps.extend(c.into_iter().filter(|&x| x > 1e-3 && x < 1.0 - 1e-3));
        bps.push(1.0);
        let d: Vec<f64> = (0..bps.len() - 1).map(|i| dens[i % dens.len()]).collect();
        let mass: f64 = d.iter().zip(bps.windows(2)).map(|(d, w)| d * (w[1] - w[0])).sum();
        MarginalMeasure::new(bps, d.iter().map(|v| v / mass).collect()).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn adding_a_measure_never_lowers_eigenvalues(
            cuts_a in prop::collection::vec(0.0f64..1.0, 1..4),
            dens_a in prop::collection::vec(0.05f64..3.0, 1..4),
            cuts_b in prop::collection::vec(0.0f64..1.0, 1..4),
            dens_b in prop::collection::vec(0.05f64..3.0, 1..4),
        ) {
            let a = DiscretizedOperator::discretize(&kern(), &random_measure(&cuts_a, &dens_a), 32).unwrap();
            let b = DiscretizedOperator::discretize(&kern(), &random_measure(&cuts_b, &dens_b), 32).unwrap();
            let before = a.eigenvalues();
            let after = a.sum(&b).unwrap().eigenvalues();
            for j in 0..10 {
                prop_assert!(after[j] >= before[j] - 1e-12);
            }
        }
    }
}
