use std::sync::Arc;

use proptest::prelude::*;

use rkhs_online::stream::shifting_uniform;
use rkhs_online::{
    dual_norm_drift, GainSchedule, Interval, Kernel, KernelExpansion, LearnerState, MarginalMeasure, NoiseModel,
    PathOracle, StreamKind, StreamSpec, TargetFunction,
};

fn gaussian() -> Arc<Kernel> {
    Arc::new(Kernel::gaussian(1.0, Interval::unit()).unwrap())
}

fn expansion() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..8).prop_flat_map(|n| (prop::collection::vec(0.0..=1.0f64, n), prop::collection::vec(-2.0..2.0f64, n)))
}

fn integrate_l1(mu: &MarginalMeasure, nu: &MarginalMeasure) -> f64 {
    // fine midpoint rule away from the breakpoints; exact for these densities up to the cells they cut
    let n = 1 << 16;
    let w = 1.0 / n as f64;
    (0..n)
        .map(|i| {
            let t = (i as f64 + 0.5) * w;
            (mu.density_at(t) - nu.density_at(t)).abs() * w
        })
        .sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reproducing_property((c, a) in expansion(), x in 0.0..=1.0f64) {
        let k = gaussian();
        let f = KernelExpansion::new(k.clone(), c, a).unwrap();
        let kx = KernelExpansion::single(k, x, 1.0).unwrap();
        prop_assert!((f.inner(&kx).unwrap() - f.evaluate(x).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn bilinearity((c1, a1) in expansion(), (c2, a2) in expansion(), (c3, a3) in expansion(), s in -3.0..3.0f64, t in -3.0..3.0f64) {
        let k = gaussian();
        let f = KernelExpansion::new(k.clone(), c1, a1).unwrap();
        let g = KernelExpansion::new(k.clone(), c2, a2).unwrap();
        let h = KernelExpansion::new(k, c3, a3).unwrap();
        let lhs = KernelExpansion::combine(s, &f, t, &g).unwrap().inner(&h).unwrap();
        let rhs = s * f.inner(&h).unwrap() + t * g.inner(&h).unwrap();
        let scale = 1.0 + (s.abs() * f.norm() + t.abs() * g.norm()) * h.norm();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * scale);
    }

    #[test]
    fn merging_preserves_values((c, a) in expansion(), dup in 0usize..8) {
        let k = gaussian();
        let mut c2 = c.clone();
        let mut a2 = a.clone();
        let i = dup % c.len();
        c2.push(c[i]);
        a2.push(0.5);
        let f = KernelExpansion::new(k, c2, a2).unwrap();
        let m = f.merged();
        prop_assert!(m.len() < f.len());
        for j in 0..128 {
            let x = j as f64 / 127.0;
            prop_assert!((m.evaluate(x).unwrap() - f.evaluate(x).unwrap()).abs() <= 1e-12);
        }
    }

    #[test]
    fn learner_norm_recursion(steps in prop::collection::vec((0.0..=1.0f64, -2.0..2.0f64), 1..40)) {
        let k = gaussian();
        let s = GainSchedule::reference();
        let mut state = LearnerState::init(k.clone(), s, &KernelExpansion::zero(k.clone())).unwrap();
        for (i, &(x, y)) in steps.iter().enumerate() {
            let before = state.hypothesis();
            let rep = state.step_mut(x, y).unwrap();
            let after = state.hypothesis();
            let (a, l) = (s.gain(i), s.reg(i));
            // operator form against the coefficient recursion
            let direct = KernelExpansion::combine(
                1.0 - a * l,
                &before,
                -a * (before.evaluate(x).unwrap() - y),
                &KernelExpansion::single(k.clone(), x, 1.0).unwrap(),
            )
            .unwrap();
            prop_assert!(after.distance(&direct).unwrap() <= 1e-12 * (1.0 + before.norm()));
            let bound = (1.0 - a * l) * before.norm() + a * (rep.prediction - y).abs() * k.kappa().sqrt();
            prop_assert!(after.norm() <= bound + 1e-12);
        }
    }

    #[test]
    fn shrink_rate_and_log_product(k in 1usize..20_000) {
        let s = GainSchedule::reference();
        let kf = (k + 1) as f64;
        prop_assert!((s.shrink_rate(k) - kf.powf(-0.85)).abs() <= 1e-15);
        prop_assert!(s.shrink_rate(k + 1) < s.shrink_rate(k));
        let partial: f64 = (1..=k).map(|j| s.shrink_rate(j)).sum();
        prop_assert!(s.contraction_product(1, k).ln() <= -partial + 1e-12);
    }

    #[test]
    fn shifting_marginals(k in 0usize..10_000) {
        let d = Interval::unit();
        let m = shifting_uniform(d, k);
        prop_assert!((m.mass() - 1.0).abs() <= 1e-12);
        if k > 0 {
            let expected = (k as f64 + 1.0) / k as f64;
            prop_assert!(m.densities().iter().all(|&v| v == 0.0 || (v - expected).abs() <= 1e-12 * expected));
        }
        let next = shifting_uniform(d, k + 1);
        for j in 0..200 {
            let t = (j as f64 + 0.5) / 200.0;
            prop_assert!(m.density_at(t) + next.density_at(t) >= 1.0 - 1e-12);
        }
    }

    #[test]
    fn drift_against_quadrature(k in 1usize..200) {
        let d = Interval::unit();
        let (mu, nu) = (shifting_uniform(d, k), shifting_uniform(d, k + 1));
        let exact = dual_norm_drift(&mu, &nu).unwrap();
        // each density jump sits inside one of the 2^16 cells, costing at most density * width
        prop_assert!((exact - integrate_l1(&mu, &nu)).abs() <= 4.0 * 3.0 / 65536.0);
        let kf = k as f64;
        let closed = if k % 2 == 1 {
            2.0 * (kf + 2.0) / ((kf + 1.0) * (kf + 1.0))
        } else {
            (kf + 2.0) / ((kf + 1.0) * (kf + 1.0))
                + ((kf + 1.0) / (kf + 2.0) - 1.0 / (kf + 1.0)) / (kf * (kf + 1.0))
                + (kf + 1.0) / (kf * (kf + 2.0))
        };
        prop_assert!((exact - closed).abs() <= 1e-12);
    }

    #[test]
    fn path_norm_and_monotone_bias(k in 0usize..2000, c in 0.0..=1.0f64) {
        let ker = gaussian();
        let star = TargetFunction::kernel_section(ker.clone(), c).unwrap();
        let spec = StreamSpec::new(StreamKind::ShiftingUniform, NoiseModel::Zero, star.clone(), 0).unwrap();
        let o = PathOracle::new(&ker, &spec, GainSchedule::reference(), 32).unwrap();
        prop_assert!(o.path_at(k).unwrap().norm() <= star.norm() + 1e-8);
        let op = o.operator_at(k);
        let mut last = 0.0;
        for lambda in [1e-3, 1e-2, 0.1, 0.5, 1.0, 4.0] {
            let bias = rkhs_online::path_oracle::solve_path(&op, lambda, &star).unwrap().distance(star.expansion()).unwrap();
            prop_assert!(bias >= last - 1e-10);
            last = bias;
        }
    }
}
