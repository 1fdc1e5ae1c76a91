use std::collections::HashSet;
use std::sync::Arc;

use rkhs_online::analysis::{drift_recursion_trace, log_spaced, ls_slope};
use rkhs_online::experiment::{emit_csv, emit_trajectories, run_experiment, ExperimentConfig};
use rkhs_online::stream::StreamRng;
use rkhs_online::{GainSchedule, Interval, Kernel, MarginalMeasure, NoiseModel, PathOracle, StreamKind, StreamSpec, TargetFunction};

fn kernel() -> Arc<Kernel> {
    Arc::new(Kernel::gaussian(1.0, Interval::unit()).unwrap())
}

fn spec(kind: StreamKind, noise: NoiseModel) -> StreamSpec {
    let star = TargetFunction::kernel_section(kernel(), 0.0).unwrap();
    StreamSpec::new(kind, noise, star, 11).unwrap()
}

fn oracle(n: usize) -> PathOracle {
    PathOracle::new(&kernel(), &spec(StreamKind::ShiftingUniform, NoiseModel::Zero), GainSchedule::reference(), n).unwrap()
}

fn log_slope(points: &[(usize, f64)]) -> f64 {
    let x: Vec<f64> = points.iter().map(|p| (p.0 as f64).ln()).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    ls_slope(&x, &y)
}

#[test]
fn grid_self_convergence_on_aligned_breakpoints() {
    // steps whose support ends at a dyadic point, so every breakpoint is a cell edge
    let o: Vec<PathOracle> = [32, 64, 128].into_iter().map(oracle).collect();
    for k in [0, 1, 3, 7, 15] {
        let p: Vec<_> = o.iter().map(|o| o.path_at(k).unwrap()).collect();
        let coarse = p[0].distance(&p[1]).unwrap();
        let fine = p[1].distance(&p[2]).unwrap();
        // halving the cell must cut the change by at least 3 (second order gives 4)
        assert!(3.0 * fine <= coarse, "k={k}: {coarse:e} vs {fine:e}");
    }
    let dyadic = MarginalMeasure::new(vec![0.0, 0.25, 0.75, 1.0], vec![0.5, 1.5, 0.5]).unwrap();
    let s = spec(StreamKind::Iid(dyadic), NoiseModel::Zero);
    let p: Vec<_> = [32, 64, 128]
        .into_iter()
        .map(|n| PathOracle::new(&kernel(), &s, GainSchedule::reference(), n).unwrap().path_at(40).unwrap())
        .collect();
    assert!(3.0 * p[1].distance(&p[2]).unwrap() <= p[0].distance(&p[1]).unwrap());
}

#[test]
fn path_error_and_scaled_drift_trend_down() {
    let o = oracle(64);
    let ks = log_spaced(10, 1000, 10);
    let err: Vec<(usize, f64)> = ks.iter().map(|&k| (k, o.approximation_error(k).unwrap())).collect();
    assert!(log_slope(&err) < 0.0);
    assert!(err.last().unwrap().1 < err[0].1);
    let s = o.schedule();
    // odd k only: the drift alternates between two closed forms
    let drift: Vec<(usize, f64)> = ks
        .iter()
        .map(|&k| k | 1)
        .map(|k| (k, o.drift(k).unwrap() / (s.gain(k) * s.reg(k))))
        .collect();
    assert!(log_slope(&drift) < 0.0, "{drift:?}");
}

#[test]
fn windowed_path_approaches_target() {
    let o = oracle(64);
    let target = o.spec().target().expansion().clone();
    let e: Vec<f64> = [10, 100, 1000]
        .iter()
        .map(|&k| o.windowed_path(k, 2).unwrap().distance(&target).unwrap())
        .collect();
    assert!(e[1] < e[0] && e[2] < e[1], "{e:?}");
}

#[test]
fn drift_recursion_tail_decays() {
    let t = 10_000;
    let trace = drift_recursion_trace(&oracle(64), t, 1000, 0).unwrap();
    let at = |k: usize| trace.iter().find(|p| p.0 == k).unwrap().1;
    assert!(at(t) < at(t / 10), "{trace:?}");
}

fn small_config() -> ExperimentConfig {
    let mut c = ExperimentConfig::paper();
    c.horizon = 200;
    c.runs = 6;
    c.record_every = 5;
    c
}

fn csv_bytes(threads: usize) -> (Vec<u8>, Vec<u8>) {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    let r = pool.install(|| run_experiment(&small_config())).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (a, t) = (dir.path().join("mse.csv"), dir.path().join("t.csv"));
    emit_csv(&r, &a).unwrap();
    emit_trajectories(&r, &t).unwrap();
    (std::fs::read(a).unwrap(), std::fs::read(t).unwrap())
}

#[test]
fn csv_is_byte_identical_across_runs_and_thread_counts() {
    let one = csv_bytes(1);
    assert_eq!(one, csv_bytes(1));
    assert_eq!(one, csv_bytes(4));
}

#[test]
fn run_streams_do_not_collide() {
    let s = spec(StreamKind::ShiftingUniform, NoiseModel::gaussian(0.1).unwrap());
    let first: HashSet<u64> = (0..2000).map(|r| s.sample(0, &StreamRng::new(s.seed(), r)).x.to_bits()).collect();
    assert_eq!(first.len(), 2000);
    let other = s.with_seed(12);
    let a = s.sample(5, &s.rng(0));
    let b = other.sample(5, &other.rng(0));
    assert_ne!(a.x, b.x);
}
