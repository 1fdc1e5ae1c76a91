//! Positive-definite kernels on a closed interval.
//!
//! Two families are supported: the Gaussian kernel `exp(-(x - y)^2 / bw^2)` and
//! a tabulated kernel given by a symmetric matrix on a node grid and extended
//! by bilinear (hat-function) interpolation. Hat-function interpolation writes
//! `K(x, y) = sum_ij phi_i(x) T_ij phi_j(y)`, so a positive semidefinite table
//! yields a positive semidefinite kernel and `sup K(x, x)` is the largest
//! diagonal entry.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Closed interval `[lo, hi]` playing the role of the compact input set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Parameter(format!(
                "interval must satisfy lo < hi, got [{lo}, {hi}]"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn unit() -> Self {
        Self { lo: 0.0, hi: 1.0 }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn check(&self, x: f64) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(Error::Domain {
                x,
                lo: self.lo,
                hi: self.hi,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelFamily {
    Gaussian { bandwidth: f64 },
    Tabulated { nodes: Vec<f64>, values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    family: KernelFamily,
    domain: Interval,
    kappa: f64,
    inv_bw2: f64,
}

impl Kernel {
    /// Gaussian kernel `exp(-(x - y)^2 / bandwidth^2)`; `kappa = 1`.
    pub fn gaussian(bandwidth: f64, domain: Interval) -> Result<Self> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(Error::Parameter(format!(
                "bandwidth must be positive, got {bandwidth}"
            )));
        }
        Ok(Self {
            family: KernelFamily::Gaussian { bandwidth },
            domain,
            kappa: 1.0,
            inv_bw2: 1.0 / (bandwidth * bandwidth),
        })
    }

    /// Tabulated kernel from a symmetric `n x n` table (row-major) on strictly
    /// increasing nodes that cover the domain.
    pub fn tabulated(nodes: Vec<f64>, values: Vec<f64>, domain: Interval) -> Result<Self> {
        let n = nodes.len();
        if n < 2 {
            return Err(Error::Parameter("tabulated kernel needs at least 2 nodes".into()));
        }
        if values.len() != n * n {
            return Err(Error::Parameter(format!(
                "table has {} entries, expected {}",
                values.len(),
                n * n
            )));
        }
        if nodes.windows(2).any(|w| !(w[0] < w[1])) || nodes.iter().any(|t| !t.is_finite()) {
            return Err(Error::Parameter("tabulated nodes must be strictly increasing".into()));
        }
        if nodes[0] > domain.lo() || nodes[n - 1] < domain.hi() {
            return Err(Error::Parameter("tabulated nodes must cover the domain".into()));
        }
        let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        for i in 0..n {
            for j in 0..i {
                if (values[i * n + j] - values[j * n + i]).abs() > 1e-12 * scale {
                    return Err(Error::Parameter(format!("table is not symmetric at ({i}, {j})")));
                }
            }
        }
        let kappa = (0..n).map(|i| values[i * n + i]).fold(f64::NEG_INFINITY, f64::max);
        if !(kappa > 0.0) {
            return Err(Error::Parameter("tabulated kernel needs a positive diagonal".into()));
        }
        Ok(Self {
            family: KernelFamily::Tabulated { nodes, values },
            domain,
            kappa,
            inv_bw2: 0.0,
        })
    }

    /// Constant kernel `K == c`, expressed as a two-node table.
    pub fn constant(c: f64, domain: Interval) -> Result<Self> {
        Self::tabulated(vec![domain.lo(), domain.hi()], vec![c; 4], domain)
    }

    pub fn family(&self) -> &KernelFamily {
        &self.family
    }

    pub fn domain(&self) -> Interval {
        self.domain
    }

    /// `sup_x K(x, x)`.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn eval(&self, x: f64, y: f64) -> Result<f64> {
        self.domain.check(x)?;
        self.domain.check(y)?;
        Ok(self.k(x, y))
    }

    /// Evaluation without the domain check; callers guarantee membership.
    #[inline]
    pub(crate) fn k(&self, x: f64, y: f64) -> f64 {
        match &self.family {
            KernelFamily::Gaussian { .. } => {
                let d = x - y;
                (-d * d * self.inv_bw2).exp()
            }
            KernelFamily::Tabulated { nodes, values } => tabulated_eval(nodes, values, x, y),
        }
    }

    pub fn gram(&self, centers: &[f64]) -> Result<DMatrix<f64>> {
        for &c in centers {
            self.domain.check(c)?;
        }
        Ok(self.gram_unchecked(centers))
    }

    pub(crate) fn gram_unchecked(&self, centers: &[f64]) -> DMatrix<f64> {
        let n = centers.len();
        let mut g = DMatrix::zeros(n, n);
        for i in 0..n {
            g[(i, i)] = self.k(centers[i], centers[i]);
            for j in 0..i {
                let v = self.k(centers[i], centers[j]);
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        g
    }

    /// Empirical Hölder-type constants from `trials` random quadruples.
    pub fn check_regularity(&self, s: f64, trials: usize, seed: u64) -> Result<KernelRegularityReport> {
        if trials == 0 {
            return Err(Error::Parameter("trials must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lo, hi) = (self.domain.lo(), self.domain.hi());
        let quads: Vec<[f64; 4]> = (0..trials)
            .map(|_| {
                let mut q = [0.0; 4];
                for v in &mut q {
                    *v = rng.random_range(lo..=hi);
                }
                q
            })
            .collect();
        self.check_regularity_on(s, &quads)
    }

    /// Same as [`Kernel::check_regularity`] on caller-supplied `(u1, u2, v1, v2)`.
    /// Quadruples with `u1 == u2` or `v1 == v2` are skipped.
    pub fn check_regularity_on(&self, s: f64, quads: &[[f64; 4]]) -> Result<KernelRegularityReport> {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::Parameter(format!("order s must lie in [0, 1], got {s}")));
        }
        let mut mixed = 0.0f64;
        let mut holder = 0.0f64;
        let mut used = 0;
        for &[u1, u2, v1, v2] in quads {
            for p in [u1, u2, v1, v2] {
                self.domain.check(p)?;
            }
            if u1 == u2 || v1 == v2 {
                continue;
            }
            let du = (u1 - u2).abs().powf(s);
            let dv = (v1 - v2).abs().powf(s);
            let dd = self.k(u1, v1) - self.k(u2, v1) - self.k(u1, v2) + self.k(u2, v2);
            mixed = mixed.max(dd.abs() / (du * dv));
            let h1 = (self.k(u1, v1) - self.k(u2, v1)).abs() / du;
            let h2 = (self.k(u1, v2) - self.k(u2, v2)).abs() / du;
            holder = holder.max(h1).max(h2);
            used += 1;
        }
        Ok(KernelRegularityReport {
            order: s,
            mixed_constant: mixed,
            holder_seminorm_estimate: holder,
            sample_count: used,
        })
    }
}

fn tabulated_eval(nodes: &[f64], values: &[f64], x: f64, y: f64) -> f64 {
    let n = nodes.len();
    let (i, s) = locate(nodes, x);
    let (j, t) = locate(nodes, y);
    let v = |a: usize, b: usize| values[a * n + b];
    (1.0 - s) * ((1.0 - t) * v(i, j) + t * v(i, j + 1)) + s * ((1.0 - t) * v(i + 1, j) + t * v(i + 1, j + 1))
}

/// Cell index `i` with `nodes[i] <= x <= nodes[i + 1]` and the local coordinate.
fn locate(nodes: &[f64], x: f64) -> (usize, f64) {
    let n = nodes.len();
    let i = nodes.partition_point(|&t| t <= x).clamp(1, n - 1) - 1;
    let s = ((x - nodes[i]) / (nodes[i + 1] - nodes[i])).clamp(0.0, 1.0);
    (i, s)
}

/// Suprema over the sampled quadruples; lower bounds of the true constants.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelRegularityReport {
    pub order: f64,
    pub mixed_constant: f64,
    pub holder_seminorm_estimate: f64,
    pub sample_count: usize,
}
