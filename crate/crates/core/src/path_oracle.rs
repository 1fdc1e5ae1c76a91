//! Quadrature discretization of the per-step covariance operator
//! `T_k = int K_x (x) K_x d rho_k(x)` and the Tikhonov path
//! `f_lambda(k) = (T_k + lambda_k I)^{-1} T_k f*`.
//!
//! With midpoint nodes `t_j` and weights `w_j = m_k(t_j) * width`, the
//! discretized operator is `f -> sum_j w_j f(t_j) K_{t_j}`. It maps every
//! element into `span{K_{t_j}}`, where it acts on coefficients as `W G`, so the
//! regularized equation reduces to `(W G + lambda I) c = W f*(t)`. The operator
//! is self-adjoint in the RKHS metric and its spectrum is that of
//! `W^{1/2} G W^{1/2}`.

use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::{Interval, Kernel};
use crate::rkhs::{KernelExpansion, TargetFunction};
use crate::schedule::GainSchedule;
use crate::stream::{MarginalMeasure, StreamSpec};

/// Uniform midpoint grid.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    nodes: Vec<f64>,
    width: f64,
    domain: Interval,
}

impl QuadratureGrid {
    pub fn uniform(domain: Interval, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Parameter(format!("grid needs at least 2 nodes, got {n}")));
        }
        let width = domain.length() / n as f64;
        let nodes = (0..n).map(|j| domain.lo() + (j as f64 + 0.5) * width).collect();
        Ok(Self { nodes, width, domain })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn domain(&self) -> Interval {
        self.domain
    }
}

#[derive(Debug, Clone)]
pub struct DiscretizedOperator {
    kernel: Arc<Kernel>,
    grid: Arc<QuadratureGrid>,
    gram: Arc<DMatrix<f64>>,
    weights: Vec<f64>,
}

impl DiscretizedOperator {
    /// Integral operator of `measure` on an `n`-node midpoint grid.
    pub fn discretize(kernel: &Arc<Kernel>, measure: &MarginalMeasure, n: usize) -> Result<Self> {
        if measure.domain() != kernel.domain() {
            return Err(Error::Parameter("measure and kernel live on different domains".into()));
        }
        let grid = Arc::new(QuadratureGrid::uniform(kernel.domain(), n)?);
        let gram = Arc::new(kernel.gram_unchecked(grid.nodes()));
        let weights = measure.cell_weights(grid.nodes(), grid.width());
        Ok(Self::from_weights(kernel.clone(), grid, gram, weights))
    }

    pub(crate) fn from_weights(
        kernel: Arc<Kernel>,
        grid: Arc<QuadratureGrid>,
        gram: Arc<DMatrix<f64>>,
        weights: Vec<f64>,
    ) -> Self {
        Self {
            kernel,
            grid,
            gram,
            weights,
        }
    }

    pub fn kernel(&self) -> &Arc<Kernel> {
        &self.kernel
    }

    pub fn grid(&self) -> &QuadratureGrid {
        &self.grid
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Coefficient-space matrix `W G`.
    pub fn matrix(&self) -> DMatrix<f64> {
        let mut m = (*self.gram).clone();
        for (i, &w) in self.weights.iter().enumerate() {
            m.row_mut(i).scale_mut(w);
        }
        m
    }

    /// `W^{1/2} G W^{1/2}`.
    pub fn symmetrized(&self) -> DMatrix<f64> {
        let s: Vec<f64> = self.weights.iter().map(|w| w.sqrt()).collect();
        let n = s.len();
        DMatrix::from_fn(n, n, |i, j| s[i] * self.gram[(i, j)] * s[j])
    }

    /// Eigenvalues in decreasing order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut e: Vec<f64> = self.symmetrized().symmetric_eigenvalues().iter().copied().collect();
        e.sort_by(|a, b| b.total_cmp(a));
        e
    }

    /// Action on a grid function: `(A f)_i = sum_j w_j K(t_i, t_j) f(t_j)`.
    pub fn apply(&self, values: &[f64]) -> Result<Vec<f64>> {
        if values.len() != self.weights.len() {
            return Err(Error::Parameter("grid function has the wrong length".into()));
        }
        let wf = DVector::from_iterator(values.len(), values.iter().zip(&self.weights).map(|(f, w)| f * w));
        Ok((&*self.gram * wf).iter().copied().collect())
    }

    /// Operator of the summed measures.
    pub fn sum(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let weights = self.weights.iter().zip(&other.weights).map(|(a, b)| a + b).collect();
        Ok(Self::from_weights(self.kernel.clone(), self.grid.clone(), self.gram.clone(), weights))
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if *self.grid != *other.grid || *self.kernel != *other.kernel {
            return Err(Error::Parameter("operators are discretized on different grids".into()));
        }
        Ok(())
    }

    /// Operator norm of `self - other` in the RKHS metric, given `G^{1/2}`.
    fn difference_norm_with(&self, other: &Self, gram_sqrt: &DMatrix<f64>) -> f64 {
        let n = self.weights.len();
        let dw: Vec<f64> = self.weights.iter().zip(&other.weights).map(|(a, b)| a - b).collect();
        let mut scaled = gram_sqrt.clone();
        for j in 0..n {
            scaled.column_mut(j).scale_mut(dw[j]);
        }
        let m = scaled * gram_sqrt;
        let m = (&m + m.transpose()) * 0.5;
        m.symmetric_eigenvalues().iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    /// `||T_self - T_other||` in the RKHS operator norm.
    pub fn difference_norm(&self, other: &Self) -> Result<f64> {
        self.check_compatible(other)?;
        Ok(self.difference_norm_with(other, &psd_sqrt(&self.gram)))
    }
}

/// Symmetric square root with eigenvalues clamped at zero.
fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let q = &eig.eigenvectors;
    q * DMatrix::from_diagonal(&roots) * q.transpose()
}

/// `(W G + lambda I)^{-1} W f*(t)` as an expansion on the grid nodes.
pub fn solve_path(op: &DiscretizedOperator, lambda: f64, target: &TargetFunction) -> Result<KernelExpansion> {
    solve_path_with_residual(op, lambda, target).map(|(f, _)| f)
}

/// [`solve_path`] together with the sup-norm residual of the linear system.
pub fn solve_path_with_residual(
    op: &DiscretizedOperator,
    lambda: f64,
    target: &TargetFunction,
) -> Result<(KernelExpansion, f64)> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Parameter(format!("lambda must be positive, got {lambda}")));
    }
    let nodes = op.grid.nodes();
    let star: Vec<f64> = nodes.iter().map(|&t| target.expansion().eval_at(t)).collect();
    let (c, residual) = solve_weighted(&op.gram, &op.weights, lambda, &star)?;
    Ok((KernelExpansion::from_parts(op.kernel.clone(), nodes.to_vec(), c), residual))
}

const RESIDUAL_TOL: f64 = 1e-10;

fn solve_weighted(gram: &DMatrix<f64>, weights: &[f64], lambda: f64, star: &[f64]) -> Result<(Vec<f64>, f64)> {
    let n = weights.len();
    let mut a = gram.clone();
    for (i, &w) in weights.iter().enumerate() {
        a.row_mut(i).scale_mut(w);
        a[(i, i)] += lambda;
    }
    let rhs = DVector::from_iterator(n, star.iter().zip(weights).map(|(f, w)| f * w));
    let lu = a.clone().lu();
    let mut c = lu
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("singular regularized system".into()))?;
    let mut r = &rhs - &a * &c;
    // one round of iterative refinement
    if r.amax() > RESIDUAL_TOL {
        if let Some(dc) = lu.solve(&r) {
            c += dc;
            r = &rhs - &a * &c;
        }
    }
    let residual = r.amax();
    if !(residual <= RESIDUAL_TOL) {
        return Err(Error::Numerical(format!("path solve residual {residual:e} above tolerance")));
    }
    Ok((c.iter().copied().collect(), residual))
}

/// Both sides of the path-drift inequality at step `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftBound {
    /// `||f_lambda(k+1) - f_lambda(k)||_K`
    pub lhs: f64,
    /// `(||T_{k+1} - T_k|| / lambda_k + (lambda_k - lambda_{k+1}) / lambda_k) ||f_lambda(k) - f*||_K`
    pub rhs: f64,
    pub operator_drift: f64,
    pub approximation_error: f64,
}

impl DriftBound {
    /// `lhs <= rhs * (1 + slack)`.
    pub fn holds(&self, slack: f64) -> bool {
        self.lhs <= self.rhs * (1.0 + slack)
    }
}

/// Regularization paths of an independent stream on a shared grid.
#[derive(Debug, Clone)]
pub struct PathOracle {
    spec: StreamSpec,
    schedule: GainSchedule,
    constant_reg: Option<f64>,
    grid: Arc<QuadratureGrid>,
    gram: Arc<DMatrix<f64>>,
    gram_sqrt: OnceLock<DMatrix<f64>>,
    target_on_grid: Vec<f64>,
}

impl PathOracle {
    pub fn new(kernel: &Arc<Kernel>, spec: &StreamSpec, schedule: GainSchedule, n: usize) -> Result<Self> {
        if **kernel != **spec.target().kernel() {
            return Err(Error::KernelMismatch);
        }
        let grid = Arc::new(QuadratureGrid::uniform(kernel.domain(), n)?);
        let gram = Arc::new(kernel.gram_unchecked(grid.nodes()));
        let target_on_grid = grid.nodes().iter().map(|&t| spec.target().expansion().eval_at(t)).collect();
        Ok(Self {
            spec: spec.clone(),
            schedule,
            constant_reg: None,
            grid,
            gram,
            gram_sqrt: OnceLock::new(),
            target_on_grid,
        })
    }

    /// Uses `lambda_k = lambda` for every `k` instead of the schedule.
    pub fn with_constant_reg(mut self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Parameter(format!("lambda must be positive, got {lambda}")));
        }
        self.constant_reg = Some(lambda);
        Ok(self)
    }

    pub fn reg(&self, k: usize) -> f64 {
        self.constant_reg.unwrap_or_else(|| self.schedule.reg(k))
    }

    pub fn schedule(&self) -> GainSchedule {
        self.schedule
    }

    pub fn spec(&self) -> &StreamSpec {
        &self.spec
    }

    pub fn kernel(&self) -> &Arc<Kernel> {
        self.spec.target().kernel()
    }

    pub fn grid(&self) -> &QuadratureGrid {
        &self.grid
    }

    fn target(&self) -> &KernelExpansion {
        self.spec.target().expansion()
    }

    fn weights_at(&self, k: usize) -> Vec<f64> {
        self.spec.marginal_at(k).cell_weights(self.grid.nodes(), self.grid.width())
    }

    pub fn operator_at(&self, k: usize) -> DiscretizedOperator {
        DiscretizedOperator::from_weights(self.kernel().clone(), self.grid.clone(), self.gram.clone(), self.weights_at(k))
    }

    /// `sum_{i=k+1}^{k+h} T_i`.
    pub fn windowed_operator(&self, k: usize, h: usize) -> Result<DiscretizedOperator> {
        if h == 0 {
            return Err(Error::Parameter("window length must be at least 1".into()));
        }
        let mut w = vec![0.0; self.grid.len()];
        for i in k + 1..=k + h {
            for (acc, v) in w.iter_mut().zip(self.weights_at(i)) {
                *acc += v;
            }
        }
        Ok(DiscretizedOperator::from_weights(self.kernel().clone(), self.grid.clone(), self.gram.clone(), w))
    }

    /// Grid coefficients of `f_lambda(k)`.
    pub fn path_coefficients(&self, k: usize) -> Result<Vec<f64>> {
        solve_weighted(&self.gram, &self.weights_at(k), self.reg(k), &self.target_on_grid).map(|(c, _)| c)
    }

    /// Grid coefficients for `k = 0..=k_max`, solved in parallel.
    pub fn path_table(&self, k_max: usize) -> Result<Vec<Vec<f64>>> {
        (0..=k_max).into_par_iter().map(|k| self.path_coefficients(k)).collect()
    }

    pub fn expansion(&self, coefficients: Vec<f64>) -> KernelExpansion {
        KernelExpansion::from_parts(self.kernel().clone(), self.grid.nodes().to_vec(), coefficients)
    }

    pub fn path_at(&self, k: usize) -> Result<KernelExpansion> {
        Ok(self.expansion(self.path_coefficients(k)?))
    }

    /// `(sum T_i + (sum lambda_i) I)^{-1} (sum T_i) f*` over `i = k+1..=k+h`.
    pub fn windowed_path(&self, k: usize, h: usize) -> Result<KernelExpansion> {
        let op = self.windowed_operator(k, h)?;
        let lambda: f64 = (k + 1..=k + h).map(|i| self.reg(i)).sum();
        let (c, _) = solve_weighted(&self.gram, op.weights(), lambda, &self.target_on_grid)?;
        Ok(self.expansion(c))
    }

    /// `||f_lambda(k) - f*||_K`.
    pub fn approximation_error(&self, k: usize) -> Result<f64> {
        self.path_at(k)?.distance(self.target())
    }

    /// `||f_lambda(k+1) - f_lambda(k)||_K`.
    pub fn drift(&self, k: usize) -> Result<f64> {
        let (a, b) = (self.path_coefficients(k)?, self.path_coefficients(k + 1)?);
        let diff: Vec<f64> = b.iter().zip(&a).map(|(x, y)| x - y).collect();
        Ok(self.expansion(diff).norm())
    }

    fn gram_sqrt(&self) -> &DMatrix<f64> {
        self.gram_sqrt.get_or_init(|| psd_sqrt(&self.gram))
    }

    pub fn operator_drift(&self, k: usize) -> f64 {
        self.operator_at(k + 1).difference_norm_with(&self.operator_at(k), self.gram_sqrt())
    }

    pub fn drift_bound_check(&self, k: usize) -> Result<DriftBound> {
        let lhs = self.drift(k)?;
        let operator_drift = self.operator_drift(k);
        let approximation_error = self.approximation_error(k)?;
        let (l0, l1) = (self.reg(k), self.reg(k + 1));
        let rhs = (operator_drift / l0 + (l0 - l1) / l0) * approximation_error;
        Ok(DriftBound {
            lhs,
            rhs,
            operator_drift,
            approximation_error,
        })
    }
}
