//! Finite kernel expansions `f = sum_i alpha_i K(x_i, .)`.
//!
//! Every RKHS element handled by the crate (hypotheses, targets, regularization
//! paths, error terms) is one of these. Inner products and norms are computed
//! from Gram sums only, so rank-deficient center sets (duplicates) are fine.

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::kernel::Kernel;

#[derive(Debug, Clone)]
pub struct KernelExpansion {
    kernel: Arc<Kernel>,
    centers: Vec<f64>,
    coefficients: Vec<f64>,
}

impl KernelExpansion {
    pub fn new(kernel: Arc<Kernel>, centers: Vec<f64>, coefficients: Vec<f64>) -> Result<Self> {
        if centers.len() != coefficients.len() {
            return Err(Error::Parameter(format!(
                "{} centers but {} coefficients",
                centers.len(),
                coefficients.len()
            )));
        }
        let domain = kernel.domain();
        for &c in &centers {
            domain.check(c)?;
        }
        Ok(Self {
            kernel,
            centers,
            coefficients,
        })
    }

    pub(crate) fn from_parts(kernel: Arc<Kernel>, centers: Vec<f64>, coefficients: Vec<f64>) -> Self {
        debug_assert_eq!(centers.len(), coefficients.len());
        Self {
            kernel,
            centers,
            coefficients,
        }
    }

    pub fn zero(kernel: Arc<Kernel>) -> Self {
        Self::from_parts(kernel, Vec::new(), Vec::new())
    }

    /// `coefficient * K(center, .)`.
    pub fn single(kernel: Arc<Kernel>, center: f64, coefficient: f64) -> Result<Self> {
        Self::new(kernel, vec![center], vec![coefficient])
    }

    pub fn kernel(&self) -> &Arc<Kernel> {
        &self.kernel
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn evaluate(&self, x: f64) -> Result<f64> {
        self.kernel.domain().check(x)?;
        Ok(self.eval_at(x))
    }

    #[inline]
    pub(crate) fn eval_at(&self, x: f64) -> f64 {
        self.centers
            .iter()
            .zip(&self.coefficients)
            .map(|(&c, &a)| a * self.kernel.k(c, x))
            .sum()
    }

    fn check_same_kernel(&self, other: &Self) -> Result<()> {
        if Arc::ptr_eq(&self.kernel, &other.kernel) || *self.kernel == *other.kernel {
            Ok(())
        } else {
            Err(Error::KernelMismatch)
        }
    }

    pub fn inner(&self, other: &Self) -> Result<f64> {
        self.check_same_kernel(other)?;
        Ok(self.inner_unchecked(other))
    }

    pub(crate) fn inner_unchecked(&self, other: &Self) -> f64 {
        let k = &self.kernel;
        let mut total = 0.0;
        for (&x, &a) in self.centers.iter().zip(&self.coefficients) {
            let row: f64 = other
                .centers
                .iter()
                .zip(&other.coefficients)
                .map(|(&y, &b)| b * k.k(x, y))
                .sum();
            total += a * row;
        }
        total
    }

    /// `<f, f>`, exploiting symmetry of the Gram matrix. May be slightly
    /// negative from roundoff.
    pub fn norm_squared(&self) -> f64 {
        let k = &self.kernel;
        let (c, a) = (&self.centers, &self.coefficients);
        let mut total = 0.0;
        for i in 0..c.len() {
            let mut row = 0.5 * a[i] * k.k(c[i], c[i]);
            for j in 0..i {
                row += a[j] * k.k(c[i], c[j]);
            }
            total += a[i] * row;
        }
        2.0 * total
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().max(0.0).sqrt()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::from_parts(
            self.kernel.clone(),
            self.centers.clone(),
            self.coefficients.iter().map(|a| factor * a).collect(),
        )
    }

    /// `a * f + b * g` by concatenating center lists.
    pub fn combine(a: f64, f: &Self, b: f64, g: &Self) -> Result<Self> {
        f.check_same_kernel(g)?;
        let mut centers = Vec::with_capacity(f.len() + g.len());
        let mut coefficients = Vec::with_capacity(f.len() + g.len());
        centers.extend_from_slice(&f.centers);
        coefficients.extend(f.coefficients.iter().map(|c| a * c));
        centers.extend_from_slice(&g.centers);
        coefficients.extend(g.coefficients.iter().map(|c| b * c));
        Ok(Self::from_parts(f.kernel.clone(), centers, coefficients))
    }

    /// `a * f + b * g` with coinciding centers merged.
    pub fn combine_merged(a: f64, f: &Self, b: f64, g: &Self) -> Result<Self> {
        Ok(Self::combine(a, f, b, g)?.merged())
    }

    /// Same element with bitwise-equal centers collapsed into one term, in
    /// order of first occurrence.
    pub fn merged(&self) -> Self {
        let mut index: HashMap<u64, usize> = HashMap::with_capacity(self.len());
        let mut centers = Vec::with_capacity(self.len());
        let mut coefficients: Vec<f64> = Vec::with_capacity(self.len());
        for (&c, &a) in self.centers.iter().zip(&self.coefficients) {
            // +0.0 and -0.0 are the same point
            let key = if c == 0.0 { 0u64 } else { c.to_bits() };
            match index.get(&key) {
                Some(&i) => coefficients[i] += a,
                None => {
                    index.insert(key, centers.len());
                    centers.push(c);
                    coefficients.push(a);
                }
            }
        }
        Self::from_parts(self.kernel.clone(), centers, coefficients)
    }

    /// Drops terms with `|alpha_i| < threshold`. A threshold of 0 keeps everything.
    pub fn pruned(&self, threshold: f64) -> Self {
        let (centers, coefficients) = self
            .centers
            .iter()
            .zip(&self.coefficients)
            .filter(|(_, a)| a.abs() >= threshold)
            .map(|(&c, &a)| (c, a))
            .unzip();
        Self::from_parts(self.kernel.clone(), centers, coefficients)
    }

    /// `(I - a (K_x (x) K_x + lambda I)) f = (1 - a lambda) f - a f(x) K_x`.
    pub fn apply_step_operator(&self, x: f64, a: f64, lambda: f64) -> Result<Self> {
        self.kernel.domain().check(x)?;
        if !(a >= 0.0 && lambda >= 0.0) {
            return Err(Error::Schedule(format!(
                "gain and regularization must be nonnegative, got a={a}, lambda={lambda}"
            )));
        }
        if a * lambda >= 1.0 {
            return Err(Error::Schedule(format!("a * lambda = {} must be below 1", a * lambda)));
        }
        Ok(self.step_operator(x, a, lambda))
    }

    /// Unvalidated form of [`KernelExpansion::apply_step_operator`]; also
    /// covers the degenerate first step where `a * lambda = 1`.
    pub(crate) fn step_operator(&self, x: f64, a: f64, lambda: f64) -> Self {
        let fx = self.eval_at(x);
        let shrink = 1.0 - a * lambda;
        let mut centers = Vec::with_capacity(self.len() + 1);
        let mut coefficients = Vec::with_capacity(self.len() + 1);
        centers.extend_from_slice(&self.centers);
        coefficients.extend(self.coefficients.iter().map(|c| shrink * c));
        if !self.is_empty() {
            centers.push(x);
            coefficients.push(-a * fx);
        }
        Self::from_parts(self.kernel.clone(), centers, coefficients)
    }

    /// `||f - g||_K`, computed on the merged difference.
    pub fn distance(&self, other: &Self) -> Result<f64> {
        Ok(Self::combine_merged(1.0, self, -1.0, other)?.norm())
    }
}

/// Target function together with its declared RKHS norm.
#[derive(Debug, Clone)]
pub struct TargetFunction {
    expansion: KernelExpansion,
    declared_norm: f64,
}

impl TargetFunction {
    pub fn new(expansion: KernelExpansion, declared_norm: f64) -> Result<Self> {
        let computed = expansion.norm();
        if (computed - declared_norm).abs() > 1e-10 {
            return Err(Error::Parameter(format!(
                "declared norm {declared_norm} differs from Gram norm {computed}"
            )));
        }
        Ok(Self {
            expansion,
            declared_norm,
        })
    }

    /// `K(center, .)`, whose norm is `sqrt(K(center, center))`.
    pub fn kernel_section(kernel: Arc<Kernel>, center: f64) -> Result<Self> {
        let norm = kernel.eval(center, center)?.sqrt();
        Self::new(KernelExpansion::single(kernel, center, 1.0)?, norm)
    }

    pub fn from_expansion(expansion: KernelExpansion) -> Self {
        let declared_norm = expansion.norm();
        Self {
            expansion,
            declared_norm,
        }
    }

    pub fn expansion(&self) -> &KernelExpansion {
        &self.expansion
    }

    pub fn kernel(&self) -> &Arc<Kernel> {
        self.expansion.kernel()
    }

    pub fn norm(&self) -> f64 {
        self.declared_norm
    }

    pub fn evaluate(&self, x: f64) -> Result<f64> {
        self.expansion.evaluate(x)
    }
}
