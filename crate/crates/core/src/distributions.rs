//! Gaussians, categoricals, Gaussian mixtures and their closed-form KLs.
//!
//! Covariances are stored in full together with their lower Cholesky factor
//! and the natural parameters (precision `Q = Σ⁻¹` and precision-mean
//! `q = Σ⁻¹μ`). All types are immutable once built.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;

use crate::error::{check_dim, EimError, Result};
use crate::rng::{fill_standard_normal, EimRng};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Smallest admissible Cholesky pivot.
pub const PIVOT_FLOOR: f64 = 1e-12;

/// Anything that can be sampled and evaluated in batch.
pub trait Density {
    fn dim(&self) -> usize;
    /// Log densities of the rows of `xs` (n×d).
    fn log_density_batch(&self, xs: &DMatrix<f64>) -> Result<DVector<f64>>;
    /// `n` samples as the rows of an n×d matrix.
    fn sample_batch(&self, n: usize, rng: &mut EimRng) -> DMatrix<f64>;
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

#[derive(Clone, Debug)]
pub struct Gaussian {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol: DMatrix<f64>,
    precision: DMatrix<f64>,
    precision_mean: DVector<f64>,
    log_det_cov: f64,
}

impl PartialEq for Gaussian {
    fn eq(&self, other: &Self) -> bool {
        self.mean == other.mean && self.chol == other.chol
    }
}

impl Gaussian {
    /// Builds a Gaussian from its mean and covariance.
    ///
    /// The covariance must be symmetric to within `1e-10` (relative to its
    /// largest entry) and positive definite with pivots above [`PIVOT_FLOOR`].
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(EimError::Input("zero-dimensional Gaussian".into()));
        }
        check_dim(d, cov.nrows())?;
        check_dim(d, cov.ncols())?;
        let scale = cov.amax().max(1.0);
        for i in 0..d {
            for j in 0..i {
                if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-10 * scale {
                    return Err(EimError::Input(format!(
                        "covariance not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let sym = (&cov + cov.transpose()) * 0.5;
        let chol = Cholesky::new(sym.clone())
            .ok_or_else(|| EimError::NotPositiveDefinite("covariance".into()))?
            .l();
        Self::assemble(mean, sym, chol)
    }

    /// Builds a Gaussian from its mean and lower Cholesky factor `L` with `Σ = L Lᵀ`.
    /// The strictly upper part of `chol` is ignored.
    pub fn from_cholesky(mean: DVector<f64>, chol: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        check_dim(d, chol.nrows())?;
        check_dim(d, chol.ncols())?;
        let chol = chol.lower_triangle();
        let cov = &chol * chol.transpose();
        Self::assemble(mean, cov, chol)
    }

    /// Builds a Gaussian from natural parameters `(Q, q)`.
    pub fn from_natural(precision: &DMatrix<f64>, precision_mean: &DVector<f64>) -> Result<Self> {
        let d = precision_mean.len();
        check_dim(d, precision.nrows())?;
        let sym = (precision + precision.transpose()) * 0.5;
        let chol = Cholesky::new(sym)
            .ok_or_else(|| EimError::NotPositiveDefinite("precision".into()))?;
        let mean = chol.solve(precision_mean);
        let cov = chol.inverse();
        let cov = (&cov + cov.transpose()) * 0.5;
        Self::new(mean, cov)
    }

    pub fn standard(d: usize) -> Self {
        Self::new(DVector::zeros(d), DMatrix::identity(d, d)).expect("identity is PD")
    }

    pub fn isotropic(mean: DVector<f64>, variance: f64) -> Result<Self> {
        let d = mean.len();
        Self::new(mean, DMatrix::identity(d, d) * variance)
    }

    fn assemble(mean: DVector<f64>, cov: DMatrix<f64>, chol: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        for i in 0..d {
            let p = chol[(i, i)];
            if !(p > PIVOT_FLOOR) || !p.is_finite() {
                return Err(EimError::NotPositiveDefinite(format!(
                    "Cholesky pivot {i} is {p:e}"
                )));
            }
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(EimError::Numerical("non-finite mean".into()));
        }
        let chol_inv = chol
            .solve_lower_triangular(&DMatrix::identity(d, d))
            .ok_or_else(|| EimError::NotPositiveDefinite("singular Cholesky factor".into()))?;
        let precision = chol_inv.transpose() * &chol_inv;
        let precision = (&precision + precision.transpose()) * 0.5;
        let precision_mean = &precision * &mean;
        let log_det_cov = 2.0 * chol.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Ok(Self {
            mean,
            cov,
            chol,
            precision,
            precision_mean,
            log_det_cov,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }
    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }
    pub fn cholesky(&self) -> &DMatrix<f64> {
        &self.chol
    }
    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }
    pub fn precision_mean(&self) -> &DVector<f64> {
        &self.precision_mean
    }
    pub fn log_det_covariance(&self) -> f64 {
        self.log_det_cov
    }

    pub fn entropy(&self) -> f64 {
        0.5 * (self.dim() as f64 * (1.0 + LN_2PI) + self.log_det_cov)
    }

    /// `log N(x; μ, Σ)`.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        let diff = DVector::from_iterator(x.len(), x.iter().zip(self.mean.iter()).map(|(a, b)| a - b));
        let v = self
            .chol
            .solve_lower_triangular(&diff)
            .expect("Cholesky factor has positive pivots");
        Ok(-0.5 * (v.norm_squared() + self.log_det_cov + self.dim() as f64 * LN_2PI))
    }

    /// Standardised residuals `L⁻¹(x - μ)` for each row, returned as a d×n matrix.
    pub fn whiten_rows(&self, xs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_dim(self.dim(), xs.ncols())?;
        let mut diff = xs.transpose();
        for mut col in diff.column_iter_mut() {
            col -= &self.mean;
        }
        Ok(self
            .chol
            .solve_lower_triangular(&diff)
            .expect("Cholesky factor has positive pivots"))
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let mut z = DVector::zeros(self.dim());
        fill_standard_normal(rng, z.as_mut_slice());
        &self.mean + &self.chol * z
    }

    /// `n` samples as rows, via `μ + L z` with standard normal `z`.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> DMatrix<f64> {
        let d = self.dim();
        let mut z = DMatrix::zeros(d, n);
        fill_standard_normal(rng, z.as_mut_slice());
        let mut x = &self.chol * z;
        for mut col in x.column_iter_mut() {
            col += &self.mean;
        }
        x.transpose()
    }
}

impl Density for Gaussian {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn log_density_batch(&self, xs: &DMatrix<f64>) -> Result<DVector<f64>> {
        let v = self.whiten_rows(xs)?;
        let c = self.log_det_cov + self.dim() as f64 * LN_2PI;
        Ok(DVector::from_iterator(
            xs.nrows(),
            v.column_iter().map(|col| -0.5 * (col.norm_squared() + c)),
        ))
    }

    fn sample_batch(&self, n: usize, rng: &mut EimRng) -> DMatrix<f64> {
        self.sample(n, rng)
    }
}

/// Closed-form `KL(a ‖ b)` between Gaussians, clamped at zero.
pub fn kl_gaussian(a: &Gaussian, b: &Gaussian) -> Result<f64> {
    check_dim(b.dim(), a.dim())?;
    let d = a.dim();
    let m = b
        .chol
        .solve_lower_triangular(&a.chol)
        .ok_or_else(|| EimError::NotPositiveDefinite("KL reference covariance".into()))?;
    let diff = &b.mean - &a.mean;
    let w = b
        .chol
        .solve_lower_triangular(&diff)
        .ok_or_else(|| EimError::NotPositiveDefinite("KL reference covariance".into()))?;
    let kl = 0.5 * (m.norm_squared() + w.norm_squared() - d as f64 + b.log_det_cov - a.log_det_cov);
    Ok(kl.max(0.0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Categorical {
    probs: DVector<f64>,
}

impl Categorical {
    /// Probabilities must be non-negative and sum to one within `1e-10`.
    pub fn new(probs: DVector<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(EimError::Input("empty categorical".into()));
        }
        if probs.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(EimError::Domain("negative or non-finite probability".into()));
        }
        let s = probs.sum();
        if (s - 1.0).abs() > 1e-10 {
            return Err(EimError::Domain(format!("probabilities sum to {s}")));
        }
        Ok(Self { probs })
    }

    pub fn uniform(k: usize) -> Self {
        Self {
            probs: DVector::from_element(k, 1.0 / k as f64),
        }
    }

    /// Normalises `exp(logits)`.
    pub fn from_logits(logits: &[f64]) -> Self {
        let lse = log_sum_exp(logits);
        let probs = DVector::from_iterator(logits.len(), logits.iter().map(|l| (l - lse).exp()));
        let s = probs.sum();
        Self { probs: probs / s }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }
    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
    pub fn probs(&self) -> &DVector<f64> {
        &self.probs
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last = 0;
        for (i, p) in self.probs.iter().enumerate() {
            if *p > 0.0 {
                last = i;
                acc += p;
                if u < acc {
                    return i;
                }
            }
        }
        last
    }

    pub fn sample_n<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        (0..n).map(|_| self.sample(rng)).collect()
    }
}

/// `Σ aᵢ log(aᵢ / bᵢ)` with `0 log 0 = 0`.
pub fn kl_categorical(a: &Categorical, b: &Categorical) -> Result<f64> {
    check_dim(b.len(), a.len())?;
    let mut kl = 0.0;
    for (pa, pb) in a.probs.iter().zip(b.probs.iter()) {
        if *pa > 0.0 {
            if *pb <= 0.0 {
                return Err(EimError::Domain(
                    "reference categorical has zero mass where the first does not".into(),
                ));
            }
            kl += pa * (pa / pb).ln();
        }
    }
    Ok(kl.max(0.0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gmm {
    components: Vec<Gaussian>,
    weights: Categorical,
}

impl Gmm {
    pub fn new(components: Vec<Gaussian>, weights: Categorical) -> Result<Self> {
        if components.is_empty() {
            return Err(EimError::Input("mixture without components".into()));
        }
        check_dim(components.len(), weights.len())?;
        let d = components[0].dim();
        for c in &components {
            check_dim(d, c.dim())?;
        }
        Ok(Self { components, weights })
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }
    pub fn num_components(&self) -> usize {
        self.components.len()
    }
    pub fn components(&self) -> &[Gaussian] {
        &self.components
    }
    pub fn weights(&self) -> &Categorical {
        &self.weights
    }

    pub fn with_weights(&self, weights: Categorical) -> Result<Self> {
        Self::new(self.components.clone(), weights)
    }

    pub fn with_component(&self, i: usize, c: Gaussian) -> Result<Self> {
        let mut comps = self.components.clone();
        check_dim(self.dim(), c.dim())?;
        comps[i] = c;
        Self::new(comps, self.weights.clone())
    }

    /// `log Σᵢ πᵢ N(x; μᵢ, Σᵢ)`; underflow maps to `f64::MIN` instead of `-∞`.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        let terms: Vec<f64> = self
            .components
            .iter()
            .zip(self.weights.probs.iter())
            .map(|(c, w)| Ok(w.ln() + c.log_density(x)?))
            .collect::<Result<_>>()?;
        Ok(finite_floor(log_sum_exp(&terms)))
    }

    /// Per-component `log N(xⱼ; μᵢ, Σᵢ)` as an n×K matrix (weights excluded).
    pub fn component_log_densities(&self, xs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_dim(self.dim(), xs.ncols())?;
        let mut out = DMatrix::zeros(xs.nrows(), self.num_components());
        for (i, c) in self.components.iter().enumerate() {
            out.set_column(i, &c.log_density_batch(xs)?);
        }
        Ok(out)
    }

    /// Posterior component probabilities `q(z | xⱼ)` (n×K) and the row log densities.
    pub fn responsibilities(&self, xs: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
        let mut lp = self.component_log_densities(xs)?;
        let log_w: Vec<f64> = self.weights.probs.iter().map(|w| w.ln()).collect();
        let mut ll = DVector::zeros(xs.nrows());
        let mut row = vec![0.0; self.num_components()];
        for j in 0..xs.nrows() {
            for i in 0..row.len() {
                row[i] = lp[(j, i)] + log_w[i];
            }
            let lse = log_sum_exp(&row);
            ll[j] = finite_floor(lse);
            for i in 0..row.len() {
                lp[(j, i)] = if lse.is_finite() { (row[i] - lse).exp() } else { 1.0 / row.len() as f64 };
            }
        }
        Ok((lp, ll))
    }

    /// Samples rows together with their component labels.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> (DMatrix<f64>, Vec<usize>) {
        let labels = self.weights.sample_n(n, rng);
        let d = self.dim();
        let mut out = DMatrix::zeros(n, d);
        let mut z = DVector::zeros(d);
        for (j, &l) in labels.iter().enumerate() {
            let c = &self.components[l];
            fill_standard_normal(rng, z.as_mut_slice());
            let x = c.mean() + c.cholesky() * &z;
            out.set_row(j, &x.transpose());
        }
        (out, labels)
    }
}

fn finite_floor(v: f64) -> f64 {
    if v == f64::NEG_INFINITY {
        f64::MIN
    } else {
        v
    }
}

impl Density for Gmm {
    fn dim(&self) -> usize {
        self.components[0].dim()
    }

    fn log_density_batch(&self, xs: &DMatrix<f64>) -> Result<DVector<f64>> {
        let lp = self.component_log_densities(xs)?;
        let log_w: Vec<f64> = self.weights.probs.iter().map(|w| w.ln()).collect();
        let mut row = vec![0.0; log_w.len()];
        Ok(DVector::from_iterator(
            xs.nrows(),
            (0..xs.nrows()).map(|j| {
                for i in 0..row.len() {
                    row[i] = lp[(j, i)] + log_w[i];
                }
                finite_floor(log_sum_exp(&row))
            }),
        ))
    }

    fn sample_batch(&self, n: usize, rng: &mut EimRng) -> DMatrix<f64> {
        self.sample(n, rng).0
    }
}
