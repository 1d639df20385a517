//! Closed-form KL-bounded updates for Gaussians and categoricals.
//!
//! Both updates maximise `E_q[f] - KL(q ‖ q_old)` subject to
//! `KL(q ‖ q_old) ≤ ε`, where `f = -φ` is the negated log density ratio.
//! The solution tilts the old distribution, `q ∝ q_old · exp(f / (η + 1))`,
//! and the multiplier `η ≥ 0` minimises the convex dual
//! `g(η) = η ε + (η + 1) log ∫ q_old exp(f / (η + 1))`.
//! With the extra KL penalty switched off the divisor is `η` instead of
//! `η + 1`, which is the plain trust-region update.
//!
//! Since `g'(η) = ε - KL(q_η ‖ q_old)` and the KL decreases in `η`, the dual
//! is solved by bisection in `log η` on the feasibility of the trust region.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::distributions::{kl_categorical, kl_gaussian, log_sum_exp, Categorical, Gaussian};
use crate::error::{check_dim, EimError, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// `φ̂(x) = -½ xᵀ F x + fᵀ x + f₀`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticSurrogate {
    quad: DMatrix<f64>,
    lin: DVector<f64>,
    offset: f64,
}

impl QuadraticSurrogate {
    pub fn new(quad: DMatrix<f64>, lin: DVector<f64>, offset: f64) -> Result<Self> {
        check_dim(lin.len(), quad.nrows())?;
        check_dim(lin.len(), quad.ncols())?;
        let quad = (&quad + quad.transpose()) * 0.5;
        Ok(Self { quad, lin, offset })
    }

    pub fn zero(d: usize) -> Self {
        Self {
            quad: DMatrix::zeros(d, d),
            lin: DVector::zeros(d),
            offset: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.lin.len()
    }
    pub fn quadratic(&self) -> &DMatrix<f64> {
        &self.quad
    }
    pub fn linear(&self) -> &DVector<f64> {
        &self.lin
    }
    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn negated(&self) -> Self {
        Self {
            quad: -&self.quad,
            lin: -&self.lin,
            offset: -self.offset,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let x = DVector::from_column_slice(x);
        -0.5 * (x.transpose() * &self.quad * &x)[(0, 0)] + self.lin.dot(&x) + self.offset
    }

    /// `E_{N(μ, Σ)}[φ̂] = -½ (tr(FΣ) + μᵀFμ) + fᵀμ + f₀`.
    pub fn expectation(&self, g: &Gaussian) -> f64 {
        let mu = g.mean();
        let tr = self.quad.component_mul(g.covariance()).sum();
        -0.5 * (tr + (mu.transpose() * &self.quad * mu)[(0, 0)]) + self.lin.dot(mu) + self.offset
    }
}

/// Number of coefficients in a full quadratic over `d` inputs.
pub fn quadratic_feature_count(d: usize) -> usize {
    d * (d + 1) / 2 + d + 1
}

/// Ridge least-squares fit of a full quadratic to `(samples, values)`.
///
/// The ridge weight is `ridge · tr(XᵀX) / p` on all but the constant feature.
pub fn fit_surrogate(samples: &DMatrix<f64>, values: &DVector<f64>, ridge: f64) -> Result<QuadraticSurrogate> {
    let (n, d) = samples.shape();
    check_dim(n, values.len())?;
    let p = quadratic_feature_count(d);
    if n < p {
        return Err(EimError::Input(format!(
            "{n} samples cannot identify a quadratic with {p} coefficients"
        )));
    }
    // Features: [x_i x_j (i ≤ j) ..., x_1 .. x_d, 1]
    let mut design = DMatrix::zeros(n, p);
    for r in 0..n {
        let mut c = 0;
        for i in 0..d {
            for j in i..d {
                design[(r, c)] = samples[(r, i)] * samples[(r, j)];
                c += 1;
            }
        }
        for i in 0..d {
            design[(r, c + i)] = samples[(r, i)];
        }
        design[(r, p - 1)] = 1.0;
    }
    let mut gram = design.transpose() * &design;
    let rhs = design.transpose() * values;
    let lambda = ridge.max(0.0) * gram.trace() / p as f64;
    for k in 0..p - 1 {
        gram[(k, k)] += lambda;
    }
    let chol = Cholesky::new(gram)
        .ok_or_else(|| EimError::Numerical("surrogate design is rank deficient".into()))?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    if !(lo > 1e-7 * hi) {
        return Err(EimError::Numerical("surrogate design is rank deficient".into()));
    }
    let beta = chol.solve(&rhs);
    let mut quad = DMatrix::zeros(d, d);
    let mut c = 0;
    for i in 0..d {
        for j in i..d {
            if i == j {
                quad[(i, i)] = -2.0 * beta[c];
            } else {
                quad[(i, j)] = -beta[c];
                quad[(j, i)] = -beta[c];
            }
            c += 1;
        }
    }
    let lin = DVector::from_iterator(d, (0..d).map(|i| beta[c + i]));
    QuadraticSurrogate::new(quad, lin, beta[p - 1])
}

/// Fits the surrogate in the coordinates whitened by `reference`
/// (`z = L⁻¹(x - μ)`) and maps it back to `x`.
pub fn fit_surrogate_whitened(
    reference: &Gaussian,
    samples: &DMatrix<f64>,
    values: &DVector<f64>,
    ridge: f64,
) -> Result<QuadraticSurrogate> {
    let z = reference.whiten_rows(samples)?.transpose();
    let sz = fit_surrogate(&z, values, ridge)?;
    let d = reference.dim();
    let l_inv = reference
        .cholesky()
        .solve_lower_triangular(&DMatrix::identity(d, d))
        .ok_or_else(|| EimError::NotPositiveDefinite("reference covariance".into()))?;
    let mu = reference.mean();
    let quad = l_inv.transpose() * sz.quadratic() * &l_inv;
    let lin_z = l_inv.transpose() * sz.linear();
    let lin = &quad * mu + &lin_z;
    let offset = sz.offset() - 0.5 * (mu.transpose() * &quad * mu)[(0, 0)] - lin_z.dot(mu);
    QuadraticSurrogate::new(quad, lin, offset)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrustRegionConfig {
    pub epsilon: f64,
    pub eta_min: f64,
    pub eta_max: f64,
    pub tolerance: f64,
    /// Adds the extra `KL(q ‖ q_old)` penalty of the bound (divisor `η + 1`).
    pub kl_penalty: bool,
}

impl Default for TrustRegionConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            eta_min: 1e-8,
            eta_max: 1e8,
            tolerance: 1e-10,
            kl_penalty: true,
        }
    }
}

impl TrustRegionConfig {
    pub fn with_epsilon(epsilon: f64) -> Self {
        Self {
            epsilon,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(EimError::Config("trust region epsilon must be positive".into()));
        }
        if !(self.eta_min > 0.0 && self.eta_max > self.eta_min) {
            return Err(EimError::Config("need 0 < eta_min < eta_max".into()));
        }
        Ok(())
    }

    fn divisor(&self, eta: f64) -> f64 {
        if self.kl_penalty {
            eta + 1.0
        } else {
            eta
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DualSolution {
    pub eta: f64,
    pub constraint_active: bool,
    pub kl: f64,
}

/// Finds the smallest `η` whose tilted candidate exists and meets the KL bound.
fn solve_dual<T>(
    tr: &TrustRegionConfig,
    candidate: impl Fn(f64) -> Option<(T, f64)>,
) -> Option<(T, DualSolution)> {
    let feasible = |eta: f64| candidate(eta).filter(|(_, kl)| *kl <= tr.epsilon);
    let start = if tr.kl_penalty { 0.0 } else { tr.eta_min };
    if let Some((t, kl)) = feasible(start) {
        return Some((
            t,
            DualSolution {
                eta: start,
                constraint_active: false,
                kl,
            },
        ));
    }
    let (mut t_hi, mut kl_hi) = feasible(tr.eta_max)?;
    let (mut lo, mut hi) = (tr.eta_min.ln(), tr.eta_max.ln());
    if let Some((t, kl)) = feasible(tr.eta_min) {
        // Only reachable with the penalty on and η = 0 infeasible.
        t_hi = t;
        kl_hi = kl;
        hi = lo;
    }
    for _ in 0..200 {
        if hi.exp() - lo.exp() <= tr.tolerance * hi.exp().max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        match feasible(mid.exp()) {
            Some((t, kl)) => {
                hi = mid;
                t_hi = t;
                kl_hi = kl;
            }
            None => lo = mid,
        }
    }
    Some((
        t_hi,
        DualSolution {
            eta: hi.exp(),
            constraint_active: true,
            kl: kl_hi,
        },
    ))
}

#[derive(Clone, Debug)]
pub struct GaussianUpdate {
    pub gaussian: Gaussian,
    pub dual: DualSolution,
    /// No multiplier in the bracket gave a positive definite precision;
    /// `gaussian` is the old component.
    pub rejected: bool,
}

fn tilted_gaussian(old: &Gaussian, f: &QuadraticSurrogate, tau: f64) -> Option<Gaussian> {
    let q = old.precision() + f.quadratic() / tau;
    let qm = old.precision_mean() + f.linear() / tau;
    Gaussian::from_natural(&q, &qm).ok()
}

/// KL-bounded update of one Gaussian against the surrogate `phi` of the log
/// density ratio. The update maximises `E_q[-φ̂]` (minus the KL penalty).
pub fn gaussian_more_update(old: &Gaussian, phi: &QuadraticSurrogate, tr: &TrustRegionConfig) -> Result<GaussianUpdate> {
    tr.validate()?;
    check_dim(old.dim(), phi.dim())?;
    let f = phi.negated();
    let solved = solve_dual(tr, |eta| {
        let tau = tr.divisor(eta);
        if !(tau > 0.0) {
            return None;
        }
        let g = tilted_gaussian(old, &f, tau)?;
        let kl = kl_gaussian(&g, old).ok()?;
        kl.is_finite().then_some((g, kl))
    });
    Ok(match solved {
        Some((gaussian, dual)) => GaussianUpdate {
            gaussian,
            dual,
            rejected: false,
        },
        None => GaussianUpdate {
            gaussian: old.clone(),
            dual: DualSolution {
                eta: tr.eta_max,
                constraint_active: true,
                kl: 0.0,
            },
            rejected: true,
        },
    })
}

/// Log partition `log ∫ exp(-½ xᵀQx + qᵀx) dx`, or `None` if `Q` is not PD.
fn log_partition(precision: &DMatrix<f64>, precision_mean: &DVector<f64>) -> Option<f64> {
    let sym = (precision + precision.transpose()) * 0.5;
    let chol = Cholesky::new(sym)?;
    let d = precision_mean.len() as f64;
    let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let sol = chol.solve(precision_mean);
    Some(0.5 * precision_mean.dot(&sol) - 0.5 * log_det + 0.5 * d * LN_2PI)
}

/// Dual `g(η)` of the Gaussian update; `None` where the tilted precision is not PD.
pub fn gaussian_dual(old: &Gaussian, phi: &QuadraticSurrogate, tr: &TrustRegionConfig, eta: f64) -> Option<f64> {
    let f = phi.negated();
    let tau = tr.divisor(eta);
    let q = old.precision() + f.quadratic() / tau;
    let qm = old.precision_mean() + f.linear() / tau;
    let a_new = log_partition(&q, &qm)?;
    let a_old = log_partition(old.precision(), old.precision_mean())?;
    Some(eta * tr.epsilon + tau * (a_new - a_old) + f.offset())
}

fn tilted_categorical(old: &Categorical, losses: &[f64], tau: f64) -> Categorical {
    let logits: Vec<f64> = old
        .probs()
        .iter()
        .zip(losses)
        .map(|(p, l)| p.ln() - l / tau)
        .collect();
    Categorical::from_logits(&logits)
}

/// KL-bounded update of mixture coefficients given per-component losses
/// `φ(zᵢ) = E_{q(x|zᵢ)}[log(q_old / p)]`.
pub fn categorical_more_update(
    old: &Categorical,
    losses: &[f64],
    tr: &TrustRegionConfig,
) -> Result<(Categorical, DualSolution)> {
    tr.validate()?;
    check_dim(old.len(), losses.len())?;
    if old.probs().iter().any(|p| !(*p > 0.0)) {
        return Err(EimError::Domain("old coefficients must be strictly positive".into()));
    }
    if losses.iter().any(|l| !l.is_finite()) {
        return Err(EimError::Numerical("non-finite coefficient loss".into()));
    }
    let solved = solve_dual(tr, |eta| {
        let tau = tr.divisor(eta);
        if !(tau > 0.0) {
            return None;
        }
        let c = tilted_categorical(old, losses, tau);
        if c.probs().iter().any(|p| !(*p > 0.0)) {
            // Underflowed weights would leave the support of the reference.
            return None;
        }
        let kl = kl_categorical(&c, old).ok()?;
        Some((c, kl))
    });
    solved.ok_or_else(|| EimError::Numerical("categorical dual has no feasible multiplier".into()))
}

/// Dual `g(η)` of the categorical update.
pub fn categorical_dual(old: &Categorical, losses: &[f64], tr: &TrustRegionConfig, eta: f64) -> f64 {
    let tau = tr.divisor(eta);
    let terms: Vec<f64> = old
        .probs()
        .iter()
        .zip(losses)
        .map(|(p, l)| p.ln() - l / tau)
        .collect();
    eta * tr.epsilon + tau * log_sum_exp(&terms)
}
