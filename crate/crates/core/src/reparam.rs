//! Unconstrained parameterisations and pathwise gradients for Gaussians and
//! Gaussian mixtures.
//!
//! A Cholesky factor `L` is stored as its log-diagonal followed by the
//! strictly lower entries (row major). Samples are `x = μ + L u`.

use nalgebra::{DMatrix, DVector};

use crate::distributions::{Categorical, Gaussian, Gmm};
use crate::error::{check_dim, EimError, Result};

pub fn chol_param_count(d: usize) -> usize {
    d * (d + 1) / 2
}

pub fn chol_to_params(l: &DMatrix<f64>) -> Vec<f64> {
    let d = l.nrows();
    let mut out = Vec::with_capacity(chol_param_count(d));
    for i in 0..d {
        out.push(l[(i, i)].ln());
    }
    for i in 1..d {
        for j in 0..i {
            out.push(l[(i, j)]);
        }
    }
    out
}

pub fn params_to_chol(params: &[f64], d: usize) -> Result<DMatrix<f64>> {
    check_dim(chol_param_count(d), params.len())?;
    let mut l = DMatrix::zeros(d, d);
    for i in 0..d {
        l[(i, i)] = params[i].exp();
    }
    let mut k = d;
    for i in 1..d {
        for j in 0..i {
            l[(i, j)] = params[k];
            k += 1;
        }
    }
    Ok(l)
}

/// Maps `∂/∂L` (only the lower triangle is read) to the parameter gradient.
pub fn chol_grad_to_params(l: &DMatrix<f64>, grad_l: &DMatrix<f64>) -> Vec<f64> {
    let d = l.nrows();
    let mut out = Vec::with_capacity(chol_param_count(d));
    for i in 0..d {
        out.push(grad_l[(i, i)] * l[(i, i)]);
    }
    for i in 1..d {
        for j in 0..i {
            out.push(grad_l[(i, j)]);
        }
    }
    out
}

/// `KL(N(μ, LLᵀ) ‖ old)` with its gradients w.r.t. `μ` and the lower triangle of `L`.
pub fn gaussian_kl_with_grad(
    mean: &DVector<f64>,
    l: &DMatrix<f64>,
    old: &Gaussian,
) -> (f64, DVector<f64>, DMatrix<f64>) {
    let d = mean.len();
    let prec = old.precision();
    let diff = mean - old.mean();
    let prec_diff = prec * &diff;
    let prec_l = prec * l;
    let log_det: f64 = 2.0 * (0..d).map(|i| l[(i, i)].ln()).sum::<f64>();
    let trace = prec_l.component_mul(l).sum();
    let kl = 0.5 * (trace + diff.dot(&prec_diff) - d as f64 + old.log_det_covariance() - log_det);
    let mut grad_l = prec_l.lower_triangle();
    for i in 0..d {
        grad_l[(i, i)] -= 1.0 / l[(i, i)];
    }
    (kl, prec_diff, grad_l)
}

/// Flat layout of a mixture: `[logits (K), then per component: mean (d), Cholesky params]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MixtureLayout {
    pub components: usize,
    pub dim: usize,
}

impl MixtureLayout {
    pub fn of(gmm: &Gmm) -> Self {
        Self {
            components: gmm.num_components(),
            dim: gmm.dim(),
        }
    }

    pub fn block(&self) -> usize {
        self.dim + chol_param_count(self.dim)
    }

    pub fn len(&self) -> usize {
        self.components * (1 + self.block())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn mean_offset(&self, i: usize) -> usize {
        self.components + i * self.block()
    }

    pub fn chol_offset(&self, i: usize) -> usize {
        self.mean_offset(i) + self.dim
    }

    pub fn pack(&self, gmm: &Gmm) -> Vec<f64> {
        let mut out: Vec<f64> = gmm.weights().probs().iter().map(|p| p.ln()).collect();
        for c in gmm.components() {
            out.extend(c.mean().iter());
            out.extend(chol_to_params(c.cholesky()));
        }
        out
    }

    pub fn logits<'a>(&self, params: &'a [f64]) -> &'a [f64] {
        &params[..self.components]
    }

    pub fn mean(&self, params: &[f64], i: usize) -> DVector<f64> {
        let o = self.mean_offset(i);
        DVector::from_column_slice(&params[o..o + self.dim])
    }

    pub fn cholesky(&self, params: &[f64], i: usize) -> Result<DMatrix<f64>> {
        let o = self.chol_offset(i);
        params_to_chol(&params[o..o + chol_param_count(self.dim)], self.dim)
    }

    pub fn unpack(&self, params: &[f64]) -> Result<Gmm> {
        check_dim(self.len(), params.len())?;
        if params.iter().any(|v| !v.is_finite()) {
            return Err(EimError::Numerical("non-finite mixture parameters".into()));
        }
        let comps = (0..self.components)
            .map(|i| Gaussian::from_cholesky(self.mean(params, i), self.cholesky(params, i)?))
            .collect::<Result<Vec<_>>>()?;
        Gmm::new(comps, Categorical::from_logits(self.logits(params)))
    }
}

/// Monte Carlo value and gradient of `E_q[ℓ(x)]` for a mixture `q`, using
/// stratified per-component base noise `noise[i]` (rows are `u`).
///
/// Component parameters get pathwise gradients through `x = μᵢ + Lᵢ u`. The
/// logits get the score-function estimator `Σᵢ πᵢ (cᵢ - b) (eᵢ - π)` with
/// baseline `b`, where `cᵢ` is the mean loss of component `i`.
///
/// `loss` returns the values and the `x`-gradients (n×d) of `ℓ` for a batch.
pub struct MixtureGradient {
    pub value: f64,
    pub component_values: Vec<f64>,
    pub grad: Vec<f64>,
}

pub fn mixture_expectation_gradient(
    layout: &MixtureLayout,
    params: &[f64],
    noise: &[DMatrix<f64>],
    baseline: f64,
    loss: &mut dyn FnMut(&DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)>,
) -> Result<MixtureGradient> {
    check_dim(layout.len(), params.len())?;
    check_dim(layout.components, noise.len())?;
    let k = layout.components;
    let d = layout.dim;
    let pi = Categorical::from_logits(layout.logits(params));
    let pi = pi.probs();
    let mut grad = vec![0.0; layout.len()];
    let mut comp_values = Vec::with_capacity(k);
    for i in 0..k {
        let u = &noise[i];
        check_dim(d, u.ncols())?;
        let n = u.nrows();
        let mu = layout.mean(params, i);
        let l = layout.cholesky(params, i)?;
        let mut xs = u * l.transpose();
        for mut row in xs.row_iter_mut() {
            row += mu.transpose();
        }
        let (vals, gx) = loss(&xs)?;
        check_dim(n, vals.len())?;
        comp_values.push(vals.mean());
        let w = pi[i] / n as f64;
        let g_mu = gx.row_sum().transpose() * w;
        let g_l = (gx.transpose() * u * w).lower_triangle();
        let o = layout.mean_offset(i);
        grad[o..o + d].copy_from_slice(g_mu.as_slice());
        let o = layout.chol_offset(i);
        grad[o..o + chol_param_count(d)].copy_from_slice(&chol_grad_to_params(&l, &g_l));
    }
    for i in 0..k {
        let c = pi[i] * (comp_values[i] - baseline);
        for j in 0..k {
            let e = if i == j { 1.0 } else { 0.0 };
            grad[j] += c * (e - pi[j]);
        }
    }
    let value = (0..k).map(|i| pi[i] * comp_values[i]).sum();
    Ok(MixtureGradient {
        value,
        component_values: comp_values,
        grad,
    })
}

/// Upper-bound KL penalty `KL(π ‖ π_old) + Σᵢ πᵢ KL(qᵢ ‖ q_old,ᵢ)` and its
/// gradient in the flat mixture parameters.
pub fn mixture_kl_penalty_with_grad(layout: &MixtureLayout, params: &[f64], old: &Gmm) -> Result<(f64, Vec<f64>)> {
    check_dim(layout.components, old.num_components())?;
    let k = layout.components;
    let pi = Categorical::from_logits(layout.logits(params));
    let pi = pi.probs();
    let mut grad = vec![0.0; layout.len()];
    let mut terms = Vec::with_capacity(k);
    for i in 0..k {
        let mu = layout.mean(params, i);
        let l = layout.cholesky(params, i)?;
        let (kl, g_mu, g_l) = gaussian_kl_with_grad(&mu, &l, &old.components()[i]);
        let o = layout.mean_offset(i);
        for (t, v) in g_mu.iter().enumerate() {
            grad[o + t] = pi[i] * v;
        }
        let o = layout.chol_offset(i);
        for (t, v) in chol_grad_to_params(&l, &g_l).into_iter().enumerate() {
            grad[o + t] = pi[i] * v;
        }
        terms.push((pi[i] / old.weights().probs()[i]).ln() + kl);
    }
    let total: f64 = (0..k).map(|i| pi[i] * terms[i]).sum();
    for j in 0..k {
        grad[j] = pi[j] * (terms[j] - total);
    }
    Ok((total, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::kl_gaussian;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    fn random_gmm(k: usize, d: usize, seed: u64) -> Gmm {
        let mut rng = rng_from_seed(seed);
        let comps = (0..k)
            .map(|_| {
                let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
                Gaussian::new(
                    DVector::from_fn(d, |_, _| rng.random_range(-2.0..2.0)),
                    &a * a.transpose() + DMatrix::identity(d, d) * 0.5,
                )
                .unwrap()
            })
            .collect();
        let logits: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
        Gmm::new(comps, Categorical::from_logits(&logits)).unwrap()
    }

    fn fd_check(f: &mut dyn FnMut(&[f64]) -> f64, params: &[f64], grad: &[f64]) {
        let h = 1e-6;
        for t in 0..params.len() {
            let mut p = params.to_vec();
            p[t] += h;
            let up = f(&p);
            p[t] -= 2.0 * h;
            let down = f(&p);
            let fd = (up - down) / (2.0 * h);
            let scale = fd.abs().max(grad[t].abs()).max(1e-3);
            assert!((fd - grad[t]).abs() / scale < 1e-3, "param {t}: fd {fd} vs {}", grad[t]);
        }
    }

    #[test]
    fn cholesky_params_round_trip() {
        let l = DMatrix::from_row_slice(3, 3, &[1.5, 0.0, 0.0, -0.3, 0.7, 0.0, 0.2, 0.4, 2.0]);
        let back = params_to_chol(&chol_to_params(&l), 3).unwrap();
        assert!((back - l).amax() < 1e-15);
    }

    #[test]
    fn mixture_pack_round_trip() {
        let g = random_gmm(3, 2, 1);
        let layout = MixtureLayout::of(&g);
        let back = layout.unpack(&layout.pack(&g)).unwrap();
        for (a, b) in back.components().iter().zip(g.components()) {
            assert!((a.mean() - b.mean()).amax() < 1e-12);
            assert!((a.cholesky() - b.cholesky()).amax() < 1e-12);
        }
        assert!((back.weights().probs() - g.weights().probs()).amax() < 1e-12);
    }

    #[test]
    fn gaussian_kl_value_and_gradient() {
        let g = random_gmm(2, 3, 2);
        let old = &g.components()[0];
        let new = &g.components()[1];
        let (kl, _, _) = gaussian_kl_with_grad(new.mean(), new.cholesky(), old);
        assert!((kl - kl_gaussian(new, old).unwrap()).abs() < 1e-10);
        let d = 3;
        let mut params: Vec<f64> = new.mean().iter().cloned().collect();
        params.extend(chol_to_params(new.cholesky()));
        let (_, gm, gl) = gaussian_kl_with_grad(new.mean(), new.cholesky(), old);
        let mut grad: Vec<f64> = gm.iter().cloned().collect();
        grad.extend(chol_grad_to_params(new.cholesky(), &gl));
        fd_check(
            &mut |p: &[f64]| {
                let mu = DVector::from_column_slice(&p[..d]);
                let l = params_to_chol(&p[d..], d).unwrap();
                gaussian_kl_with_grad(&mu, &l, old).0
            },
            &params,
            &grad,
        );
    }

    #[test]
    fn reparametrised_gradient_matches_finite_differences() {
        let g = random_gmm(3, 2, 3);
        let layout = MixtureLayout::of(&g);
        let params = layout.pack(&g);
        let mut rng = rng_from_seed(4);
        let noise: Vec<DMatrix<f64>> = (0..3)
            .map(|_| DMatrix::from_fn(40, 2, |_, _| crate::rng::standard_normal(&mut rng)))
            .collect();
        // ℓ(x) = sin(x₀) + x₀ x₁² / 4
        let mut loss = |xs: &DMatrix<f64>| -> Result<(DVector<f64>, DMatrix<f64>)> {
            let n = xs.nrows();
            let vals = DVector::from_fn(n, |j, _| xs[(j, 0)].sin() + xs[(j, 0)] * xs[(j, 1)].powi(2) / 4.0);
            let grads = DMatrix::from_fn(n, 2, |j, c| {
                if c == 0 {
                    xs[(j, 0)].cos() + xs[(j, 1)].powi(2) / 4.0
                } else {
                    xs[(j, 0)] * xs[(j, 1)] / 2.0
                }
            });
            Ok((vals, grads))
        };
        let out = mixture_expectation_gradient(&layout, &params, &noise, 0.37, &mut loss).unwrap();
        fd_check(
            &mut |p: &[f64]| {
                mixture_expectation_gradient(&layout, p, &noise, 0.0, &mut loss)
                    .unwrap()
                    .value
            },
            &params,
            &out.grad,
        );
    }

    #[test]
    fn penalty_gradient_matches_finite_differences() {
        let old = random_gmm(3, 2, 5);
        let new = random_gmm(3, 2, 6);
        let layout = MixtureLayout::of(&new);
        let params = layout.pack(&new);
        let (_, grad) = mixture_kl_penalty_with_grad(&layout, &params, &old).unwrap();
        fd_check(
            &mut |p: &[f64]| mixture_kl_penalty_with_grad(&layout, p, &old).unwrap().0,
            &params,
            &grad,
        );
        let (zero, _) = mixture_kl_penalty_with_grad(&layout, &layout.pack(&old), &old).unwrap();
        assert!(zero.abs() < 1e-12);
    }
}
