//! Gaussian mixtures of experts `q(x|y) = Σᵢ q(zᵢ|y) N(x; μᵢ(y), Σᵢ(y))`,
//! trained by conditional EIM or by maximum likelihood.
//!
//! The gating network maps a context to `K` logits. Each expert network maps
//! a context to a mean followed by Cholesky parameters in the layout of
//! [`crate::reparam`]. Public functions take row-major batches (one sample
//! or context per row).

use std::collections::HashSet;
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::discriminator::Discriminator;
use crate::distributions::{kl_gaussian, log_sum_exp, Gaussian, Gmm};
use crate::eim_gmm::{init_gmm, upper_bound_1d, BoundCheck};
use crate::error::{check_dim, EimError, Result};
use crate::eval::ConditionalDensity;
use crate::nn::{Activation, Adam, Mlp, MlpGrads};
use crate::ratio_estimator::{FeatureMap, RatioEstimator, Samples, TrainConfig};
use crate::reparam::{chol_grad_to_params, chol_param_count, chol_to_params, gaussian_kl_with_grad, params_to_chol};
use crate::rng::{fill_standard_normal, permutation, rng_from_seed, substream, EimRng};
use crate::trace::Trace;

#[derive(Clone, Debug, PartialEq)]
pub struct MixtureOfExperts {
    gating: Mlp,
    experts: Vec<Mlp>,
    dim: usize,
}

impl MixtureOfExperts {
    pub fn new(gating: Mlp, experts: Vec<Mlp>, dim: usize) -> Result<Self> {
        if experts.is_empty() || dim == 0 {
            return Err(EimError::Input("need at least one expert and a positive dimension".into()));
        }
        check_dim(experts.len(), gating.output_dim())?;
        for e in &experts {
            check_dim(gating.input_dim(), e.input_dim())?;
            check_dim(dim + chol_param_count(dim), e.output_dim())?;
        }
        Ok(Self { gating, experts, dim })
    }

    /// Randomly initialised networks with the given hidden widths.
    pub fn random<R: Rng + ?Sized>(
        context_dim: usize,
        dim: usize,
        components: usize,
        hidden: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        let mut sizes = vec![context_dim];
        sizes.extend_from_slice(hidden);
        let mut gs = sizes.clone();
        gs.push(components);
        let gating = Mlp::new(&gs, Activation::Relu, rng);
        sizes.push(dim + chol_param_count(dim));
        let experts = (0..components).map(|_| Mlp::new(&sizes, Activation::Relu, rng)).collect();
        Self::new(gating, experts, dim)
    }

    pub fn gating(&self) -> &Mlp {
        &self.gating
    }
    pub fn experts(&self) -> &[Mlp] {
        &self.experts
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn context_dim(&self) -> usize {
        self.gating.input_dim()
    }
    pub fn num_components(&self) -> usize {
        self.experts.len()
    }

    pub fn gating_mut(&mut self) -> &mut Mlp {
        &mut self.gating
    }
    pub fn expert_mut(&mut self, i: usize) -> &mut Mlp {
        &mut self.experts[i]
    }

    /// `log q(z|y)`, one row per context.
    pub fn gating_log_probs(&self, ctx: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_dim(self.context_dim(), ctx.ncols())?;
        let logits = self.gating.forward(&ctx.transpose())?;
        let mut out = DMatrix::zeros(ctx.nrows(), self.num_components());
        for j in 0..ctx.nrows() {
            let lp = log_softmax(&logits.column(j).iter().copied().collect::<Vec<_>>());
            for (i, v) in lp.into_iter().enumerate() {
                out[(j, i)] = v;
            }
        }
        Ok(out)
    }

    /// `q(z|y)`, one row per context.
    pub fn gating_probs(&self, ctx: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.gating_log_probs(ctx)?.map(f64::exp))
    }

    /// Mean and Cholesky factor of expert `i` at each context row.
    pub fn expert_params(&self, i: usize, ctx: &DMatrix<f64>) -> Result<Vec<(DVector<f64>, DMatrix<f64>)>> {
        check_dim(self.context_dim(), ctx.ncols())?;
        let out = self.experts[i].forward(&ctx.transpose())?;
        (0..ctx.nrows())
            .map(|j| split_output(&out.column(j).iter().copied().collect::<Vec<_>>(), self.dim, ctx, j))
            .collect()
    }

    pub fn expert_gaussians(&self, i: usize, ctx: &DMatrix<f64>) -> Result<Vec<Gaussian>> {
        self.expert_params(i, ctx)?
            .into_iter()
            .map(|(m, l)| Gaussian::from_cholesky(m, l))
            .collect()
    }

    /// `log q(zᵢ|y) + log N(x; μᵢ(y), Σᵢ(y))` for each row pair (n × K).
    pub fn joint_log_densities(&self, xs: &DMatrix<f64>, ctx: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_dim(self.dim, xs.ncols())?;
        check_dim(xs.nrows(), ctx.nrows())?;
        let mut out = self.gating_log_probs(ctx)?;
        for i in 0..self.num_components() {
            for (j, (m, l)) in self.expert_params(i, ctx)?.iter().enumerate() {
                let x = xs.row(j).transpose();
                out[(j, i)] += chol_log_density(&x, m, l)?.0;
            }
        }
        Ok(out)
    }

    pub fn log_density(&self, xs: &DMatrix<f64>, ctx: &DMatrix<f64>) -> Result<DVector<f64>> {
        let joint = self.joint_log_densities(xs, ctx)?;
        Ok(DVector::from_iterator(
            joint.nrows(),
            joint.row_iter().map(|r| log_sum_exp(&r.iter().copied().collect::<Vec<_>>())),
        ))
    }

    /// One sample per context row, with the expert it came from.
    pub fn sample<R: Rng + ?Sized>(&self, ctx: &DMatrix<f64>, rng: &mut R) -> Result<(DMatrix<f64>, Vec<usize>)> {
        let probs = self.gating_probs(ctx)?;
        let params: Vec<_> = (0..self.num_components())
            .map(|i| self.expert_params(i, ctx))
            .collect::<Result<_>>()?;
        let n = ctx.nrows();
        let mut xs = DMatrix::zeros(n, self.dim);
        let mut labels = Vec::with_capacity(n);
        let mut u = vec![0.0; self.dim];
        for j in 0..n {
            let mut r = rng.random::<f64>();
            let mut z = self.num_components() - 1;
            for i in 0..self.num_components() {
                if r < probs[(j, i)] {
                    z = i;
                    break;
                }
                r -= probs[(j, i)];
            }
            fill_standard_normal(rng, &mut u);
            let (m, l) = &params[z][j];
            let x = m + l * DVector::from_column_slice(&u);
            xs.row_mut(j).copy_from(&x.transpose());
            labels.push(z);
        }
        Ok((xs, labels))
    }

    /// `mean_y KL(q(z|y) ‖ q_old(z|y))` over the context rows.
    pub fn expected_gating_kl(&self, old: &Self, ctx: &DMatrix<f64>) -> Result<f64> {
        let lp = self.gating_log_probs(ctx)?;
        let lo = old.gating_log_probs(ctx)?;
        let mut total = 0.0;
        for j in 0..ctx.nrows() {
            for i in 0..self.num_components() {
                total += lp[(j, i)].exp() * (lp[(j, i)] - lo[(j, i)]);
            }
        }
        Ok(total / ctx.nrows() as f64)
    }

    /// `mean_y KL(qᵢ(x|y) ‖ q_old,ᵢ(x|y))` for every expert.
    pub fn expected_component_kls(&self, old: &Self, ctx: &DMatrix<f64>) -> Result<Vec<f64>> {
        (0..self.num_components())
            .map(|i| {
                let a = self.expert_gaussians(i, ctx)?;
                let b = old.expert_gaussians(i, ctx)?;
                let mut total = 0.0;
                for (x, y) in a.iter().zip(&b) {
                    total += kl_gaussian(x, y)?;
                }
                Ok(total / ctx.nrows() as f64)
            })
            .collect()
    }
}

impl ConditionalDensity for MixtureOfExperts {
    fn dim(&self) -> usize {
        self.dim
    }
    fn context_dim(&self) -> usize {
        MixtureOfExperts::context_dim(self)
    }
    fn log_density_given(&self, xs: &DMatrix<f64>, ctx: &DMatrix<f64>) -> Result<DVector<f64>> {
        self.log_density(xs, ctx)
    }
    fn sample_given(&self, ctx: &DMatrix<f64>, rng: &mut EimRng) -> Result<DMatrix<f64>> {
        Ok(self.sample(ctx, rng)?.0)
    }
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(logits);
    logits.iter().map(|v| v - lse).collect()
}

fn split_output(o: &[f64], d: usize, ctx: &DMatrix<f64>, row: usize) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let mean = DVector::from_column_slice(&o[..d]);
    let l = params_to_chol(&o[d..], d)?;
    let bad = mean.iter().any(|v| !v.is_finite())
        || l.iter().any(|v| !v.is_finite())
        || (0..d).any(|k| !(l[(k, k)] > 0.0));
    if bad {
        let c: Vec<f64> = ctx.row(row).iter().copied().collect();
        return Err(EimError::Numerical(format!(
            "expert emitted a non-finite mean or Cholesky factor at context {c:?} (outputs {o:?})"
        )));
    }
    Ok((mean, l))
}

/// `log N(x; μ, LLᵀ)` and the whitened residual `L⁻¹(x − μ)`.
fn chol_log_density(x: &DVector<f64>, mean: &DVector<f64>, l: &DMatrix<f64>) -> Result<(f64, DVector<f64>)> {
    let d = mean.len();
    let v = l
        .solve_lower_triangular(&(x - mean))
        .ok_or_else(|| EimError::NotPositiveDefinite("singular expert Cholesky factor".into()))?;
    let log_det: f64 = (0..d).map(|k| l[(k, k)].ln()).sum();
    Ok((-0.5 * v.norm_squared() - log_det - 0.5 * d as f64 * (2.0 * PI).ln(), v))
}

/// Distinct rows in order of first appearance.
pub fn unique_rows(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut seen = HashSet::new();
    let keep: Vec<usize> = (0..m.nrows())
        .filter(|&j| seen.insert(m.row(j).iter().map(|v| v.to_bits()).collect::<Vec<u64>>()))
        .collect();
    m.select_rows(&keep)
}

/// Gating and expert networks initialised so that the model starts as the
/// context-free mixture of [`init_gmm`]: the output layers have zero
/// weights, the gating is uniform, and expert biases hold the mixture means
/// and Cholesky factors.
pub fn init_moe(
    xs: &DMatrix<f64>,
    ctx: &DMatrix<f64>,
    components: usize,
    hidden: &[usize],
    seed: u64,
) -> Result<MixtureOfExperts> {
    check_dim(xs.nrows(), ctx.nrows())?;
    let gmm = init_gmm(xs, components, seed)?;
    let mut rng = substream(seed, 1);
    let mut moe = MixtureOfExperts::random(ctx.ncols(), xs.ncols(), components, hidden, &mut rng)?;
    let out = moe.gating.layers_mut().last_mut().expect("at least one layer");
    out.weight.fill(0.0);
    out.bias.fill(0.0);
    for (i, c) in gmm.components().iter().enumerate() {
        let out = moe.experts[i].layers_mut().last_mut().expect("at least one layer");
        out.weight.fill(0.0);
        let mut bias = c.mean().as_slice().to_vec();
        bias.extend(chol_to_params(c.cholesky()));
        out.bias.copy_from_slice(&bias);
    }
    Ok(moe)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CondEimConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Passes over the distinct training contexts per gating or component update.
    pub epochs: usize,
    pub contexts_per_batch: usize,
    /// Reparametrised samples per (context, component).
    pub samples_per_context: usize,
    /// Weight-one KL penalties towards the previous model; off gives the
    /// unregularised objective.
    pub kl_penalty: bool,
    pub gating_first: bool,
    /// Weight the expected log ratio of each expert by `q(zᵢ|y)` per context
    /// (`true`) or by its context average.
    pub gating_weight_inside: bool,
    pub initial_epochs: usize,
    pub ratio: TrainConfig,
    pub seed: u64,
}

impl Default for CondEimConfig {
    fn default() -> Self {
        Self {
            iterations: 60,
            learning_rate: 1e-3,
            beta1: 0.5,
            beta2: 0.999,
            epochs: 10,
            contexts_per_batch: 100,
            samples_per_context: 10,
            kl_penalty: true,
            gating_first: true,
            gating_weight_inside: true,
            initial_epochs: 20,
            ratio: TrainConfig {
                hidden: vec![64, 64, 64],
                l2: 5e-4,
                max_epochs: 3,
                ..TrainConfig::default()
            },
            seed: 0,
        }
    }
}

impl CondEimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.contexts_per_batch == 0 || self.samples_per_context == 0 || self.initial_epochs == 0 {
            return Err(EimError::Config("epochs, batch sizes and sample counts must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(EimError::Config("invalid Adam settings".into()));
        }
        self.ratio.validate()
    }

    fn kl_weight(&self) -> f64 {
        if self.kl_penalty {
            1.0
        } else {
            0.0
        }
    }

    fn adam(&self) -> Adam {
        Adam::new(self.learning_rate, self.beta1, self.beta2, 1e-8)
    }
}

/// Gating objective and its gradient for a batch of contexts:
/// `mean_y [Σᵢ q(zᵢ|y) φᵢ(y) + w · KL(q(z|y) ‖ q_old(z|y))]`, where
/// `phi[(j, i)]` is the expected log ratio under expert `i` at context `j`.
pub fn gating_objective(
    gating: &Mlp,
    ctx: &DMatrix<f64>,
    old_log_probs: &DMatrix<f64>,
    phi: &DMatrix<f64>,
    kl_weight: f64,
) -> Result<(f64, MlpGrads)> {
    let (n, k) = (ctx.nrows(), gating.output_dim());
    check_dim(n, phi.nrows())?;
    check_dim(k, phi.ncols())?;
    check_dim(n, old_log_probs.nrows())?;
    let cache = gating.forward_cached(&ctx.transpose())?;
    let logits = cache.output();
    let mut grad = DMatrix::zeros(k, n);
    let mut loss = 0.0;
    for j in 0..n {
        let lp = log_softmax(&logits.column(j).iter().copied().collect::<Vec<_>>());
        let p: Vec<f64> = lp.iter().map(|v| v.exp()).collect();
        // ∂/∂pᵢ of the per-context loss, dropping the constant that the
        // softmax projection removes.
        let g: Vec<f64> = (0..k)
            .map(|i| phi[(j, i)] + kl_weight * (lp[i] - old_log_probs[(j, i)]))
            .collect();
        let gbar: f64 = p.iter().zip(&g).map(|(a, b)| a * b).sum();
        for i in 0..k {
            loss += p[i] * (phi[(j, i)] + kl_weight * (lp[i] - old_log_probs[(j, i)]));
            grad[(i, j)] = p[i] * (g[i] - gbar) / n as f64;
        }
    }
    let (grads, _) = gating.backward(&cache, &grad);
    Ok((loss / n as f64, grads))
}

/// Expert objective and its gradient for a batch of contexts:
/// `Σ_j w_j [mean_s φ(μ(y_j) + L(y_j) u_js, y_j) + w_kl · KL(N(y_j) ‖ old_j)]`.
/// `noise` holds `S` standard normal rows per context, context-major.
#[allow(clippy::too_many_arguments)]
pub fn component_objective(
    expert: &Mlp,
    dim: usize,
    ctx: &DMatrix<f64>,
    old: &[Gaussian],
    weights: &[f64],
    noise: &DMatrix<f64>,
    est: &RatioEstimator,
    kl_weight: f64,
) -> Result<(f64, MlpGrads)> {
    let n = ctx.nrows();
    check_dim(n, old.len())?;
    check_dim(n, weights.len())?;
    check_dim(dim, noise.ncols())?;
    if n == 0 || noise.nrows() % n != 0 {
        return Err(EimError::Input("noise rows must be a positive multiple of the contexts".into()));
    }
    let s = noise.nrows() / n;
    let cache = expert.forward_cached(&ctx.transpose())?;
    let out = cache.output();
    let mut xs = DMatrix::zeros(n * s, dim);
    let rows: Vec<usize> = (0..n).flat_map(|j| std::iter::repeat_n(j, s)).collect();
    let xctx = ctx.select_rows(&rows);
    let mut params = Vec::with_capacity(n);
    for j in 0..n {
        let (m, l) = split_output(&out.column(j).iter().copied().collect::<Vec<_>>(), dim, ctx, j)?;
        for t in 0..s {
            let u = noise.row(j * s + t).transpose();
            xs.row_mut(j * s + t).copy_from(&(&m + &l * u).transpose());
        }
        params.push((m, l));
    }
    let (phi, gphi) = est.log_ratio_with_gradient(&xs, Some(&xctx))?;
    let mut grad_out = DMatrix::zeros(out.nrows(), n);
    let mut loss = 0.0;
    for (j, (m, l)) in params.iter().enumerate() {
        let (kl, gmu, gl) = gaussian_kl_with_grad(m, l, &old[j]);
        let mut dmu = gmu * kl_weight;
        let mut dl = gl * kl_weight;
        let mut e = 0.0;
        for t in 0..s {
            let r = j * s + t;
            e += phi[r] / s as f64;
            let g = gphi.row(r).transpose() / s as f64;
            dl += &g * noise.row(r);
            dmu += g;
        }
        let w = weights[j];
        loss += w * (e + kl_weight * kl);
        let dp = chol_grad_to_params(l, &dl);
        for k in 0..dim {
            grad_out[(k, j)] = w * dmu[k];
        }
        for (k, v) in dp.into_iter().enumerate() {
            grad_out[(dim + k, j)] = w * v;
        }
    }
    let (grads, _) = expert.backward(&cache, &grad_out);
    Ok((loss, grads))
}

/// `mean_s φ(x_s, y)` with `x_s ~ qᵢ(·|y)` for every context row and expert.
fn expected_log_ratios(
    model: &MixtureOfExperts,
    ctx: &DMatrix<f64>,
    est: &RatioEstimator,
    samples: usize,
    rng: &mut EimRng,
) -> Result<DMatrix<f64>> {
    let n = ctx.nrows();
    let rows: Vec<usize> = (0..n).flat_map(|j| std::iter::repeat_n(j, samples)).collect();
    let xctx = ctx.select_rows(&rows);
    let mut out = DMatrix::zeros(n, model.num_components());
    let mut u = vec![0.0; model.dim];
    for i in 0..model.num_components() {
        let params = model.expert_params(i, ctx)?;
        let mut xs = DMatrix::zeros(n * samples, model.dim);
        for (j, (m, l)) in params.iter().enumerate() {
            for t in 0..samples {
                fill_standard_normal(rng, &mut u);
                let x = m + l * DVector::from_column_slice(&u);
                xs.row_mut(j * samples + t).copy_from(&x.transpose());
            }
        }
        let phi = est.log_ratio_batch(&xs, Some(&xctx))?;
        for j in 0..n {
            out[(j, i)] = phi.rows(j * samples, samples).mean();
        }
    }
    Ok(out)
}

fn batches(rng: &mut EimRng, n: usize, size: usize) -> Vec<Vec<usize>> {
    permutation(rng, n).chunks(size).map(|c| c.to_vec()).collect()
}

fn gating_step(
    model: &mut MixtureOfExperts,
    old_log_probs: &DMatrix<f64>,
    contexts: &DMatrix<f64>,
    est: &RatioEstimator,
    cfg: &CondEimConfig,
    opt: &mut Adam,
    rng: &mut EimRng,
) -> Result<f64> {
    let mut phi = expected_log_ratios(model, contexts, est, cfg.samples_per_context, rng)?;
    if !cfg.gating_weight_inside {
        for mut col in phi.column_iter_mut() {
            let m = col.mean();
            col.fill(m);
        }
    }
    let mut last = 0.0;
    for _ in 0..cfg.epochs {
        let mut total = 0.0;
        for b in batches(rng, contexts.nrows(), cfg.contexts_per_batch) {
            let (loss, grads) = gating_objective(
                &model.gating,
                &contexts.select_rows(&b),
                &old_log_probs.select_rows(&b),
                &phi.select_rows(&b),
                cfg.kl_weight(),
            )?;
            opt.step_mlp(&mut model.gating, &grads);
            total += loss * b.len() as f64;
        }
        last = total / contexts.nrows() as f64;
    }
    Ok(last)
}

#[allow(clippy::too_many_arguments)]
fn component_step(
    model: &mut MixtureOfExperts,
    i: usize,
    old: &[Gaussian],
    contexts: &DMatrix<f64>,
    est: &RatioEstimator,
    cfg: &CondEimConfig,
    opt: &mut Adam,
    rng: &mut EimRng,
) -> Result<f64> {
    let probs = model.gating_probs(contexts)?;
    let col = probs.column(i);
    let prior = col.mean().max(1e-6);
    let weights: Vec<f64> = col.iter().map(|p| p / prior).collect();
    let s = cfg.samples_per_context;
    let mut last = 0.0;
    for _ in 0..cfg.epochs {
        let mut total = 0.0;
        for b in batches(rng, contexts.nrows(), cfg.contexts_per_batch) {
            let ob: Vec<Gaussian> = b.iter().map(|&j| old[j].clone()).collect();
            let wb: Vec<f64> = b.iter().map(|&j| weights[j] / b.len() as f64).collect();
            let mut noise = DMatrix::zeros(b.len() * s, model.dim);
            fill_standard_normal(rng, noise.as_mut_slice());
            let (loss, grads) = component_objective(
                &model.experts[i],
                model.dim,
                &contexts.select_rows(&b),
                &ob,
                &wb,
                &noise,
                est,
                cfg.kl_weight(),
            )?;
            opt.step_mlp(&mut model.experts[i], &grads);
            total += loss * b.len() as f64;
        }
        last = total / contexts.nrows() as f64;
    }
    Ok(last)
}

fn check_pairs(xs: &DMatrix<f64>, ctx: &DMatrix<f64>, init: &MixtureOfExperts) -> Result<()> {
    if xs.nrows() < 2 {
        return Err(EimError::Input("need at least two samples".into()));
    }
    check_dim(xs.nrows(), ctx.nrows())?;
    check_dim(init.dim(), xs.ncols())?;
    check_dim(init.context_dim(), ctx.ncols())?;
    if xs.iter().chain(ctx.iter()).any(|v| !v.is_finite()) {
        return Err(EimError::Input("data contains non-finite values".into()));
    }
    Ok(())
}

/// Called after every iteration (and once before the first) with the
/// iteration number, the current model and the trace to append to.
pub type MoeMonitor<'a> = dyn FnMut(usize, &MixtureOfExperts, &mut Trace) -> Result<()> + 'a;

/// Conditional EIM on row-aligned samples `xs` and contexts `ctx`.
///
/// Trace metrics per iteration: `discriminator_bce`, `gating_loss`,
/// `component_loss[i]`, `gating_kl` and `component_kl[i]` (both averaged over
/// the training contexts).
pub fn run_eim_moe(
    xs: &DMatrix<f64>,
    ctx: &DMatrix<f64>,
    init: &MixtureOfExperts,
    cfg: &CondEimConfig,
    features: Option<Arc<dyn FeatureMap>>,
    monitor: &mut MoeMonitor,
) -> Result<(MixtureOfExperts, Trace)> {
    cfg.validate()?;
    check_pairs(xs, ctx, init)?;
    let mut rng = rng_from_seed(cfg.seed);
    let mut disc = Discriminator::new(xs, Some(ctx), features, cfg.ratio.validation_fraction, &mut rng);
    let ct = disc.ctx_train().expect("conditional").clone();
    let cv = disc.ctx_val().expect("conditional").clone();
    let contexts = unique_rows(ctx);
    let k = init.num_components();
    let mut model = init.clone();
    let mut gate_opt = cfg.adam();
    let mut expert_opts: Vec<Adam> = (0..k).map(|_| cfg.adam()).collect();
    let mut trace = Trace::new();
    monitor(0, &model, &mut trace)?;
    for it in 1..=cfg.iterations {
        let old = model.clone();
        let (mx, _) = old.sample(&ct, &mut rng)?;
        let (mv, _) = old.sample(&cv, &mut rng)?;
        let bce = disc.retrain(
            Samples::new(&mx, Some(&ct)),
            Samples::new(&mv, Some(&cv)),
            &cfg.ratio,
            cfg.initial_epochs,
            &mut rng,
        )?;
        let est = disc.get();
        let old_log_probs = old.gating_log_probs(&contexts)?;
        let old_experts: Vec<Vec<Gaussian>> = (0..k)
            .map(|i| old.expert_gaussians(i, &contexts))
            .collect::<Result<_>>()?;

        let mut gating_loss = 0.0;
        if cfg.gating_first {
            gating_loss = gating_step(&mut model, &old_log_probs, &contexts, est, cfg, &mut gate_opt, &mut rng)?;
        }
        let mut comp_losses = Vec::with_capacity(k);
        for i in 0..k {
            comp_losses.push(component_step(
                &mut model,
                i,
                &old_experts[i],
                &contexts,
                est,
                cfg,
                &mut expert_opts[i],
                &mut rng,
            )?);
        }
        if !cfg.gating_first {
            gating_loss = gating_step(&mut model, &old_log_probs, &contexts, est, cfg, &mut gate_opt, &mut rng)?;
        }
        let gating_kl = model.expected_gating_kl(&old, &contexts)?;
        let comp_kls = model.expected_component_kls(&old, &contexts)?;
        if !gating_kl.is_finite() || comp_kls.iter().any(|v| !v.is_finite()) {
            return Err(EimError::Numerical(format!("non-finite KL at iteration {it}")));
        }
        trace.push(it, "discriminator_bce", bce);
        trace.push(it, "gating_loss", gating_loss);
        trace.push_indexed(it, "component_loss", &comp_losses);
        trace.push(it, "gating_kl", gating_kl);
        trace.push_indexed(it, "component_kl", &comp_kls);
        monitor(it, &model, &mut trace)?;
    }
    Ok((model, trace))
}

/// Gradients of a whole mixture of experts.
#[derive(Clone, Debug)]
pub struct MoeGrads {
    pub gating: MlpGrads,
    pub experts: Vec<MlpGrads>,
}

/// Mean negative conditional log-likelihood of the row pairs and its gradient.
pub fn ml_objective(model: &MixtureOfExperts, xs: &DMatrix<f64>, ctx: &DMatrix<f64>) -> Result<(f64, MoeGrads)> {
    let (n, d, k) = (xs.nrows(), model.dim, model.num_components());
    check_dim(d, xs.ncols())?;
    check_dim(n, ctx.nrows())?;
    check_dim(model.context_dim(), ctx.ncols())?;
    let input = ctx.transpose();
    let g_cache = model.gating.forward_cached(&input)?;
    let e_caches = model
        .experts
        .iter()
        .map(|e| e.forward_cached(&input))
        .collect::<Result<Vec<_>>>()?;
    let mut g_grad = DMatrix::zeros(k, n);
    let mut e_grads: Vec<DMatrix<f64>> = model.experts.iter().map(|e| DMatrix::zeros(e.output_dim(), n)).collect();
    let mut loss = 0.0;
    let mut joint = vec![0.0; k];
    let mut parts = Vec::with_capacity(k);
    for j in 0..n {
        let x = xs.row(j).transpose();
        let lp = log_softmax(&g_cache.output().column(j).iter().copied().collect::<Vec<_>>());
        parts.clear();
        for i in 0..k {
            let o: Vec<f64> = e_caches[i].output().column(j).iter().copied().collect();
            let (m, l) = split_output(&o, d, ctx, j)?;
            let (ln, v) = chol_log_density(&x, &m, &l)?;
            joint[i] = lp[i] + ln;
            parts.push((l, v));
        }
        let ll = log_sum_exp(&joint);
        loss -= ll / n as f64;
        for i in 0..k {
            let r = (joint[i] - ll).exp();
            g_grad[(i, j)] = -(r - lp[i].exp()) / n as f64;
            let (l, v) = &parts[i];
            let lv = l
                .tr_solve_lower_triangular(v)
                .ok_or_else(|| EimError::NotPositiveDefinite("singular expert Cholesky factor".into()))?;
            let mut dl = &lv * v.transpose();
            for q in 0..d {
                dl[(q, q)] -= 1.0 / l[(q, q)];
            }
            let scale = -r / n as f64;
            for q in 0..d {
                e_grads[i][(q, j)] = scale * lv[q];
            }
            for (q, val) in chol_grad_to_params(l, &dl).into_iter().enumerate() {
                e_grads[i][(d + q, j)] = scale * val;
            }
        }
    }
    let gating = model.gating.backward(&g_cache, &g_grad).0;
    let experts = model
        .experts
        .iter()
        .zip(&e_caches)
        .zip(&e_grads)
        .map(|((e, c), g)| e.backward(c, g).0)
        .collect();
    Ok((loss, MoeGrads { gating, experts }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CondMlConfig {
    /// Passes over the training pairs.
    pub iterations: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for CondMlConfig {
    fn default() -> Self {
        Self {
            iterations: 200,
            learning_rate: 1e-3,
            beta1: 0.5,
            beta2: 0.999,
            batch_size: 100,
            seed: 0,
        }
    }
}

impl CondMlConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(EimError::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(EimError::Config("invalid Adam settings".into()));
        }
        Ok(())
    }
}

/// Maximum-likelihood baseline: Adam on the mean conditional
/// log-likelihood. Trace metric per pass: `train_log_likelihood`.
pub fn run_ml_moe(
    xs: &DMatrix<f64>,
    ctx: &DMatrix<f64>,
    init: &MixtureOfExperts,
    cfg: &CondMlConfig,
    monitor: &mut MoeMonitor,
) -> Result<(MixtureOfExperts, Trace)> {
    cfg.validate()?;
    check_pairs(xs, ctx, init)?;
    let mut rng = rng_from_seed(cfg.seed);
    let mut model = init.clone();
    let adam = || Adam::new(cfg.learning_rate, cfg.beta1, cfg.beta2, 1e-8);
    let mut gate_opt = adam();
    let mut expert_opts: Vec<Adam> = (0..model.num_components()).map(|_| adam()).collect();
    let mut trace = Trace::new();
    monitor(0, &model, &mut trace)?;
    for it in 1..=cfg.iterations {
        for b in batches(&mut rng, xs.nrows(), cfg.batch_size) {
            let (_, grads) = ml_objective(&model, &xs.select_rows(&b), &ctx.select_rows(&b))?;
            gate_opt.step_mlp(&mut model.gating, &grads.gating);
            for (i, g) in grads.experts.iter().enumerate() {
                expert_opts[i].step_mlp(&mut model.experts[i], g);
            }
        }
        let ll = model.log_density(xs, ctx)?.mean();
        if !ll.is_finite() {
            return Err(EimError::Numerical(format!("non-finite log-likelihood at pass {it}")));
        }
        trace.push(it, "train_log_likelihood", ll);
        monitor(it, &model, &mut trace)?;
    }
    Ok((model, trace))
}

/// The conditional upper bound for a discrete context with probabilities
/// `context_probs` and 1-D mixtures per context value. Every field is the
/// context-weighted sum of the per-context marginal quantities.
pub fn conditional_upper_bound_1d(
    context_probs: &[f64],
    q: &[Gmm],
    q_old: &[Gmm],
    p: &[Gmm],
    tol: f64,
) -> Result<BoundCheck> {
    let c = context_probs.len();
    check_dim(c, q.len())?;
    check_dim(c, q_old.len())?;
    check_dim(c, p.len())?;
    let mut out = BoundCheck {
        bound: 0.0,
        kl: 0.0,
        kl_plus_posterior_gap: 0.0,
    };
    for y in 0..c {
        let b = upper_bound_1d(&q[y], &q_old[y], &p[y], tol)?;
        out.bound += context_probs[y] * b.bound;
        out.kl += context_probs[y] * b.kl;
        out.kl_plus_posterior_gap += context_probs[y] * b.kl_plus_posterior_gap;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::Categorical;
    use crate::quadrature::integrate;
    use crate::tasks::gen_obstacle_task;

    fn tanh_moe(c: usize, d: usize, k: usize, seed: u64) -> MixtureOfExperts {
        let mut rng = rng_from_seed(seed);
        let out = d + chol_param_count(d);
        let gating = Mlp::new(&[c, 6, k], Activation::Tanh, &mut rng);
        let experts = (0..k).map(|_| Mlp::new(&[c, 6, out], Activation::Tanh, &mut rng)).collect();
        MixtureOfExperts::new(gating, experts, d).unwrap()
    }

    fn tanh_estimator(d: usize, c: usize, seed: u64) -> RatioEstimator {
        let mut rng = rng_from_seed(seed);
        RatioEstimator::new(Mlp::new(&[d + c, 8, 1], Activation::Tanh, &mut rng), d, c, None).unwrap()
    }

    fn random_matrix(n: usize, m: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = rng_from_seed(seed);
        let mut out = DMatrix::zeros(n, m);
        fill_standard_normal(&mut rng, out.as_mut_slice());
        out
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

    fn g1(m: f64, s: f64) -> Gaussian {
        Gaussian::new(DVector::from_element(1, m), DMatrix::from_element(1, 1, s * s)).unwrap()
    }

    fn mix(parts: &[(f64, f64, f64)]) -> Gmm {
        let w = DVector::from_iterator(parts.len(), parts.iter().map(|p| p.0));
        Gmm::new(parts.iter().map(|p| g1(p.1, p.2)).collect(), Categorical::new(w).unwrap()).unwrap()
    }

    #[test]
    fn gating_probabilities_sum_to_one() {
        let m = tanh_moe(2, 3, 4, 1);
        let p = m.gating_probs(&random_matrix(20, 2, 2)).unwrap();
        for r in p.row_iter() {
            assert!((r.sum() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn single_expert_is_a_gaussian() {
        let m = tanh_moe(2, 2, 1, 3);
        let ctx = random_matrix(5, 2, 4);
        let xs = random_matrix(5, 2, 5);
        let ld = m.log_density(&xs, &ctx).unwrap();
        let gs = m.expert_gaussians(0, &ctx).unwrap();
        for j in 0..5 {
            let x: Vec<f64> = xs.row(j).iter().copied().collect();
            assert!((ld[j] - gs[j].log_density(&x).unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn single_expert_gating_has_no_gradient() {
        let m = tanh_moe(2, 1, 1, 6);
        let ctx = random_matrix(7, 2, 7);
        let phi = random_matrix(7, 1, 8);
        let old = m.gating_log_probs(&ctx).unwrap();
        let (loss, grads) = gating_objective(m.gating(), &ctx, &old, &phi, 1.0).unwrap();
        assert!((loss - phi.mean()).abs() < 1e-12);
        assert!(grads.flatten().iter().all(|g| g.abs() < 1e-15));
    }

    #[test]
    fn one_hot_gating_samples_only_the_first_expert() {
        let mut m = tanh_moe(2, 2, 3, 9);
        let last = m.gating_mut().layers_mut().last_mut().unwrap();
        last.weight.fill(0.0);
        last.bias.copy_from_slice(&[0.0, -800.0, -800.0]);
        let ctx = random_matrix(500, 2, 10);
        let mut rng = rng_from_seed(11);
        let (_, labels) = m.sample(&ctx, &mut rng).unwrap();
        assert!(labels.iter().all(|&z| z == 0));
    }

    #[test]
    fn sample_histogram_matches_density() {
        let m = tanh_moe(2, 1, 3, 12);
        let y = [0.3, -0.7];
        let n = 100_000;
        let ctx = DMatrix::from_fn(n, 2, |_, k| y[k]);
        let mut rng = rng_from_seed(13);
        let (xs, _) = m.sample(&ctx, &mut rng).unwrap();
        let one = DMatrix::from_row_slice(1, 2, &y);
        let dens = |x: f64| m.log_density(&DMatrix::from_element(1, 1, x), &one).unwrap()[0].exp();
        let (lo, hi) = (xs.min(), xs.max());
        let bins = 40;
        let width = (hi - lo) / bins as f64;
        let mut counts = vec![0usize; bins];
        for v in xs.iter() {
            counts[(((v - lo) / width) as usize).min(bins - 1)] += 1;
        }
        let mut chi2 = 0.0;
        let mut dof = 0;
        for (b, &c) in counts.iter().enumerate() {
            let a = lo + b as f64 * width;
            let e = n as f64 * integrate(dens, a, a + width, 1e-10);
            if e >= 5.0 {
                chi2 += (c as f64 - e).powi(2) / e;
                dof += 1;
            }
        }
        // Wilson–Hilferty upper 0.001 quantile of chi-square with dof - 1 degrees.
        let k = (dof - 1) as f64;
        let crit = k * (1.0 - 2.0 / (9.0 * k) + 3.0902 * (2.0 / (9.0 * k)).sqrt()).powi(3);
        assert!(chi2 < crit, "chi2 {chi2} >= {crit} with {dof} bins");
    }

    #[test]
    fn gating_gradient_matches_finite_differences() {
        let m = tanh_moe(2, 2, 3, 14);
        let old = tanh_moe(2, 2, 3, 15);
        let ctx = random_matrix(6, 2, 16);
        let phi = random_matrix(6, 3, 17);
        let old_lp = old.gating_log_probs(&ctx).unwrap();
        let (_, grads) = gating_objective(m.gating(), &ctx, &old_lp, &phi, 1.0).unwrap();
        let params = m.gating().params_flat();
        let mut net = m.gating().clone();
        fd_check(
            &mut |p| {
                net.set_params_flat(p).unwrap();
                gating_objective(&net, &ctx, &old_lp, &phi, 1.0).unwrap().0
            },
            &params,
            &grads.flatten(),
        );
    }

    #[test]
    fn component_gradient_matches_finite_differences() {
        for d in [1, 2] {
            let m = tanh_moe(2, d, 2, 18 + d as u64);
            let old = tanh_moe(2, d, 2, 20 + d as u64);
            let est = tanh_estimator(d, 2, 22);
            let ctx = random_matrix(4, 2, 23);
            let noise = random_matrix(4 * 3, d, 24);
            let old_g = old.expert_gaussians(1, &ctx).unwrap();
            let w = [0.1, 0.4, 0.2, 0.3];
            let net0 = m.experts()[1].clone();
            let (_, grads) = component_objective(&net0, d, &ctx, &old_g, &w, &noise, &est, 1.0).unwrap();
            let mut net = net0.clone();
            fd_check(
                &mut |p| {
                    net.set_params_flat(p).unwrap();
                    component_objective(&net, d, &ctx, &old_g, &w, &noise, &est, 1.0).unwrap().0
                },
                &net0.params_flat(),
                &grads.flatten(),
            );
        }
    }

    #[test]
    fn likelihood_gradient_matches_finite_differences() {
        let m = tanh_moe(2, 2, 3, 25);
        let ctx = random_matrix(8, 2, 26);
        let xs = random_matrix(8, 2, 27);
        let (_, grads) = ml_objective(&m, &xs, &ctx).unwrap();
        let mut probe = m.clone();
        fd_check(
            &mut |p| {
                probe.gating_mut().set_params_flat(p).unwrap();
                ml_objective(&probe, &xs, &ctx).unwrap().0
            },
            &m.gating().params_flat(),
            &grads.gating.flatten(),
        );
        for i in 0..3 {
            let mut probe = m.clone();
            fd_check(
                &mut |p| {
                    probe.expert_mut(i).set_params_flat(p).unwrap();
                    ml_objective(&probe, &xs, &ctx).unwrap().0
                },
                &m.experts()[i].params_flat(),
                &grads.experts[i].flatten(),
            );
        }
    }

    #[test]
    fn likelihood_fit_recovers_linear_regression() {
        let n = 4000;
        let ctx = random_matrix(n, 2, 28);
        let noise = random_matrix(n, 1, 29);
        let xs = DMatrix::from_fn(n, 1, |j, _| 1.5 * ctx[(j, 0)] - 0.8 * ctx[(j, 1)] + 0.6 + 0.5 * noise[(j, 0)]);
        // Least-squares oracle on [y, 1].
        let a = DMatrix::from_fn(n, 3, |j, k| if k < 2 { ctx[(j, k)] } else { 1.0 });
        let ols = (a.transpose() * &a).cholesky().unwrap().solve(&(a.transpose() * &xs));
        let mut rng = rng_from_seed(30);
        let init = MixtureOfExperts::new(
            Mlp::new(&[2, 1], Activation::Relu, &mut rng),
            vec![Mlp::new(&[2, 2], Activation::Relu, &mut rng)],
            1,
        )
        .unwrap();
        let cfg = CondMlConfig {
            iterations: 150,
            learning_rate: 1e-2,
            ..Default::default()
        };
        let (fit, trace) = run_ml_moe(&xs, &ctx, &init, &cfg, &mut |_, _, _| Ok(())).unwrap();
        let layer = &fit.experts()[0].layers()[0];
        let got = [layer.weight[(0, 0)], layer.weight[(0, 1)], layer.bias[0]];
        for k in 0..3 {
            assert!((got[k] - ols[k]).abs() <= 0.05 * ols[k].abs(), "{got:?} vs {ols}");
        }
        // Smoothed likelihood never drops.
        let ll: Vec<f64> = trace.series("train_log_likelihood").iter().map(|p| p.1).collect();
        let smooth: Vec<f64> = ll.windows(10).map(|w| w.iter().sum::<f64>() / 10.0).collect();
        for w in smooth.windows(2) {
            assert!(w[1] >= w[0] - 1e-3, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn single_expert_likelihood_fit_averages_modes() {
        let n = 4000;
        let ctx = random_matrix(n, 1, 31);
        let noise = random_matrix(n, 1, 32);
        let xs = DMatrix::from_fn(n, 1, |j, _| if j % 2 == 0 { 2.0 } else { -2.0 } + 0.3 * noise[(j, 0)]);
        let init = init_moe(&xs, &ctx, 1, &[8], 33).unwrap();
        let cfg = CondMlConfig {
            iterations: 60,
            learning_rate: 1e-2,
            ..Default::default()
        };
        let (fit, _) = run_ml_moe(&xs, &ctx, &init, &cfg, &mut |_, _, _| Ok(())).unwrap();
        let probe = DMatrix::from_column_slice(3, 1, &[-1.0, 0.0, 1.0]);
        for (m, l) in fit.expert_params(0, &probe).unwrap() {
            assert!(m[0].abs() < 0.2, "mean {}", m[0]);
            // Moment match: variance 4 + 0.09.
            assert!((l[(0, 0)] - 4.09f64.sqrt()).abs() < 0.2, "std {}", l[(0, 0)]);
        }
    }

    #[test]
    fn init_moe_is_context_free_mixture() {
        let t = gen_obstacle_task(20, 5, 34).unwrap();
        let ctx = t.train_contexts.unwrap();
        let m = init_moe(&t.train, &ctx, 3, &[8, 8], 35).unwrap();
        let gmm = init_gmm(&t.train, 3, 35).unwrap();
        let ld = m.log_density(&t.train, &ctx).unwrap();
        for j in 0..t.train.nrows() {
            let x: Vec<f64> = t.train.row(j).iter().copied().collect();
            assert!((ld[j] - gmm.log_density(&x).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn conditional_bound_dominates_expected_kl() {
        let py = [0.3, 0.7];
        let p = [mix(&[(0.5, -2.0, 0.7), (0.5, 2.0, 0.7)]), mix(&[(0.2, 0.0, 1.0), (0.8, 3.0, 0.5)])];
        let q_old = [mix(&[(0.6, -1.0, 1.0), (0.4, 1.5, 1.2)]), mix(&[(0.5, 0.5, 1.0), (0.5, 2.0, 1.0)])];
        let q = [mix(&[(0.5, -1.3, 0.9), (0.5, 1.8, 1.0)]), mix(&[(0.4, 0.2, 1.1), (0.6, 2.4, 0.8)])];
        let b = conditional_upper_bound_1d(&py, &q, &q_old, &p, 1e-11).unwrap();
        assert!(b.bound >= b.kl - 1e-6, "{b:?}");
        assert!(b.bound - b.kl > 1e-3, "{b:?}");
        assert!((b.bound - b.kl_plus_posterior_gap).abs() < 1e-6, "{b:?}");
        let t = conditional_upper_bound_1d(&py, &q_old, &q_old, &p, 1e-11).unwrap();
        assert!((t.bound - t.kl).abs() < 1e-6, "{t:?}");
    }

    #[test]
    fn non_finite_expert_output_is_reported() {
        let mut m = tanh_moe(1, 1, 1, 36);
        let last = m.expert_mut(0).layers_mut().last_mut().unwrap();
        last.bias[1] = f64::NAN;
        let ctx = DMatrix::from_element(1, 1, 0.25);
        let err = m.expert_params(0, &ctx).unwrap_err();
        assert!(matches!(err, EimError::Numerical(ref s) if s.contains("0.25")), "{err}");
    }

    fn smoke_cfg(iterations: usize) -> CondEimConfig {
        CondEimConfig {
            iterations,
            epochs: 1,
            contexts_per_batch: 10,
            samples_per_context: 2,
            initial_epochs: 2,
            ratio: TrainConfig {
                hidden: vec![16],
                max_epochs: 1,
                batch_size: 50,
                ..TrainConfig::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn conditional_eim_smoke_stays_finite() {
        let t = gen_obstacle_task(20, 4, 37).unwrap();
        let ctx = t.train_contexts.clone().unwrap();
        let init = init_moe(&t.train, &ctx, 2, &[8], 38).unwrap();
        let (fit, trace) = run_eim_moe(&t.train, &ctx, &init, &smoke_cfg(100), t.feature_map(), &mut |_, _, _| Ok(())).unwrap();
        assert_eq!(trace.series("gating_kl").len(), 100);
        assert!(trace.rows().iter().all(|r| r.value.is_finite()));
        assert!(fit.log_density(&t.test, t.test_contexts.as_ref().unwrap()).unwrap().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn conditional_eim_is_deterministic() {
        let t = gen_obstacle_task(10, 4, 39).unwrap();
        let ctx = t.train_contexts.clone().unwrap();
        let init = init_moe(&t.train, &ctx, 2, &[8], 40).unwrap();
        let run = || run_eim_moe(&t.train, &ctx, &init, &smoke_cfg(3), None, &mut |_, _, _| Ok(())).unwrap();
        let (a, ta) = run();
        let (b, tb) = run();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
    }

    #[test]
    fn unique_rows_keeps_first_occurrences() {
        let m = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 3.0, 4.0, 1.0, 2.0, 5.0, 6.0]);
        assert_eq!(unique_rows(&m), DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
    }
}
