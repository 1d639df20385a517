//! Marginal EIM for Gaussian mixture models, plus the EM, f-GAN and ablation
//! baselines it is compared against.
//!
//! Each EIM iteration snapshots the model as `q_old`, retrains the density
//! ratio estimator on data against samples of `q_old`, and then updates the
//! mixture coefficients and each component in closed form (see [`crate::more`]).

use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::discriminator::{validation_count, Discriminator};
use crate::distributions::{kl_categorical, kl_gaussian, log_sum_exp, Categorical, Density, Gaussian, Gmm};
use crate::error::{check_dim, EimError, Result};
use crate::eval::{mc_i_projection, test_log_likelihood, IProjection};
use crate::more::{categorical_more_update, fit_surrogate_whitened, gaussian_more_update, TrustRegionConfig};
use crate::nn::{Activation, Adam, Mlp};
use crate::quadrature::integrate;
use crate::ratio_estimator::{FeatureMap, Samples, TrainConfig};
use crate::reparam::{mixture_expectation_gradient, mixture_kl_penalty_with_grad, MixtureLayout};
use crate::rng::{fill_standard_normal, rng_from_seed, EimRng};
use crate::trace::Trace;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EimGmmConfig {
    pub iterations: usize,
    pub samples_per_component: usize,
    pub component_epsilon: f64,
    pub coefficient_epsilon: f64,
    /// Model samples per discriminator retraining; 0 means one per data point.
    pub model_samples: usize,
    /// Epochs for the first discriminator fit; later fits warm start and use
    /// `ratio.max_epochs`.
    pub initial_epochs: usize,
    pub ratio: TrainConfig,
    pub ridge: f64,
    pub update_coefficients: bool,
    pub update_components: bool,
    /// Draw separate samples for the coefficient losses.
    pub resample_coefficients: bool,
    /// Adam steps per iteration of the joint-gradient ablation.
    pub joint_steps: usize,
    pub joint_learning_rate: f64,
    pub seed: u64,
}

impl Default for EimGmmConfig {
    fn default() -> Self {
        Self {
            iterations: 200,
            samples_per_component: 1000,
            component_epsilon: 0.05,
            coefficient_epsilon: 0.05,
            model_samples: 0,
            initial_epochs: 20,
            ratio: TrainConfig {
                max_epochs: 3,
                ..TrainConfig::default()
            },
            ridge: 1e-9,
            update_coefficients: true,
            update_components: true,
            resample_coefficients: false,
            joint_steps: 10,
            joint_learning_rate: 1e-2,
            seed: 0,
        }
    }
}

impl EimGmmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples_per_component < 2 {
            return Err(EimError::Config("samples_per_component must be at least 2".into()));
        }
        if !(self.component_epsilon > 0.0 && self.coefficient_epsilon > 0.0) {
            return Err(EimError::Config("trust region epsilons must be positive".into()));
        }
        if self.initial_epochs == 0 {
            return Err(EimError::Config("initial_epochs must be positive".into()));
        }
        if !(self.ridge >= 0.0) {
            return Err(EimError::Config("ridge must be non-negative".into()));
        }
        if self.joint_steps == 0 || !(self.joint_learning_rate > 0.0) {
            return Err(EimError::Config("joint ablation needs positive steps and learning rate".into()));
        }
        self.ratio.validate()
    }

    fn trust_region(&self, epsilon: f64, kl_penalty: bool) -> TrustRegionConfig {
        TrustRegionConfig {
            epsilon,
            kl_penalty,
            ..Default::default()
        }
    }
}

/// Periodic evaluation of a model while it trains.
#[derive(Clone, Copy)]
pub struct Monitor<'a> {
    pub target: Option<&'a dyn Density>,
    pub test_data: Option<&'a DMatrix<f64>>,
    pub every: usize,
    pub samples: usize,
    pub seed: u64,
}

impl Default for Monitor<'_> {
    fn default() -> Self {
        Self {
            target: None,
            test_data: None,
            every: 0,
            samples: 10_000,
            seed: 0,
        }
    }
}

impl<'a> Monitor<'a> {
    pub fn target(target: &'a dyn Density, every: usize) -> Self {
        Self {
            target: Some(target),
            every,
            ..Default::default()
        }
    }

    fn due(&self, iteration: usize, last: usize) -> bool {
        (self.target.is_some() || self.test_data.is_some())
            && (iteration == last || (self.every > 0 && iteration % self.every == 0))
    }

    fn evaluate(&self, model: &Gmm, iteration: usize) -> Result<(Option<IProjection>, Option<f64>)> {
        let ip = match self.target {
            Some(t) => Some(mc_i_projection(model, t, self.samples, self.seed.wrapping_add(iteration as u64))?),
            None => None,
        };
        let ll = match self.test_data {
            Some(x) => Some(test_log_likelihood(model, x)?),
            None => None,
        };
        Ok((ip, ll))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Mean raw discriminator logit `E_{qᵢ}[log(p / q_old)]` per component.
    pub expected_logits: Vec<f64>,
    /// Coefficient losses `E_{qᵢ}[log(q_old / p)]`.
    pub coefficient_losses: Vec<f64>,
    pub component_kls: Vec<f64>,
    pub coefficient_kl: f64,
    pub rejected: Vec<bool>,
    pub weights: Vec<f64>,
    pub discriminator_bce: f64,
    pub i_projection: Option<IProjection>,
    pub test_log_likelihood: Option<f64>,
    pub wall_clock_secs: f64,
}

/// Long-format trace of EIM records. Wall-clock time is left out so that
/// traces of identical runs are identical.
pub fn records_to_trace(records: &[IterationRecord]) -> Trace {
    let mut t = Trace::new();
    for r in records {
        let it = r.iteration;
        t.push_indexed(it, "expected_logit", &r.expected_logits);
        t.push_indexed(it, "coefficient_loss", &r.coefficient_losses);
        t.push_indexed(it, "component_kl", &r.component_kls);
        t.push(it, "coefficient_kl", r.coefficient_kl);
        t.push(it, "rejected_updates", r.rejected.iter().filter(|b| **b).count() as f64);
        t.push_indexed(it, "weight", &r.weights);
        t.push(it, "discriminator_bce", r.discriminator_bce);
        if let Some(ip) = r.i_projection {
            t.push(it, "i_projection", ip.value);
            t.push(it, "i_projection_stderr", ip.stderr);
        }
        if let Some(ll) = r.test_log_likelihood {
            t.push(it, "test_log_likelihood", ll);
        }
    }
    t
}

/// Refits the discriminator on fresh samples of `model`.
fn retrain(disc: &mut Discriminator, model: &Gmm, cfg: &EimGmmConfig, rng: &mut EimRng) -> Result<f64> {
    let n = if cfg.model_samples == 0 { disc.data_len() } else { cfg.model_samples };
    let n_val = validation_count(n, cfg.ratio.validation_fraction);
    let (xs, _) = model.sample(n - n_val, rng);
    let (xv, _) = model.sample(n_val, rng);
    disc.retrain(Samples::new(&xs, None), Samples::new(&xv, None), &cfg.ratio, cfg.initial_epochs, rng)
}

fn check_inputs(data: &DMatrix<f64>, init: &Gmm) -> Result<()> {
    if data.nrows() < 2 {
        return Err(EimError::Input("need at least two data points".into()));
    }
    check_dim(init.dim(), data.ncols())?;
    if data.iter().any(|v| !v.is_finite()) {
        return Err(EimError::Input("data contains non-finite values".into()));
    }
    Ok(())
}

fn mean_of(v: &DVector<f64>) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// EIM for a GMM. Returns the final model and one record per iteration.
pub fn run_eim_gmm(
    data: &DMatrix<f64>,
    init: &Gmm,
    cfg: &EimGmmConfig,
    features: Option<Arc<dyn FeatureMap>>,
    monitor: &Monitor,
) -> Result<(Gmm, Vec<IterationRecord>)> {
    run_closed_form(data, init, cfg, features, monitor, true)
}

fn run_closed_form(
    data: &DMatrix<f64>,
    init: &Gmm,
    cfg: &EimGmmConfig,
    features: Option<Arc<dyn FeatureMap>>,
    monitor: &Monitor,
    kl_penalty: bool,
) -> Result<(Gmm, Vec<IterationRecord>)> {
    cfg.validate()?;
    check_inputs(data, init)?;
    let start = Instant::now();
    let mut rng = rng_from_seed(cfg.seed);
    let mut disc = Discriminator::new(data, None, features, cfg.ratio.validation_fraction, &mut rng);
    let tr_comp = cfg.trust_region(cfg.component_epsilon, kl_penalty);
    let tr_coef = cfg.trust_region(cfg.coefficient_epsilon, kl_penalty);
    let k = init.num_components();
    let mut model = init.clone();
    let mut records = Vec::with_capacity(cfg.iterations);
    for it in 1..=cfg.iterations {
        let old = model.clone();
        let bce = retrain(&mut disc, &old, cfg, &mut rng)?;
        let est = disc.get();

        let samples: Vec<DMatrix<f64>> = old
            .components()
            .iter()
            .map(|c| c.sample(cfg.samples_per_component, &mut rng))
            .collect();
        let phis = samples
            .iter()
            .map(|x| est.log_ratio_batch(x, None))
            .collect::<Result<Vec<_>>>()?;
        let expected_logits: Vec<f64> = phis.iter().map(|p| -mean_of(p)).collect();
        let coefficient_losses: Vec<f64> = if cfg.resample_coefficients {
            old.components()
                .iter()
                .map(|c| Ok(mean_of(&est.log_ratio_batch(&c.sample(cfg.samples_per_component, &mut rng), None)?)))
                .collect::<Result<_>>()?
        } else {
            phis.iter().map(mean_of).collect()
        };

        let mut weights = old.weights().clone();
        let mut coefficient_kl = 0.0;
        if cfg.update_coefficients && k > 1 {
            let (w, dual) = categorical_more_update(old.weights(), &coefficient_losses, &tr_coef)?;
            weights = w;
            coefficient_kl = dual.kl;
        }

        let mut comps = Vec::with_capacity(k);
        let mut component_kls = vec![0.0; k];
        let mut rejected = vec![false; k];
        for i in 0..k {
            let comp = &old.components()[i];
            if !cfg.update_components {
                comps.push(comp.clone());
                continue;
            }
            let update = fit_surrogate_whitened(comp, &samples[i], &phis[i], cfg.ridge)
                .and_then(|s| gaussian_more_update(comp, &s, &tr_comp));
            match update {
                Ok(up) if !up.rejected => {
                    component_kls[i] = up.dual.kl;
                    comps.push(up.gaussian);
                }
                Ok(_) | Err(EimError::Numerical(_)) | Err(EimError::NotPositiveDefinite(_)) => {
                    rejected[i] = true;
                    comps.push(comp.clone());
                }
                Err(e) => return Err(e),
            }
        }
        model = Gmm::new(comps, weights)?;

        let (i_projection, test_ll) = if monitor.due(it, cfg.iterations) {
            monitor.evaluate(&model, it)?
        } else {
            (None, None)
        };
        records.push(IterationRecord {
            iteration: it,
            expected_logits,
            coefficient_losses,
            component_kls,
            coefficient_kl,
            rejected,
            weights: model.weights().probs().iter().cloned().collect(),
            discriminator_bce: bce,
            i_projection,
            test_log_likelihood: test_ll,
            wall_clock_secs: start.elapsed().as_secs_f64(),
        });
    }
    Ok((model, records))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    /// Closed-form updates without the extra KL penalty (divisor `η`).
    NoKl,
    /// All parameters by Adam on `E_q[φ] + KL(q ‖ q_old)`.
    Joint,
    /// All parameters by Adam on `E_q[φ]` alone.
    JointNoKl,
}

pub fn run_eim_ablation(
    data: &DMatrix<f64>,
    init: &Gmm,
    cfg: &EimGmmConfig,
    variant: Ablation,
    features: Option<Arc<dyn FeatureMap>>,
    monitor: &Monitor,
) -> Result<(Gmm, Vec<IterationRecord>)> {
    match variant {
        Ablation::NoKl => run_closed_form(data, init, cfg, features, monitor, false),
        Ablation::Joint => run_joint(data, init, cfg, features, monitor, true),
        Ablation::JointNoKl => run_joint(data, init, cfg, features, monitor, false),
    }
}

fn draw_noise(k: usize, n: usize, d: usize, rng: &mut EimRng) -> Vec<DMatrix<f64>> {
    (0..k)
        .map(|_| {
            let mut u = DMatrix::zeros(n, d);
            fill_standard_normal(rng, u.as_mut_slice());
            u
        })
        .collect()
}

fn run_joint(
    data: &DMatrix<f64>,
    init: &Gmm,
    cfg: &EimGmmConfig,
    features: Option<Arc<dyn FeatureMap>>,
    monitor: &Monitor,
    kl_penalty: bool,
) -> Result<(Gmm, Vec<IterationRecord>)> {
    cfg.validate()?;
    check_inputs(data, init)?;
    let start = Instant::now();
    let mut rng = rng_from_seed(cfg.seed);
    let mut disc = Discriminator::new(data, None, features, cfg.ratio.validation_fraction, &mut rng);
    let layout = MixtureLayout::of(init);
    let (k, d) = (layout.components, layout.dim);
    let mut params = layout.pack(init);
    let mut adam = Adam::new(cfg.joint_learning_rate, 0.9, 0.999, 1e-8);
    let mut baseline: Option<f64> = None;
    let mut model = init.clone();
    let mut records = Vec::with_capacity(cfg.iterations);
    for it in 1..=cfg.iterations {
        let old = model.clone();
        let bce = retrain(&mut disc, &old, cfg, &mut rng)?;
        let est = disc.get();
        let mut loss = |xs: &DMatrix<f64>| -> Result<(DVector<f64>, DMatrix<f64>)> {
            Ok((est.log_ratio_batch(xs, None)?, est.log_ratio_gradient(xs, None)?))
        };
        let mut first_values = Vec::new();
        for step in 0..cfg.joint_steps {
            let noise = draw_noise(k, cfg.samples_per_component, d, &mut rng);
            let b = baseline.unwrap_or(0.0);
            let g = mixture_expectation_gradient(&layout, &params, &noise, b, &mut loss)?;
            baseline = Some(match baseline {
                Some(b) => 0.9 * b + 0.1 * g.value,
                None => g.value,
            });
            if step == 0 {
                first_values = g.component_values.clone();
            }
            let mut grad = g.grad;
            if kl_penalty {
                let (_, gp) = mixture_kl_penalty_with_grad(&layout, &params, &old)?;
                for (a, b) in grad.iter_mut().zip(gp) {
                    *a += b;
                }
            }
            if grad.iter().any(|v| !v.is_finite()) {
                return Err(EimError::Numerical(format!("non-finite joint gradient at iteration {it}")));
            }
            adam.step(&mut params, &grad);
        }
        model = layout.unpack(&params)?;
        let component_kls = (0..k)
            .map(|i| kl_gaussian(&model.components()[i], &old.components()[i]))
            .collect::<Result<Vec<_>>>()?;
        let coefficient_kl = kl_categorical(model.weights(), old.weights())?;
        let (i_projection, test_ll) = if monitor.due(it, cfg.iterations) {
            monitor.evaluate(&model, it)?
        } else {
            (None, None)
        };
        records.push(IterationRecord {
            iteration: it,
            expected_logits: first_values.iter().map(|v| -v).collect(),
            coefficient_losses: first_values,
            component_kls,
            coefficient_kl,
            rejected: vec![false; k],
            weights: model.weights().probs().iter().cloned().collect(),
            discriminator_bce: bce,
            i_projection,
            test_log_likelihood: test_ll,
            wall_clock_secs: start.elapsed().as_secs_f64(),
        });
    }
    Ok((model, records))
}

/// k-means++ style initialisation: means by D² sampling from the data, every
/// covariance the data covariance, uniform weights.
pub fn init_gmm(data: &DMatrix<f64>, components: usize, seed: u64) -> Result<Gmm> {
    let (n, d) = data.shape();
    if n < 2 || components == 0 {
        return Err(EimError::Input("need data and at least one component".into()));
    }
    let mut rng = rng_from_seed(seed);
    let mean = data.row_mean();
    let mut cov = DMatrix::zeros(d, d);
    for r in data.row_iter() {
        let c = (r - &mean).transpose();
        cov += &c * c.transpose();
    }
    cov /= n as f64;
    cov += DMatrix::identity(d, d) * 1e-6 * (cov.trace() / d as f64).max(1e-12);
    let mut centers: Vec<DVector<f64>> = vec![data.row(rng.random_range(0..n)).transpose()];
    let mut dist: Vec<f64> = (0..n).map(|j| (data.row(j).transpose() - &centers[0]).norm_squared()).collect();
    while centers.len() < components {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (j, w) in dist.iter().enumerate() {
                if u < *w {
                    idx = j;
                    break;
                }
                u -= w;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        let c = data.row(pick).transpose();
        for (j, v) in dist.iter_mut().enumerate() {
            *v = v.min((data.row(j).transpose() - &c).norm_squared());
        }
        centers.push(c);
    }
    let comps = centers
        .into_iter()
        .map(|m| Gaussian::new(m, cov.clone()))
        .collect::<Result<Vec<_>>>()?;
    Gmm::new(comps, Categorical::uniform(components))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmConfig {
    pub iterations: usize,
    pub covariance_floor: f64,
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            iterations: 100,
            covariance_floor: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EmTrace {
    /// Mean training log-likelihood of the initial model and after every iteration.
    pub log_likelihood: Vec<f64>,
    /// `(iteration, component)` pairs that were re-seeded after collapsing.
    pub reseeded: Vec<(usize, usize)>,
    pub i_projection: Vec<(usize, IProjection)>,
    pub test_log_likelihood: Vec<(usize, f64)>,
}

impl EmTrace {
    pub fn to_trace(&self) -> Trace {
        let mut t = Trace::new();
        for (it, ll) in self.log_likelihood.iter().enumerate() {
            t.push(it, "train_log_likelihood", *ll);
        }
        for (it, c) in &self.reseeded {
            t.push(*it, "reseeded_component", *c as f64);
        }
        for (it, ip) in &self.i_projection {
            t.push(*it, "i_projection", ip.value);
            t.push(*it, "i_projection_stderr", ip.stderr);
        }
        for (it, ll) in &self.test_log_likelihood {
            t.push(*it, "test_log_likelihood", *ll);
        }
        t
    }
}

/// Expectation maximisation with a covariance floor `reg · I` added in every M-step.
pub fn run_em_gmm(data: &DMatrix<f64>, init: &Gmm, cfg: &EmConfig, monitor: &Monitor) -> Result<(Gmm, EmTrace)> {
    check_inputs(data, init)?;
    let (n, d) = data.shape();
    if n <= d {
        return Err(EimError::Input("EM needs more data points than dimensions".into()));
    }
    if !(cfg.covariance_floor >= 0.0) {
        return Err(EimError::Config("covariance floor must be non-negative".into()));
    }
    let mut rng = rng_from_seed(cfg.seed);
    let k = init.num_components();
    let mut model = init.clone();
    let mut trace = EmTrace::default();
    let (mut resp, mut ll) = model.responsibilities(data)?;
    trace.log_likelihood.push(mean_of(&ll));
    for it in 1..=cfg.iterations {
        let mut comps = Vec::with_capacity(k);
        let mut mass = Vec::with_capacity(k);
        for i in 0..k {
            let r = resp.column(i);
            let nk: f64 = r.sum();
            if nk < 1e-8 {
                let pick = rng.random_range(0..n);
                let cov = model.components()[i].covariance().clone();
                comps.push(Gaussian::new(data.row(pick).transpose(), cov)?);
                mass.push(1.0 / k as f64);
                trace.reseeded.push((it, i));
                continue;
            }
            let mean = (data.transpose() * r) / nk;
            let mut cov = DMatrix::zeros(d, d);
            for j in 0..n {
                let c = data.row(j).transpose() - &mean;
                cov += (&c * c.transpose()) * r[j];
            }
            cov /= nk;
            cov += DMatrix::identity(d, d) * cfg.covariance_floor;
            comps.push(Gaussian::new(mean, cov)?);
            mass.push(nk / n as f64);
        }
        let total: f64 = mass.iter().sum();
        let weights = Categorical::new(DVector::from_iterator(k, mass.iter().map(|m| m / total)))?;
        model = Gmm::new(comps, weights)?;
        (resp, ll) = model.responsibilities(data)?;
        trace.log_likelihood.push(mean_of(&ll));
        if monitor.due(it, cfg.iterations) {
            let (ip, tl) = monitor.evaluate(&model, it)?;
            if let Some(ip) = ip {
                trace.i_projection.push((it, ip));
            }
            if let Some(tl) = tl {
                trace.test_log_likelihood.push((it, tl));
            }
        }
    }
    Ok((model, trace))
}

/// f-GAN objective with output activation `g(v) = -exp(-v)` and conjugate
/// `f*(t) = -1 - ln(-t)`: `E_p[g(V)] - E_q[f*(g(V))]`.
pub fn fgan_objective(v_data: &[f64], v_model: &[f64]) -> f64 {
    let g = |v: f64| -(-v).exp();
    let f_star = |t: f64| -1.0 - (-t).ln();
    let a = v_data.iter().map(|v| g(*v)).sum::<f64>() / v_data.len() as f64;
    let b = v_model.iter().map(|v| f_star(g(*v))).sum::<f64>() / v_model.len() as f64;
    a - b
}

/// The same objective in density-ratio form with `f(u) = -ln u` and
/// `r = exp(r_l)`: `E_p[f'(r)] - E_q[f'(r) r - f(r)]`.
pub fn bgan_objective(r_log_data: &[f64], r_log_model: &[f64]) -> f64 {
    let f = |u: f64| -u.ln();
    let f_prime = |u: f64| -1.0 / u;
    let a = r_log_data.iter().map(|l| f_prime(l.exp())).sum::<f64>() / r_log_data.len() as f64;
    let b = r_log_model
        .iter()
        .map(|l| {
            let r = l.exp();
            f_prime(r) * r - f(r)
        })
        .sum::<f64>()
        / r_log_model.len() as f64;
    a - b
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GanConfig {
    pub iterations: usize,
    pub generator_learning_rate: f64,
    pub discriminator_learning_rate: f64,
    pub discriminator_steps: usize,
    pub generator_steps: usize,
    pub batch_size: usize,
    pub hidden: Vec<usize>,
    pub l2: f64,
    pub seed: u64,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            generator_learning_rate: 1e-3,
            discriminator_learning_rate: 1e-3,
            discriminator_steps: 1,
            generator_steps: 1,
            batch_size: 1000,
            hidden: vec![50, 50, 50],
            l2: 0.0,
            seed: 0,
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.generator_learning_rate > 0.0 && self.discriminator_learning_rate > 0.0) {
            return Err(EimError::Config("GAN learning rates must be positive".into()));
        }
        if self.discriminator_steps == 0 || self.generator_steps == 0 || self.batch_size == 0 {
            return Err(EimError::Config("GAN step counts and batch size must be positive".into()));
        }
        if !(self.l2 >= 0.0) {
            return Err(EimError::Config("l2 must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GanTrace {
    pub objective: Vec<(usize, f64)>,
    pub i_projection: Vec<(usize, IProjection)>,
    pub test_log_likelihood: Vec<(usize, f64)>,
    /// Aborted after the I-projection stayed above 10× its initial value.
    pub diverged: bool,
}

impl GanTrace {
    pub fn to_trace(&self) -> Trace {
        let mut t = Trace::new();
        for (it, v) in &self.objective {
            t.push(*it, "fgan_objective", *v);
        }
        for (it, ip) in &self.i_projection {
            t.push(*it, "i_projection", ip.value);
            t.push(*it, "i_projection_stderr", ip.stderr);
        }
        for (it, ll) in &self.test_log_likelihood {
            t.push(*it, "test_log_likelihood", *ll);
        }
        t.push(self.objective.last().map_or(0, |o| o.0), "diverged", if self.diverged { 1.0 } else { 0.0 });
        t
    }
}

/// Discriminator `V(x)` of the f-GAN baseline on standardised inputs.
struct Critic {
    net: Mlp,
    shift: DVector<f64>,
    scale: DVector<f64>,
}

impl Critic {
    fn inputs(&self, xs: &DMatrix<f64>) -> DMatrix<f64> {
        let mut t = xs.transpose();
        for mut col in t.column_iter_mut() {
            for k in 0..col.len() {
                col[k] = (col[k] - self.shift[k]) / self.scale[k];
            }
        }
        t
    }

    fn values(&self, xs: &DMatrix<f64>) -> Result<DVector<f64>> {
        Ok(self.net.forward(&self.inputs(xs))?.row(0).transpose())
    }

    fn gradient(&self, xs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let ones = DMatrix::from_element(1, xs.nrows(), 1.0);
        let g = self.net.input_gradient(&self.inputs(xs), &ones)?;
        let mut out = g.transpose();
        for mut row in out.row_iter_mut() {
            for k in 0..row.len() {
                row[k] /= self.scale[k];
            }
        }
        Ok(out)
    }
}

fn batch_rows(data: &DMatrix<f64>, n: usize, rng: &mut EimRng) -> DMatrix<f64> {
    let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..data.nrows())).collect();
    data.select_rows(&idx)
}

/// f-GAN I-projection baseline with alternating single steps.
pub fn run_fgan_gmm(data: &DMatrix<f64>, init: &Gmm, cfg: &GanConfig, monitor: &Monitor) -> Result<(Gmm, GanTrace)> {
    cfg.validate()?;
    check_inputs(data, init)?;
    let mut rng = rng_from_seed(cfg.seed);
    let layout = MixtureLayout::of(init);
    let (k, d) = (layout.components, layout.dim);
    let mut sizes = vec![d];
    sizes.extend(&cfg.hidden);
    sizes.push(1);
    let mean = data.row_mean().transpose();
    let sd = DVector::from_iterator(
        d,
        (0..d).map(|c| {
            let v = data.column(c).iter().map(|x| (x - mean[c]).powi(2)).sum::<f64>() / data.nrows() as f64;
            if v.sqrt() > 1e-8 {
                v.sqrt()
            } else {
                1.0
            }
        }),
    );
    let mut critic = Critic {
        net: Mlp::new(&sizes, Activation::Relu, &mut rng),
        shift: mean,
        scale: sd,
    };
    let mut d_adam = Adam::new(cfg.discriminator_learning_rate, 0.9, 0.999, 1e-8);
    let mut g_adam = Adam::new(cfg.generator_learning_rate, 0.9, 0.999, 1e-8);
    let mut params = layout.pack(init);
    let mut model = init.clone();
    let mut trace = GanTrace::default();
    let per_comp = cfg.batch_size.div_ceil(k).max(2);
    let mut baseline: Option<f64> = None;
    let mut initial_ip: Option<f64> = None;
    let mut above = 0usize;
    if monitor.target.is_some() {
        let (ip, _) = monitor.evaluate(&model, 0)?;
        initial_ip = ip.map(|v| v.value);
    }
    for it in 1..=cfg.iterations {
        let mut objective = 0.0;
        for _ in 0..cfg.discriminator_steps {
            let xp = batch_rows(data, cfg.batch_size, &mut rng);
            let (xq, _) = model.sample(cfg.batch_size, &mut rng);
            let ip_ = critic.inputs(&xp);
            let iq = critic.inputs(&xq);
            let cp = critic.net.forward_cached(&ip_)?;
            let cq = critic.net.forward_cached(&iq)?;
            let vp: Vec<f64> = cp.output().row(0).iter().cloned().collect();
            let vq: Vec<f64> = cq.output().row(0).iter().cloned().collect();
            objective = fgan_objective(&vp, &vq);
            if !objective.is_finite() {
                return Err(EimError::Training {
                    epoch: it,
                    message: "non-finite f-GAN objective".into(),
                });
            }
            // Ascent on the objective: minimise E_p[exp(-V)] + E_q[V].
            let np = vp.len() as f64;
            let nq = vq.len() as f64;
            let gp = DMatrix::from_iterator(1, vp.len(), vp.iter().map(|v| -(-v.max(-50.0)).exp() / np));
            let gq = DMatrix::from_element(1, vq.len(), 1.0 / nq);
            let (mut grads, _) = critic.net.backward(&cp, &gp);
            let (gq_grads, _) = critic.net.backward(&cq, &gq);
            grads.add_assign(&gq_grads);
            grads.add_l2(&critic.net, cfg.l2);
            d_adam.step_mlp(&mut critic.net, &grads);
        }
        for _ in 0..cfg.generator_steps {
            // Generator maximises E_q[V], i.e. minimises E_q[-V].
            let noise = draw_noise(k, per_comp, d, &mut rng);
            let mut loss = |xs: &DMatrix<f64>| -> Result<(DVector<f64>, DMatrix<f64>)> {
                Ok((-critic.values(xs)?, -critic.gradient(xs)?))
            };
            let b = baseline.unwrap_or(0.0);
            let g = mixture_expectation_gradient(&layout, &params, &noise, b, &mut loss)?;
            baseline = Some(match baseline {
                Some(b) => 0.9 * b + 0.1 * g.value,
                None => g.value,
            });
            if g.grad.iter().any(|v| !v.is_finite()) {
                return Err(EimError::Numerical(format!("non-finite generator gradient at step {it}")));
            }
            g_adam.step(&mut params, &g.grad);
            model = layout.unpack(&params)?;
        }
        if monitor.due(it, cfg.iterations) {
            trace.objective.push((it, objective));
            let (ip, tl) = monitor.evaluate(&model, it)?;
            if let Some(tl) = tl {
                trace.test_log_likelihood.push((it, tl));
            }
            if let Some(ip) = ip {
                trace.i_projection.push((it, ip));
                if let Some(init_ip) = initial_ip {
                    if ip.value > 10.0 * init_ip.max(1e-12) {
                        above += monitor.every.max(1);
                    } else {
                        above = 0;
                    }
                    if above >= 50 {
                        trace.diverged = true;
                        break;
                    }
                }
            }
        }
    }
    Ok((model, trace))
}

/// The bound and the KL it bounds, both by quadrature.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundCheck {
    /// `∫ q log(q_old / p) + KL(π ‖ π_old) + Σᵢ πᵢ KL(qᵢ ‖ q_old,ᵢ)`.
    pub bound: f64,
    pub kl: f64,
    /// `KL(q ‖ p) + E_q[KL(q(z|x) ‖ q_old(z|x))]`, the bound's other form.
    pub kl_plus_posterior_gap: f64,
}

/// Evaluates the EIM upper bound of `KL(q ‖ p)` for 1-D mixtures.
pub fn upper_bound_1d(q: &Gmm, q_old: &Gmm, p: &Gmm, tol: f64) -> Result<BoundCheck> {
    for g in [q, q_old, p] {
        check_dim(1, g.dim())?;
    }
    check_dim(q.num_components(), q_old.num_components())?;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for g in [q, q_old] {
        for c in g.components() {
            let s = c.covariance()[(0, 0)].sqrt();
            lo = lo.min(c.mean()[0] - 14.0 * s);
            hi = hi.max(c.mean()[0] + 14.0 * s);
        }
    }
    let ld = |g: &Gmm, x: f64| g.log_density(&[x]).expect("1-D");
    let cross = integrate(|x| ld(q, x).exp() * (ld(q_old, x) - ld(p, x)), lo, hi, tol);
    let kl = integrate(|x| ld(q, x).exp() * (ld(q, x) - ld(p, x)), lo, hi, tol);
    let mut latent = kl_categorical(q.weights(), q_old.weights())?;
    for (i, w) in q.weights().probs().iter().enumerate() {
        latent += w * kl_gaussian(&q.components()[i], &q_old.components()[i])?;
    }
    let gap = integrate(
        |x| {
            // log posteriors directly, since q_old(z|x) underflows in the tails
            let xs = DMatrix::from_element(1, 1, x);
            let log_post = |g: &Gmm| {
                let lc = g.component_log_densities(&xs).expect("1-D");
                let joint: Vec<f64> = (0..g.num_components())
                    .map(|i| lc[(0, i)] + g.weights().probs()[i].ln())
                    .collect();
                let lse = log_sum_exp(&joint);
                (joint.iter().map(|v| v - lse).collect::<Vec<_>>(), lse)
            };
            let (lq, lq_x) = log_post(q);
            let (lo, _) = log_post(q_old);
            let kl_z: f64 = lq
                .iter()
                .zip(&lo)
                .filter(|(a, _)| a.is_finite())
                .map(|(a, b)| a.exp() * (a - b))
                .sum();
            lq_x.exp() * kl_z
        },
        lo,
        hi,
        tol,
    );
    Ok(BoundCheck {
        bound: cross + latent,
        kl,
        kl_plus_posterior_gap: kl + gap,
    })
}
