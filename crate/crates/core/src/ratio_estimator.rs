//! Density-ratio estimation by binary logistic regression.
//!
//! A feed-forward classifier is trained to tell data samples (class 1) from
//! model samples (class 0). At the optimum its logit is `log(p / q_old)`, so
//! [`RatioEstimator::log_ratio`] returns the negated logit, `log(q_old / p)`,
//! which is the quantity every EIM objective consumes.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, EimError, Result};
use crate::nn::{Activation, Adam, Mlp};
use crate::rng::{permutation, rng_from_seed, EimRng};

/// Extra discriminator inputs `g(x, y)` that the generator never sees.
pub trait FeatureMap: Send + Sync {
    fn name(&self) -> &str;
    fn width(&self) -> usize;
    /// Features of sample `x` under context `context` (empty for marginal models).
    fn features(&self, x: &[f64], context: &[f64]) -> Vec<f64>;
    /// `∂g/∂x` as a `width × dim(x)` matrix. Defaults to central differences.
    fn jacobian(&self, x: &[f64], context: &[f64]) -> DMatrix<f64> {
        let h = 1e-6;
        let mut jac = DMatrix::zeros(self.width(), x.len());
        let mut xp = x.to_vec();
        for k in 0..x.len() {
            xp[k] = x[k] + h;
            let up = self.features(&xp, context);
            xp[k] = x[k] - h;
            let down = self.features(&xp, context);
            xp[k] = x[k];
            for r in 0..self.width() {
                jac[(r, k)] = (up[r] - down[r]) / (2.0 * h);
            }
        }
        jac
    }
}

impl fmt::Debug for dyn FeatureMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FeatureMap({})", self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub l2: f64,
    pub validation_fraction: f64,
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![50, 50, 50],
            activation: Activation::Relu,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 1000,
            max_epochs: 200,
            l2: 1e-3,
            validation_fraction: 0.2,
            patience: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(EimError::Config(m.to_string()));
        if !(self.learning_rate > 0.0) {
            return bad("ratio.learning_rate must be positive");
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("ratio.batch_size and ratio.max_epochs must be positive");
        }
        if !(self.l2 >= 0.0) {
            return bad("ratio.l2 must be non-negative");
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad("ratio.validation_fraction must lie in (0, 1)");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("ratio.beta1 and ratio.beta2 must lie in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_bce: f64,
    pub validation_bce: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_validation_bce: f64,
}

impl TrainReport {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for r in &self.epochs {
            wtr.serialize(r)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Logistic-regression classifier whose negated logit estimates `log(q_old / p)`.
#[derive(Clone, Debug)]
pub struct RatioEstimator {
    net: Mlp,
    x_dim: usize,
    context_dim: usize,
    features: Option<Arc<dyn FeatureMap>>,
    shift: DVector<f64>,
    scale: DVector<f64>,
    optimizer: Option<Adam>,
}

/// Samples with optional row-aligned contexts.
#[derive(Clone, Copy, Debug)]
pub struct Samples<'a> {
    pub xs: &'a DMatrix<f64>,
    pub ctx: Option<&'a DMatrix<f64>>,
}

impl<'a> Samples<'a> {
    pub fn new(xs: &'a DMatrix<f64>, ctx: Option<&'a DMatrix<f64>>) -> Self {
        Self { xs, ctx }
    }
}

/// Network input rows for a batch: `[x, context, g(x, context)]`.
struct Batch<'a> {
    xs: &'a DMatrix<f64>,
    ctx: Option<&'a DMatrix<f64>>,
}

impl RatioEstimator {
    /// Wraps a network whose input width is `x_dim + context_dim + feature width`.
    /// Inputs are passed through unscaled.
    pub fn new(
        net: Mlp,
        x_dim: usize,
        context_dim: usize,
        features: Option<Arc<dyn FeatureMap>>,
    ) -> Result<Self> {
        if net.output_dim() != 1 {
            return Err(EimError::Input("ratio network must have a single output".into()));
        }
        let width = x_dim + context_dim + features.as_ref().map_or(0, |f| f.width());
        check_dim(width, net.input_dim())?;
        Ok(Self {
            net,
            x_dim,
            context_dim,
            features,
            shift: DVector::zeros(width),
            scale: DVector::from_element(width, 1.0),
            optimizer: None,
        })
    }

    /// Input standardisation applied before the network.
    pub fn with_scaling(mut self, shift: DVector<f64>, scale: DVector<f64>) -> Result<Self> {
        check_dim(self.input_width(), shift.len())?;
        check_dim(self.input_width(), scale.len())?;
        if scale.iter().any(|s| !(*s > 0.0)) {
            return Err(EimError::Input("input scale must be positive".into()));
        }
        self.shift = shift;
        self.scale = scale;
        Ok(self)
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }
    pub fn x_dim(&self) -> usize {
        self.x_dim
    }
    pub fn context_dim(&self) -> usize {
        self.context_dim
    }
    pub fn features(&self) -> Option<&Arc<dyn FeatureMap>> {
        self.features.as_ref()
    }
    pub fn shift(&self) -> &DVector<f64> {
        &self.shift
    }
    pub fn scale(&self) -> &DVector<f64> {
        &self.scale
    }
    pub fn input_width(&self) -> usize {
        self.net.input_dim()
    }

    fn raw_inputs(&self, b: &Batch) -> Result<DMatrix<f64>> {
        check_dim(self.x_dim, b.xs.ncols())?;
        let n = b.xs.nrows();
        if let Some(c) = b.ctx {
            check_dim(self.context_dim, c.ncols())?;
            check_dim(n, c.nrows())?;
        } else if self.context_dim > 0 {
            return Err(EimError::Input("conditional estimator needs contexts".into()));
        }
        let width = self.input_width();
        let mut out = DMatrix::zeros(width, n);
        let mut xbuf = vec![0.0; self.x_dim];
        let mut cbuf = vec![0.0; self.context_dim];
        for j in 0..n {
            for k in 0..self.x_dim {
                xbuf[k] = b.xs[(j, k)];
                out[(k, j)] = xbuf[k];
            }
            if let Some(c) = b.ctx {
                for k in 0..self.context_dim {
                    cbuf[k] = c[(j, k)];
                    out[(self.x_dim + k, j)] = cbuf[k];
                }
            }
            if let Some(f) = &self.features {
                let g = f.features(&xbuf, &cbuf);
                check_dim(f.width(), g.len())?;
                for (k, v) in g.into_iter().enumerate() {
                    out[(self.x_dim + self.context_dim + k, j)] = v;
                }
            }
        }
        Ok(out)
    }

    fn standardise(&self, mut raw: DMatrix<f64>) -> DMatrix<f64> {
        for mut col in raw.column_iter_mut() {
            for k in 0..col.len() {
                col[k] = (col[k] - self.shift[k]) / self.scale[k];
            }
        }
        raw
    }

    fn inputs(&self, xs: &DMatrix<f64>, ctx: Option<&DMatrix<f64>>) -> Result<DMatrix<f64>> {
        Ok(self.standardise(self.raw_inputs(&Batch { xs, ctx })?))
    }

    /// Raw classifier logits `φ` for the rows of `xs` (positive means "looks like data").
    pub fn logits(&self, xs: &DMatrix<f64>, ctx: Option<&DMatrix<f64>>) -> Result<DVector<f64>> {
        let out = self.net.forward(&self.inputs(xs, ctx)?)?;
        Ok(out.row(0).transpose())
    }

    /// Estimated `log(q_old / p)` for the rows of `xs`.
    pub fn log_ratio_batch(&self, xs: &DMatrix<f64>, ctx: Option<&DMatrix<f64>>) -> Result<DVector<f64>> {
        Ok(-self.logits(xs, ctx)?)
    }

    /// Raw logit for one sample.
    pub fn forward_logit(&self, x: &[f64], context: &[f64]) -> Result<f64> {
        let xs = DMatrix::from_row_slice(1, x.len(), x);
        let ctx = DMatrix::from_row_slice(1, context.len(), context);
        let ctx = (self.context_dim > 0 || !context.is_empty()).then_some(&ctx);
        Ok(self.logits(&xs, ctx)?[0])
    }

    /// Estimated `log(q_old(x) / p(x))`; positive where the old model overweights `x`.
    pub fn log_ratio(&self, x: &[f64], context: &[f64]) -> Result<f64> {
        Ok(-self.forward_logit(x, context)?)
    }

    /// `∂φ/∂x` of the raw logit for each row (n × dim x), including the path
    /// through the feature map.
    pub fn logit_input_gradient(&self, xs: &DMatrix<f64>, ctx: Option<&DMatrix<f64>>) -> Result<DMatrix<f64>> {
        Ok(self.logits_with_gradient(xs, ctx)?.1)
    }

    /// Estimated `log(q_old / p)` and its gradient w.r.t. `x` in one pass.
    pub fn log_ratio_with_gradient(
        &self,
        xs: &DMatrix<f64>,
        ctx: Option<&DMatrix<f64>>,
    ) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let (l, g) = self.logits_with_gradient(xs, ctx)?;
        Ok((-l, -g))
    }

    fn logits_with_gradient(
        &self,
        xs: &DMatrix<f64>,
        ctx: Option<&DMatrix<f64>>,
    ) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let inputs = self.inputs(xs, ctx)?;
        let n = xs.nrows();
        let ones = DMatrix::from_element(1, n, 1.0);
        let (logits, g) = self.net.forward_with_input_gradient(&inputs, &ones)?;
        let mut out = DMatrix::zeros(n, self.x_dim);
        let f_off = self.x_dim + self.context_dim;
        let mut xbuf = vec![0.0; self.x_dim];
        let mut cbuf = vec![0.0; self.context_dim];
        for j in 0..n {
            for k in 0..self.x_dim {
                out[(j, k)] = g[(k, j)] / self.scale[k];
            }
            if let Some(f) = &self.features {
                for k in 0..self.x_dim {
                    xbuf[k] = xs[(j, k)];
                }
                if let Some(c) = ctx {
                    for k in 0..self.context_dim {
                        cbuf[k] = c[(j, k)];
                    }
                }
                let jac = f.jacobian(&xbuf, &cbuf);
                for r in 0..f.width() {
                    let upstream = g[(f_off + r, j)] / self.scale[f_off + r];
                    for k in 0..self.x_dim {
                        out[(j, k)] += upstream * jac[(r, k)];
                    }
                }
            }
        }
        Ok((logits.row(0).transpose(), out))
    }

    /// `∂/∂x log(q_old / p)` for each row.
    pub fn log_ratio_gradient(&self, xs: &DMatrix<f64>, ctx: Option<&DMatrix<f64>>) -> Result<DMatrix<f64>> {
        Ok(-self.logit_input_gradient(xs, ctx)?)
    }

    /// Fresh estimator with input standardisation fitted to the pooled samples.
    pub fn fresh(
        p: &DMatrix<f64>,
        q: &DMatrix<f64>,
        p_ctx: Option<&DMatrix<f64>>,
        q_ctx: Option<&DMatrix<f64>>,
        cfg: &TrainConfig,
        features: Option<Arc<dyn FeatureMap>>,
        rng: &mut EimRng,
    ) -> Result<Self> {
        check_dim(p.ncols(), q.ncols())?;
        let x_dim = p.ncols();
        let context_dim = p_ctx.map_or(0, |c| c.ncols());
        let width = x_dim + context_dim + features.as_ref().map_or(0, |f| f.width());
        let mut sizes = vec![width];
        sizes.extend(&cfg.hidden);
        sizes.push(1);
        let net = Mlp::new(&sizes, cfg.activation, rng);
        let est = Self::new(net, x_dim, context_dim, features)?;
        let raw_p = est.raw_inputs(&Batch { xs: p, ctx: p_ctx })?;
        let raw_q = est.raw_inputs(&Batch { xs: q, ctx: q_ctx })?;
        let n = (raw_p.ncols() + raw_q.ncols()) as f64;
        let mut shift = DVector::zeros(width);
        let mut scale = DVector::zeros(width);
        for k in 0..width {
            let vals = raw_p.row(k).iter().chain(raw_q.row(k).iter()).cloned().collect::<Vec<_>>();
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            shift[k] = mean;
            scale[k] = if var.sqrt() > 1e-8 { var.sqrt() } else { 1.0 };
        }
        est.with_scaling(shift, scale)
    }

    /// Trains (or continues training) on data samples `p` against model samples `q`
    /// with mini-batch Adam, L2 regularisation and early stopping on a random
    /// held-out split. The network is left at the best-validation snapshot.
    pub fn fit(
        &mut self,
        p: &DMatrix<f64>,
        q: &DMatrix<f64>,
        p_ctx: Option<&DMatrix<f64>>,
        q_ctx: Option<&DMatrix<f64>>,
        cfg: &TrainConfig,
        rng: &mut EimRng,
    ) -> Result<TrainReport> {
        cfg.validate()?;
        if p.nrows() < 2 || q.nrows() < 2 {
            return Err(EimError::Input("need at least two samples per class".into()));
        }
        let split = |n: usize, rng: &mut EimRng| {
            let perm = permutation(rng, n);
            let n_val = ((n as f64 * cfg.validation_fraction).round() as usize).clamp(1, n - 1);
            let (val, train) = perm.split_at(n_val);
            (train.to_vec(), val.to_vec())
        };
        let (tp, vp) = split(p.nrows(), rng);
        let (tq, vq) = split(q.nrows(), rng);
        let pick_ctx = |c: Option<&DMatrix<f64>>, idx: &[usize]| c.map(|c| c.select_rows(idx));
        self.fit_split(
            Samples::new(&p.select_rows(&tp), pick_ctx(p_ctx, &tp).as_ref()),
            Samples::new(&q.select_rows(&tq), pick_ctx(q_ctx, &tq).as_ref()),
            Samples::new(&p.select_rows(&vp), pick_ctx(p_ctx, &vp).as_ref()),
            Samples::new(&q.select_rows(&vq), pick_ctx(q_ctx, &vq).as_ref()),
            cfg,
            rng,
        )
    }

    /// Like [`RatioEstimator::fit`] with explicit validation sets.
    pub fn fit_split(
        &mut self,
        p: Samples,
        q: Samples,
        p_val: Samples,
        q_val: Samples,
        cfg: &TrainConfig,
        rng: &mut EimRng,
    ) -> Result<TrainReport> {
        cfg.validate()?;
        for s in [&p, &q, &p_val, &q_val] {
            if s.xs.nrows() == 0 {
                return Err(EimError::Input("empty training or validation set".into()));
            }
        }
        let inputs = |s: &Samples| self.inputs(s.xs, s.ctx);
        let (inputs_p, inputs_q) = (inputs(&p)?, inputs(&q)?);
        let (val_p, val_q) = (inputs(&p_val)?, inputs(&q_val)?);
        let gather = |a: &DMatrix<f64>, b: &DMatrix<f64>| {
            let n = a.ncols() + b.ncols();
            let mut m = DMatrix::zeros(a.nrows(), n);
            m.columns_mut(0, a.ncols()).copy_from(a);
            m.columns_mut(a.ncols(), b.ncols()).copy_from(b);
            let wp = n as f64 / (2.0 * a.ncols() as f64);
            let wq = n as f64 / (2.0 * b.ncols() as f64);
            let labels: Vec<f64> = (0..n).map(|j| if j < a.ncols() { 1.0 } else { 0.0 }).collect();
            let weights: Vec<f64> = (0..n).map(|j| if j < a.ncols() { wp } else { wq }).collect();
            (m, labels, weights)
        };
        let (train_x, train_y, train_w) = gather(&inputs_p, &inputs_q);
        let (val_x, val_y, val_w) = gather(&val_p, &val_q);

        let mut adam = self.optimizer.take().unwrap_or_else(|| {
            Adam::new(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps)
        });
        adam.lr = cfg.learning_rate;

        let n_train = train_x.ncols();
        let mut report = TrainReport {
            best_validation_bce: f64::INFINITY,
            ..Default::default()
        };
        let mut best_net = self.net.clone();
        let mut since_best = 0;
        for epoch in 1..=cfg.max_epochs {
            let order = permutation(rng, n_train);
            let mut train_loss = 0.0;
            for chunk in order.chunks(cfg.batch_size) {
                let b = chunk.len();
                let mut xb = DMatrix::zeros(train_x.nrows(), b);
                for (j, &i) in chunk.iter().enumerate() {
                    xb.set_column(j, &train_x.column(i));
                }
                let cache = self.net.forward_cached(&xb)?;
                let logits = cache.output();
                let mut grad = DMatrix::zeros(1, b);
                for (j, &i) in chunk.iter().enumerate() {
                    let l = logits[(0, j)];
                    let (y, w) = (train_y[i], train_w[i]);
                    train_loss += w * bce(l, y);
                    grad[(0, j)] = w * (sigmoid(l) - y) / b as f64;
                }
                let (mut grads, _) = self.net.backward(&cache, &grad);
                grads.add_l2(&self.net, cfg.l2);
                adam.step_mlp(&mut self.net, &grads);
            }
            let train_bce = train_loss / n_train as f64;
            let val_bce = weighted_bce(&self.net, &val_x, &val_y, &val_w)?;
            if !train_bce.is_finite() || !val_bce.is_finite() {
                self.optimizer = Some(adam);
                return Err(EimError::Training {
                    epoch,
                    message: "non-finite cross-entropy".into(),
                });
            }
            report.epochs.push(EpochRecord {
                epoch,
                train_bce,
                validation_bce: val_bce,
            });
            if val_bce < report.best_validation_bce {
                report.best_validation_bce = val_bce;
                report.best_epoch = epoch;
                best_net = self.net.clone();
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= cfg.patience {
                    break;
                }
            }
        }
        self.net = best_net;
        self.optimizer = Some(adam);
        Ok(report)
    }

    /// Mean class-balanced cross-entropy on the given samples.
    pub fn bce(
        &self,
        p: &DMatrix<f64>,
        q: &DMatrix<f64>,
        p_ctx: Option<&DMatrix<f64>>,
        q_ctx: Option<&DMatrix<f64>>,
    ) -> Result<f64> {
        let lp = self.logits(p, p_ctx)?;
        let lq = self.logits(q, q_ctx)?;
        let a = lp.iter().map(|l| bce(*l, 1.0)).sum::<f64>() / lp.len() as f64;
        let b = lq.iter().map(|l| bce(*l, 0.0)).sum::<f64>() / lq.len() as f64;
        Ok(0.5 * (a + b))
    }

}

/// Trains a fresh estimator: data `p` is class 1, model samples `q` class 0.
pub fn train_ratio(
    p: &DMatrix<f64>,
    q: &DMatrix<f64>,
    cfg: &TrainConfig,
    features: Option<Arc<dyn FeatureMap>>,
    seed: u64,
) -> Result<(RatioEstimator, TrainReport)> {
    let mut rng = rng_from_seed(seed);
    let mut est = RatioEstimator::fresh(p, q, None, None, cfg, features, &mut rng)?;
    let report = est.fit(p, q, None, None, cfg, &mut rng)?;
    Ok((est, report))
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Cross-entropy of logit `l` against label `y ∈ {0, 1}`.
pub fn bce(l: f64, y: f64) -> f64 {
    y * softplus(-l) + (1.0 - y) * softplus(l)
}

fn weighted_bce(net: &Mlp, x: &DMatrix<f64>, y: &[f64], w: &[f64]) -> Result<f64> {
    let out = net.forward(x)?;
    let total: f64 = (0..x.ncols()).map(|j| w[j] * bce(out[(0, j)], y[j])).sum();
    Ok(total / x.ncols() as f64)
}
