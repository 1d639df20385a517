//! The density-ratio estimator as used inside the EIM loops: a fixed
//! train/validation split of the data, fresh model samples every iteration,
//! and warm-started refits.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::Result;
use crate::ratio_estimator::{FeatureMap, RatioEstimator, Samples, TrainConfig};
use crate::rng::{permutation, EimRng};

const COLLAPSE_MARGIN: f64 = 1e-4;

pub(crate) struct Discriminator {
    est: Option<RatioEstimator>,
    features: Option<Arc<dyn FeatureMap>>,
    data_train: DMatrix<f64>,
    data_val: DMatrix<f64>,
    ctx_train: Option<DMatrix<f64>>,
    ctx_val: Option<DMatrix<f64>>,
}

impl Discriminator {
    pub(crate) fn new(
        data: &DMatrix<f64>,
        ctx: Option<&DMatrix<f64>>,
        features: Option<Arc<dyn FeatureMap>>,
        validation_fraction: f64,
        rng: &mut EimRng,
    ) -> Self {
        let n = data.nrows();
        let perm = permutation(rng, n);
        let n_val = validation_count(n, validation_fraction);
        Self {
            est: None,
            features,
            data_train: data.select_rows(&perm[n_val..]),
            data_val: data.select_rows(&perm[..n_val]),
            ctx_train: ctx.map(|c| c.select_rows(&perm[n_val..])),
            ctx_val: ctx.map(|c| c.select_rows(&perm[..n_val])),
        }
    }

    pub(crate) fn data_len(&self) -> usize {
        self.data_train.nrows() + self.data_val.nrows()
    }

    pub(crate) fn ctx_train(&self) -> Option<&DMatrix<f64>> {
        self.ctx_train.as_ref()
    }

    pub(crate) fn ctx_val(&self) -> Option<&DMatrix<f64>> {
        self.ctx_val.as_ref()
    }

    /// Refits on data against the given model samples and returns the best
    /// validation BCE. The first call trains a fresh network for
    /// `initial_epochs`; later calls continue from the previous weights.
    pub(crate) fn retrain(
        &mut self,
        model_train: Samples,
        model_val: Samples,
        cfg: &TrainConfig,
        initial_epochs: usize,
        rng: &mut EimRng,
    ) -> Result<f64> {
        let warm = self.est.is_some();
        let bce = self.train(model_train, model_val, !warm, cfg, initial_epochs, rng)?;
        // A warm-started net that has decayed to a constant output carries no
        // signal and rarely recovers; start over from a fresh one.
        if warm && bce > std::f64::consts::LN_2 - COLLAPSE_MARGIN {
            return self.train(model_train, model_val, true, cfg, initial_epochs, rng);
        }
        Ok(bce)
    }

    fn train(
        &mut self,
        model_train: Samples,
        model_val: Samples,
        fresh: bool,
        cfg: &TrainConfig,
        initial_epochs: usize,
        rng: &mut EimRng,
    ) -> Result<f64> {
        let mut tc = cfg.clone();
        if fresh {
            tc.max_epochs = initial_epochs;
            self.est = Some(RatioEstimator::fresh(
                &self.data_train,
                model_train.xs,
                self.ctx_train.as_ref(),
                model_train.ctx,
                &tc,
                self.features.clone(),
                rng,
            )?);
        }
        let est = self.est.as_mut().expect("initialised above");
        let report = est.fit_split(
            Samples::new(&self.data_train, self.ctx_train.as_ref()),
            model_train,
            Samples::new(&self.data_val, self.ctx_val.as_ref()),
            model_val,
            &tc,
            rng,
        )?;
        Ok(report.best_validation_bce)
    }

    pub(crate) fn get(&self) -> &RatioEstimator {
        self.est.as_ref().expect("retrain runs first")
    }
}

pub(crate) fn validation_count(n: usize, fraction: f64) -> usize {
    ((n as f64 * fraction).round() as usize).clamp(1, n - 1)
}
