//! Evaluation metrics: Monte Carlo I-projection, held-out log-likelihood and
//! task metrics.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::distributions::{Density, Gmm};
use crate::eim_conditional::{unique_rows, MixtureOfExperts};
use crate::error::{check_dim, EimError, Result};
use crate::tasks::{ObstacleConfig, RobotLineConfig, TaskKind, TaskSpec};
use crate::rng::{rng_from_seed, EimRng};

/// Monte Carlo estimate of `KL(q ‖ p)` with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IProjection {
    pub value: f64,
    pub stderr: f64,
    pub used: usize,
    /// Samples dropped because a log density was not finite.
    pub excluded: usize,
}

/// Mean and standard error of `log q - log p` over paired log densities,
/// skipping non-finite pairs.
pub fn i_projection_from_log_densities(log_q: &[f64], log_p: &[f64]) -> Result<IProjection> {
    check_dim(log_q.len(), log_p.len())?;
    let diffs: Vec<f64> = log_q
        .iter()
        .zip(log_p)
        .map(|(a, b)| a - b)
        .filter(|v| v.is_finite())
        .collect();
    let excluded = log_q.len() - diffs.len();
    if diffs.is_empty() {
        return Err(EimError::Numerical("no finite log density ratios".into()));
    }
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let var = if diffs.len() > 1 {
        diffs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(IProjection {
        value: mean,
        stderr: (var / n).sqrt(),
        used: diffs.len(),
        excluded,
    })
}

/// `(1/n) Σ [log q(xᵢ) - log p(xᵢ)]` over `xᵢ ~ q`.
pub fn mc_i_projection(model: &dyn Density, target: &dyn Density, n: usize, seed: u64) -> Result<IProjection> {
    check_dim(target.dim(), model.dim())?;
    if n == 0 {
        return Err(EimError::Input("need at least one sample".into()));
    }
    let mut rng = rng_from_seed(seed);
    let xs = model.sample_batch(n, &mut rng);
    let lq = model.log_density_batch(&xs)?;
    let lp = target.log_density_batch(&xs)?;
    i_projection_from_log_densities(lq.as_slice(), lp.as_slice())
}

/// A density over `x` given a context `y`, evaluated and sampled row-wise.
pub trait ConditionalDensity {
    fn dim(&self) -> usize;
    fn context_dim(&self) -> usize;
    fn log_density_given(&self, xs: &DMatrix<f64>, ctx: &DMatrix<f64>) -> Result<DVector<f64>>;
    /// One sample per context row.
    fn sample_given(&self, ctx: &DMatrix<f64>, rng: &mut EimRng) -> Result<DMatrix<f64>>;
}

/// `E_y KL(q(·|y) ‖ p(·|y))` over the context rows, with
/// `samples_per_context` draws from the model for each.
pub fn mc_conditional_i_projection(
    model: &dyn ConditionalDensity,
    target: &dyn ConditionalDensity,
    contexts: &DMatrix<f64>,
    samples_per_context: usize,
    seed: u64,
) -> Result<IProjection> {
    check_dim(target.dim(), model.dim())?;
    check_dim(model.context_dim(), contexts.ncols())?;
    check_dim(target.context_dim(), contexts.ncols())?;
    if samples_per_context == 0 || contexts.nrows() == 0 {
        return Err(EimError::Input("need at least one context and sample".into()));
    }
    let rows: Vec<usize> = (0..contexts.nrows()).flat_map(|j| std::iter::repeat_n(j, samples_per_context)).collect();
    let ctx = contexts.select_rows(&rows);
    let mut rng = rng_from_seed(seed);
    let xs = model.sample_given(&ctx, &mut rng)?;
    let lq = model.log_density_given(&xs, &ctx)?;
    let lp = target.log_density_given(&xs, &ctx)?;
    i_projection_from_log_densities(lq.as_slice(), lp.as_slice())
}

/// Mean log density (nats per sample) of the rows of `test`.
pub fn test_log_likelihood(model: &dyn Density, test: &DMatrix<f64>) -> Result<f64> {
    check_dim(model.dim(), test.ncols())?;
    if test.nrows() == 0 {
        return Err(EimError::Input("empty test set".into()));
    }
    let ll = model.log_density_batch(test)?;
    Ok(ll.iter().sum::<f64>() / ll.len() as f64)
}

/// A fitted model of either family.
#[derive(Clone, Copy, Debug)]
pub enum ModelRef<'a> {
    Gmm(&'a Gmm),
    Moe(&'a MixtureOfExperts),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskMetrics {
    pub n: usize,
    pub seed: u64,
    pub rmse_to_line: Option<f64>,
    pub success_rate: Option<f64>,
    pub clearance_violation_rate: Option<f64>,
}

/// Root mean squared end-effector distance to the target segment.
pub fn robot_line_rmse(cfg: &RobotLineConfig, joints: &DMatrix<f64>) -> Result<f64> {
    check_dim(cfg.links, joints.ncols())?;
    if joints.nrows() == 0 {
        return Err(EimError::Input("no samples".into()));
    }
    let arm = cfg.arm();
    let sq: f64 = joints
        .row_iter()
        .map(|r| {
            let q: Vec<f64> = r.iter().copied().collect();
            cfg.line_distance(arm.forward_kinematics(&q)).powi(2)
        })
        .sum();
    Ok((sq / joints.nrows() as f64).sqrt())
}

/// Success rate and clearance-violation rate of via-point rows under their
/// row-aligned obstacle contexts.
pub fn obstacle_rates(cfg: &ObstacleConfig, via: &DMatrix<f64>, ctx: &DMatrix<f64>) -> Result<(f64, f64)> {
    check_dim(3, via.ncols())?;
    check_dim(3, ctx.ncols())?;
    check_dim(via.nrows(), ctx.nrows())?;
    if via.nrows() == 0 {
        return Err(EimError::Input("no samples".into()));
    }
    let (mut ok, mut violated) = (0usize, 0usize);
    for j in 0..via.nrows() {
        let v: Vec<f64> = via.row(j).iter().copied().collect();
        let c: Vec<f64> = ctx.row(j).iter().copied().collect();
        if cfg.success(&v, &c)? {
            ok += 1;
        }
        if cfg.clearances(&v, &c)?.iter().any(|d| *d < 0.0) {
            violated += 1;
        }
    }
    let n = via.nrows() as f64;
    Ok((ok as f64 / n, violated as f64 / n))
}

/// Task-specific metrics over `n` model samples. Conditional models are
/// sampled on the held-out test contexts, cycling through the distinct ones.
pub fn task_metrics(model: ModelRef, task: &TaskSpec, n: usize, seed: u64) -> Result<TaskMetrics> {
    if n == 0 {
        return Err(EimError::Input("need at least one sample".into()));
    }
    let mut rng = rng_from_seed(seed);
    let mut out = TaskMetrics {
        n,
        seed,
        rmse_to_line: None,
        success_rate: None,
        clearance_violation_rate: None,
    };
    match (&task.kind, model) {
        (TaskKind::RobotLine(cfg), ModelRef::Gmm(g)) => {
            let (xs, _) = g.sample(n, &mut rng);
            out.rmse_to_line = Some(robot_line_rmse(cfg, &xs)?);
        }
        (TaskKind::Obstacle(cfg), ModelRef::Moe(m)) => {
            let held_out = task
                .test_contexts
                .as_ref()
                .ok_or_else(|| EimError::Input("task has no test contexts".into()))?;
            let uniq = unique_rows(held_out);
            let rows: Vec<usize> = (0..n).map(|j| j % uniq.nrows()).collect();
            let ctx = uniq.select_rows(&rows);
            let (xs, _) = m.sample(&ctx, &mut rng)?;
            let (s, v) = obstacle_rates(cfg, &xs, &ctx)?;
            out.success_rate = Some(s);
            out.clearance_violation_rate = Some(v);
        }
        (kind, _) => {
            let name = match kind {
                TaskKind::RandomGmm { .. } => "random_gmm",
                TaskKind::RobotLine(_) => "robot_line",
                TaskKind::Obstacle(_) => "obstacle",
            };
            return Err(EimError::UnsupportedMetric(format!("task metrics for {name} with this model type")));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{Categorical, Gaussian, Gmm};
    use crate::quadrature::integrate;

    fn g1(m: f64, v: f64) -> Gaussian {
        Gaussian::new(DVector::from_element(1, m), DMatrix::from_element(1, 1, v)).unwrap()
    }

    fn bimodal() -> Gmm {
        Gmm::new(vec![g1(-5.0, 1.0), g1(5.0, 1.0)], Categorical::uniform(2)).unwrap()
    }

    #[test]
    fn model_equal_to_target_gives_zero() {
        let p = bimodal();
        let r = mc_i_projection(&p, &p, 2000, 1).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.excluded, 0);
    }

    #[test]
    fn shifted_gaussian_matches_closed_form() {
        let r = mc_i_projection(&g1(1.0, 1.0), &g1(0.0, 1.0), 100_000, 2).unwrap();
        assert!((r.value - 0.5).abs() <= 3.0 * r.stderr, "{r:?}");
    }

    #[test]
    fn gaussian_against_mixture_matches_quadrature() {
        let q = g1(0.0, 1.0);
        let p = bimodal();
        let exact = integrate(
            |x| {
                let lq = q.log_density(&[x]).unwrap();
                lq.exp() * (lq - p.log_density(&[x]).unwrap())
            },
            -12.0,
            12.0,
            1e-10,
        );
        let r = mc_i_projection(&q, &p, 100_000, 3).unwrap();
        assert!((r.value - exact).abs() <= 4.0 * r.stderr, "{} vs {exact}", r.value);
    }

    #[test]
    fn stderr_shrinks_like_inverse_sqrt_n() {
        let q = g1(0.3, 1.5);
        let p = g1(0.0, 1.0);
        let ns = [1_000usize, 10_000, 100_000];
        let pts: Vec<(f64, f64)> = ns
            .iter()
            .map(|&n| {
                let r = mc_i_projection(&q, &p, n, 4).unwrap();
                ((n as f64).ln(), r.stderr.ln())
            })
            .collect();
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / 3.0;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / 3.0;
        let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
            / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        assert!((slope + 0.5).abs() <= 0.1, "slope {slope}");
    }

    #[test]
    fn non_finite_pairs_are_excluded() {
        let r = i_projection_from_log_densities(&[0.0, 1.0, f64::NAN], &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(r.excluded, 1);
        assert_eq!(r.value, 0.5);
    }

    #[test]
    fn log_likelihood_of_own_samples_is_negative_entropy() {
        let p = bimodal();
        let entropy = -integrate(
            |x| {
                let l = p.log_density(&[x]).unwrap();
                l.exp() * l
            },
            -15.0,
            15.0,
            1e-10,
        );
        let mut rng = rng_from_seed(5);
        let (xs, _) = p.sample(100_000, &mut rng);
        let ll = test_log_likelihood(&p, &xs).unwrap();
        assert!((ll + entropy).abs() < 0.02, "{ll} vs {}", -entropy);
    }

    #[test]
    fn log_likelihood_single_point_and_permutation() {
        let p = bimodal();
        let one = DMatrix::from_element(1, 1, 0.7);
        assert_eq!(test_log_likelihood(&p, &one).unwrap(), p.log_density(&[0.7]).unwrap());
        let xs = DMatrix::from_column_slice(4, 1, &[0.5, -3.0, 4.0, 9.0]);
        let perm = DMatrix::from_column_slice(4, 1, &[9.0, 4.0, 0.5, -3.0]);
        let a = test_log_likelihood(&p, &xs).unwrap();
        let b = test_log_likelihood(&p, &perm).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    fn constant_moe(mean: [f64; 3], std: f64) -> MixtureOfExperts {
        use crate::nn::{Activation, Mlp};
        let mut expert = Mlp::zeros(&[3, 9], Activation::Relu);
        let mut bias = mean.to_vec();
        bias.extend([std.ln(); 3]);
        bias.extend([0.0; 3]);
        expert.layers_mut()[0].bias.copy_from_slice(&bias);
        MixtureOfExperts::new(Mlp::zeros(&[3, 1], Activation::Relu), vec![expert], 3).unwrap()
    }

    fn centred_obstacles() -> TaskSpec {
        let cfg = ObstacleConfig {
            center_y_min: 0.5,
            center_y_max: 0.5,
            contexts: 10,
            samples_per_context: 10,
            ..Default::default()
        };
        crate::tasks::gen_obstacle_task_with(&cfg, 3).unwrap()
    }

    #[test]
    fn expert_data_passes_through_its_own_success_rate() {
        let t = crate::tasks::gen_obstacle_task(200, 10, 1).unwrap();
        let TaskKind::Obstacle(cfg) = &t.kind else { unreachable!() };
        let ctx = t.train_contexts.as_ref().unwrap();
        let (s, v) = obstacle_rates(cfg, &t.train, ctx).unwrap();
        let direct = (0..t.train.nrows())
            .filter(|&j| {
                let x: Vec<f64> = t.train.row(j).iter().copied().collect();
                let c: Vec<f64> = ctx.row(j).iter().copied().collect();
                cfg.success(&x, &c).unwrap()
            })
            .count() as f64
            / t.train.nrows() as f64;
        assert_eq!(s, direct);
        assert!((0.7..0.95).contains(&s), "{s}");
        assert!((s + v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn straight_line_through_centred_obstacles_always_collides() {
        let t = centred_obstacles();
        let m = constant_moe([0.5; 3], 1e-6);
        let r = task_metrics(ModelRef::Moe(&m), &t, 500, 2).unwrap();
        assert_eq!(r.success_rate, Some(0.0));
        assert_eq!(r.clearance_violation_rate, Some(1.0));
        assert_eq!(r.rmse_to_line, None);
    }

    #[test]
    fn wide_gaussian_success_matches_direct_monte_carlo() {
        use crate::distributions::Gaussian;
        let t = crate::tasks::gen_obstacle_task(40, 5, 4).unwrap();
        let TaskKind::Obstacle(cfg) = &t.kind else { unreachable!() };
        let m = constant_moe([0.5; 3], 0.3);
        let n = 20_000;
        let got = task_metrics(ModelRef::Moe(&m), &t, n, 5).unwrap().success_rate.unwrap();
        let g = Gaussian::isotropic(DVector::from_element(3, 0.5), 0.09).unwrap();
        let uniq = unique_rows(t.test_contexts.as_ref().unwrap());
        let mut rng = rng_from_seed(6);
        let xs = g.sample(n, &mut rng);
        let hits = (0..n)
            .filter(|&j| {
                let x: Vec<f64> = xs.row(j).iter().copied().collect();
                let c: Vec<f64> = uniq.row(j % uniq.nrows()).iter().copied().collect();
                cfg.success(&x, &c).unwrap()
            })
            .count();
        let want = hits as f64 / n as f64;
        let tol = 4.0 * (2.0 * want * (1.0 - want) / n as f64).sqrt();
        assert!((got - want).abs() < tol, "{got} vs {want}");
    }

    #[test]
    fn folded_arm_is_three_away_from_the_line() {
        use crate::distributions::Gaussian;
        let t = crate::tasks::gen_robot_line_task(20, 7).unwrap();
        let g = Gaussian::isotropic(DVector::zeros(10), 1e-16).unwrap();
        let gmm = Gmm::new(vec![g], Categorical::uniform(1)).unwrap();
        let r = task_metrics(ModelRef::Gmm(&gmm), &t, 100, 8).unwrap();
        assert!((r.rmse_to_line.unwrap() - 3.0).abs() < 1e-6);
    }

    #[test]
    fn missing_metric_handle_is_unsupported() {
        let t = crate::tasks::gen_random_gmm_task_with(2, 2, 9, crate::tasks::SplitCounts::from_train(10)).unwrap();
        let err = task_metrics(ModelRef::Gmm(t.target.as_ref().unwrap()), &t, 10, 1).unwrap_err();
        assert!(matches!(err, EimError::UnsupportedMetric(_)));
        let err = task_metrics(ModelRef::Moe(&constant_moe([0.5; 3], 0.1)), &crate::tasks::gen_robot_line_task(5, 1).unwrap(), 10, 1).unwrap_err();
        assert!(matches!(err, EimError::UnsupportedMetric(_)));
    }

    #[test]
    fn conditional_i_projection_of_model_against_itself_is_zero() {
        let m = constant_moe([0.2, 0.4, 0.6], 0.3);
        let ctx = DMatrix::from_fn(4, 3, |j, k| 0.1 * (j + k) as f64);
        let r = mc_conditional_i_projection(&m, &m, &ctx, 50, 10).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.used, 200);
    }
}
