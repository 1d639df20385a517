//! Synthetic tasks: random GMM targets, planar robot line reaching and
//! via-point obstacle avoidance, with their feature maps and success checks.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::distributions::{Categorical, Gaussian, Gmm};
use crate::error::{check_dim, EimError, Result};
use crate::ratio_estimator::FeatureMap;
use crate::rng::{standard_normal, substream, EimRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub test: usize,
    pub validation: usize,
}

impl Default for SplitCounts {
    fn default() -> Self {
        Self {
            train: 10_000,
            test: 5_000,
            validation: 5_000,
        }
    }
}

impl SplitCounts {
    /// `n` training samples with half as many test and validation samples.
    pub fn from_train(n: usize) -> Self {
        Self {
            train: n,
            test: (n / 2).max(1),
            validation: (n / 2).max(1),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.train == 0 || self.test == 0 || self.validation == 0 {
            return Err(EimError::Input("split sizes must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum TaskKind {
    RandomGmm { dim: usize, components: usize },
    RobotLine(RobotLineConfig),
    Obstacle(ObstacleConfig),
}

/// A generated dataset with its ground-truth handles.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub seed: u64,
    pub train: DMatrix<f64>,
    pub test: DMatrix<f64>,
    pub validation: DMatrix<f64>,
    /// Row-aligned contexts for conditional tasks.
    pub train_contexts: Option<DMatrix<f64>>,
    pub test_contexts: Option<DMatrix<f64>>,
    pub validation_contexts: Option<DMatrix<f64>>,
    /// Analytic target density, when known.
    pub target: Option<Gmm>,
}

impl TaskSpec {
    pub fn name(&self) -> &'static str {
        match self.kind {
            TaskKind::RandomGmm { .. } => "random_gmm",
            TaskKind::RobotLine(_) => "robot_line",
            TaskKind::Obstacle(_) => "obstacle",
        }
    }

    pub fn dim(&self) -> usize {
        self.train.ncols()
    }

    pub fn context_dim(&self) -> usize {
        self.train_contexts.as_ref().map_or(0, |c| c.ncols())
    }

    pub fn is_conditional(&self) -> bool {
        self.train_contexts.is_some()
    }

    /// Discriminator features that expose the task structure, if any.
    pub fn feature_map(&self) -> Option<Arc<dyn FeatureMap>> {
        match &self.kind {
            TaskKind::RandomGmm { .. } => None,
            TaskKind::RobotLine(c) => Some(Arc::new(EndEffectorFeatures { arm: c.arm() })),
            TaskKind::Obstacle(c) => Some(Arc::new(ClearanceFeatures { config: c.clone() })),
        }
    }
}

/// Random GMM target: means uniform in `[-5, 5]^d`, covariances `AAᵀ + 0.5 I`
/// with `A ~ N(0, 1/d)`, Dirichlet(5) weights floored at 0.05.
pub fn random_gmm(dim: usize, components: usize, seed: u64) -> Result<Gmm> {
    if dim == 0 || components == 0 {
        return Err(EimError::Input("dimension and component count must be positive".into()));
    }
    let mut rng = substream(seed, 0);
    let scale = 1.0 / (dim as f64).sqrt();
    let gamma = Gamma::new(5.0, 1.0).expect("valid shape");
    let mut comps = Vec::with_capacity(components);
    for _ in 0..components {
        let mean = DVector::from_fn(dim, |_, _| rng.random_range(-5.0..5.0));
        let a = DMatrix::from_fn(dim, dim, |_, _| standard_normal(&mut rng) * scale);
        let cov = &a * a.transpose() + DMatrix::identity(dim, dim) * 0.5;
        comps.push(Gaussian::new(mean, cov)?);
    }
    let raw: Vec<f64> = (0..components).map(|_| gamma.sample(&mut rng)).collect();
    let total: f64 = raw.iter().sum();
    let floored: Vec<f64> = raw.iter().map(|w| (w / total).max(0.05)).collect();
    let total: f64 = floored.iter().sum();
    let weights = Categorical::new(DVector::from_iterator(components, floored.iter().map(|w| w / total)))?;
    Gmm::new(comps, weights)
}

pub fn gen_random_gmm_task(dim: usize, components: usize, seed: u64) -> Result<TaskSpec> {
    gen_random_gmm_task_with(dim, components, seed, SplitCounts::default())
}

pub fn gen_random_gmm_task_with(dim: usize, components: usize, seed: u64, counts: SplitCounts) -> Result<TaskSpec> {
    counts.validate()?;
    let target = random_gmm(dim, components, seed)?;
    let (train, _) = target.sample(counts.train, &mut substream(seed, 1));
    let (test, _) = target.sample(counts.test, &mut substream(seed, 2));
    let (validation, _) = target.sample(counts.validation, &mut substream(seed, 3));
    Ok(TaskSpec {
        kind: TaskKind::RandomGmm { dim, components },
        seed,
        train,
        test,
        validation,
        train_contexts: None,
        test_contexts: None,
        validation_contexts: None,
        target: Some(target),
    })
}

/// Planar serial chain; joint angles are relative to the previous link.
#[derive(Clone, Debug, PartialEq)]
pub struct RobotArm {
    pub link_lengths: Vec<f64>,
}

impl RobotArm {
    pub fn uniform(links: usize, length: f64) -> Self {
        Self {
            link_lengths: vec![length; links],
        }
    }

    pub fn links(&self) -> usize {
        self.link_lengths.len()
    }

    pub fn reach(&self) -> f64 {
        self.link_lengths.iter().sum()
    }

    /// Positions of every joint after the base, ending with the end effector.
    pub fn joint_positions(&self, angles: &[f64]) -> Vec<[f64; 2]> {
        let mut out = Vec::with_capacity(angles.len());
        let (mut x, mut y, mut a) = (0.0, 0.0, 0.0);
        for (l, t) in self.link_lengths.iter().zip(angles) {
            a += t;
            x += l * a.cos();
            y += l * a.sin();
            out.push([x, y]);
        }
        out
    }

    pub fn forward_kinematics(&self, angles: &[f64]) -> [f64; 2] {
        *self.joint_positions(angles).last().unwrap_or(&[0.0, 0.0])
    }

    /// 2×n Jacobian of the end effector.
    pub fn jacobian(&self, angles: &[f64]) -> DMatrix<f64> {
        let n = self.links();
        let mut cum = Vec::with_capacity(n);
        let mut a = 0.0;
        for t in angles {
            a += t;
            cum.push(a);
        }
        let mut j = DMatrix::zeros(2, n);
        let (mut sx, mut sy) = (0.0, 0.0);
        for i in (0..n).rev() {
            sx += self.link_lengths[i] * cum[i].cos();
            sy += self.link_lengths[i] * cum[i].sin();
            j[(0, i)] = -sy;
            j[(1, i)] = sx;
        }
        j
    }

    /// Damped least-squares inverse kinematics from `init`.
    pub fn solve_ik(&self, target: [f64; 2], init: &[f64], damping: f64, max_steps: usize, tolerance: f64) -> Option<Vec<f64>> {
        let mut theta = init.to_vec();
        for _ in 0..=max_steps {
            let p = self.forward_kinematics(&theta);
            let e = nalgebra::Vector2::new(target[0] - p[0], target[1] - p[1]);
            if e.norm() <= tolerance {
                return Some(theta);
            }
            let j = self.jacobian(&theta);
            let jjt = &j * j.transpose();
            let m = nalgebra::Matrix2::new(
                jjt[(0, 0)] + damping * damping,
                jjt[(0, 1)],
                jjt[(1, 0)],
                jjt[(1, 1)] + damping * damping,
            );
            let w = m.try_inverse()? * e;
            let step = j.transpose() * DVector::from_column_slice(w.as_slice());
            for (t, s) in theta.iter_mut().zip(step.iter()) {
                *t += s;
            }
        }
        None
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotLineConfig {
    pub links: usize,
    pub link_length: f64,
    pub line_x: f64,
    pub line_y_min: f64,
    pub line_y_max: f64,
    pub init_std: f64,
    pub damping: f64,
    pub max_steps: usize,
    pub tolerance: f64,
}

impl Default for RobotLineConfig {
    fn default() -> Self {
        Self {
            links: 10,
            link_length: 1.0,
            line_x: 7.0,
            line_y_min: -4.0,
            line_y_max: 4.0,
            init_std: 0.5,
            damping: 0.1,
            max_steps: 200,
            tolerance: 1e-2,
        }
    }
}

impl RobotLineConfig {
    pub fn arm(&self) -> RobotArm {
        RobotArm::uniform(self.links, self.link_length)
    }

    /// Euclidean distance from `p` to the target segment.
    pub fn line_distance(&self, p: [f64; 2]) -> f64 {
        let dx = p[0] - self.line_x;
        let dy = (self.line_y_min - p[1]).max(p[1] - self.line_y_max).max(0.0);
        (dx * dx + dy * dy).sqrt()
    }

    /// End-effector distance to the line for a joint configuration.
    pub fn configuration_distance(&self, angles: &[f64]) -> f64 {
        self.line_distance(self.arm().forward_kinematics(angles))
    }

    fn sample_one(&self, rng: &mut EimRng) -> Option<Vec<f64>> {
        let arm = self.arm();
        for _ in 0..100 {
            let y = rng.random_range(self.line_y_min..=self.line_y_max);
            let init: Vec<f64> = (0..self.links).map(|_| standard_normal(rng) * self.init_std).collect();
            if let Some(t) = arm.solve_ik([self.line_x, y], &init, self.damping, self.max_steps, self.tolerance) {
                return Some(t);
            }
        }
        None
    }

    fn generate(&self, n: usize, seed: u64, stream: u64) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(n, self.links);
        for j in 0..n {
            let mut rng = substream(seed, (stream << 40) + j as u64);
            let t = self
                .sample_one(&mut rng)
                .ok_or_else(|| EimError::Numerical("inverse kinematics acceptance rate below 1%".into()))?;
            out.set_row(j, &DVector::from_vec(t).transpose());
        }
        Ok(out)
    }
}

pub fn gen_robot_line_task(n: usize, seed: u64) -> Result<TaskSpec> {
    gen_robot_line_task_with(&RobotLineConfig::default(), SplitCounts::from_train(n), seed)
}

pub fn gen_robot_line_task_with(cfg: &RobotLineConfig, counts: SplitCounts, seed: u64) -> Result<TaskSpec> {
    counts.validate()?;
    if cfg.links == 0 || cfg.line_y_max < cfg.line_y_min {
        return Err(EimError::Config("invalid robot configuration".into()));
    }
    Ok(TaskSpec {
        kind: TaskKind::RobotLine(cfg.clone()),
        seed,
        train: cfg.generate(counts.train, seed, 1)?,
        test: cfg.generate(counts.test, seed, 2)?,
        validation: cfg.generate(counts.validation, seed, 3)?,
        train_contexts: None,
        test_contexts: None,
        validation_contexts: None,
        target: None,
    })
}

/// End-effector coordinates of a joint configuration.
#[derive(Clone, Debug)]
pub struct EndEffectorFeatures {
    pub arm: RobotArm,
}

impl FeatureMap for EndEffectorFeatures {
    fn name(&self) -> &str {
        "end_effector"
    }
    fn width(&self) -> usize {
        2
    }
    fn features(&self, x: &[f64], _context: &[f64]) -> Vec<f64> {
        self.arm.forward_kinematics(x).to_vec()
    }
    fn jacobian(&self, x: &[f64], _context: &[f64]) -> DMatrix<f64> {
        self.arm.jacobian(x)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObstacleConfig {
    pub obstacle_x: [f64; 3],
    pub radius: f64,
    pub center_y_min: f64,
    pub center_y_max: f64,
    pub start_y: f64,
    pub goal_y: f64,
    pub via_min: f64,
    pub via_max: f64,
    /// Via heights spread with standard deviation `gap / spread_divisor`.
    pub spread_divisor: f64,
    /// Points along the spline used by the collision check.
    pub resolution: usize,
    pub contexts: usize,
    pub samples_per_context: usize,
}

impl Default for ObstacleConfig {
    fn default() -> Self {
        Self {
            obstacle_x: [0.25, 0.5, 0.75],
            radius: 0.1,
            center_y_min: 0.2,
            center_y_max: 0.8,
            start_y: 0.5,
            goal_y: 0.5,
            via_min: 0.02,
            via_max: 0.98,
            spread_divisor: 16.0,
            resolution: 200,
            contexts: 1000,
            samples_per_context: 10,
        }
    }
}

/// Natural cubic spline through `(xs[i], ys[i])`.
#[derive(Clone, Debug, PartialEq)]
pub struct NaturalCubicSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    second: Vec<f64>,
}

impl NaturalCubicSpline {
    pub fn new(xs: &[f64], ys: &[f64]) -> Result<Self> {
        check_dim(xs.len(), ys.len())?;
        let n = xs.len();
        if n < 2 || xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(EimError::Input("spline knots must be strictly increasing".into()));
        }
        // Tridiagonal solve for the second derivatives, zero at both ends.
        let mut second = vec![0.0; n];
        if n > 2 {
            let m = n - 2;
            let mut diag = vec![0.0; m];
            let mut upper = vec![0.0; m];
            let mut rhs = vec![0.0; m];
            for k in 0..m {
                let i = k + 1;
                let h0 = xs[i] - xs[i - 1];
                let h1 = xs[i + 1] - xs[i];
                diag[k] = 2.0 * (h0 + h1);
                upper[k] = h1;
                rhs[k] = 6.0 * ((ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0);
            }
            for k in 1..m {
                let lower = xs[k + 1] - xs[k];
                let f = lower / diag[k - 1];
                diag[k] -= f * upper[k - 1];
                rhs[k] -= f * rhs[k - 1];
            }
            for k in (0..m).rev() {
                let next = if k + 1 < m { second[k + 2] } else { 0.0 };
                second[k + 1] = (rhs[k] - upper[k] * next) / diag[k];
            }
        }
        Ok(Self {
            xs: xs.to_vec(),
            ys: ys.to_vec(),
            second,
        })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        let i = match self.xs.iter().position(|k| *k > x) {
            Some(0) => 0,
            Some(p) => (p - 1).min(n - 2),
            None => n - 2,
        };
        let h = self.xs[i + 1] - self.xs[i];
        let a = (self.xs[i + 1] - x) / h;
        let b = (x - self.xs[i]) / h;
        a * self.ys[i]
            + b * self.ys[i + 1]
            + ((a * a * a - a) * self.second[i] + (b * b * b - b) * self.second[i + 1]) * h * h / 6.0
    }
}

impl ObstacleConfig {
    pub fn trajectory(&self, via: &[f64]) -> Result<NaturalCubicSpline> {
        check_dim(3, via.len())?;
        let xs = [0.0, self.obstacle_x[0], self.obstacle_x[1], self.obstacle_x[2], 1.0];
        let ys = [self.start_y, via[0], via[1], via[2], self.goal_y];
        NaturalCubicSpline::new(&xs, &ys)
    }

    /// Minimum distance of the trajectory to each obstacle minus the radius,
    /// over `points` evenly spaced spline points.
    pub fn clearances_at(&self, via: &[f64], centers_y: &[f64], points: usize) -> Result<[f64; 3]> {
        check_dim(3, centers_y.len())?;
        let s = self.trajectory(via)?;
        let mut best = [f64::INFINITY; 3];
        for k in 0..points {
            let x = k as f64 / (points - 1) as f64;
            let y = s.eval(x);
            for o in 0..3 {
                let d = ((x - self.obstacle_x[o]).powi(2) + (y - centers_y[o]).powi(2)).sqrt();
                best[o] = best[o].min(d);
            }
        }
        Ok(best.map(|d| d - self.radius))
    }

    pub fn clearances(&self, via: &[f64], centers_y: &[f64]) -> Result<[f64; 3]> {
        self.clearances_at(via, centers_y, self.resolution)
    }

    pub fn success(&self, via: &[f64], centers_y: &[f64]) -> Result<bool> {
        Ok(self.clearances(via, centers_y)?.iter().all(|c| *c > 0.0))
    }

    /// Probability of passing obstacle `center_y` on the upper side.
    pub fn above_probability(&self, center_y: f64) -> f64 {
        let top = (1.0 - (center_y + self.radius)).max(0.0);
        let bottom = (center_y - self.radius).max(0.0);
        if top + bottom == 0.0 {
            0.5
        } else {
            top / (top + bottom)
        }
    }

    /// One expert via-point triple for the given obstacle heights.
    pub fn sample_via<R: Rng + ?Sized>(&self, centers_y: &[f64], rng: &mut R) -> [f64; 3] {
        let mut via = [0.0; 3];
        for o in 0..3 {
            let c = centers_y[o];
            let above = rng.random::<f64>() < self.above_probability(c);
            let (lo, hi) = if above { (c + self.radius, 1.0) } else { (0.0, c - self.radius) };
            let gap = (hi - lo).max(0.0);
            let mid = 0.5 * (lo + hi);
            via[o] = (mid + standard_normal(rng) * gap / self.spread_divisor).clamp(self.via_min, self.via_max);
        }
        via
    }

    pub fn sample_context<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 3] {
        [0; 3].map(|_| rng.random_range(self.center_y_min..=self.center_y_max))
    }

    fn generate(&self, contexts: usize, per_context: usize, seed: u64, stream: u64) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = contexts * per_context;
        let mut xs = DMatrix::zeros(n, 3);
        let mut ys = DMatrix::zeros(n, 3);
        for c in 0..contexts {
            let mut rng = substream(seed, (stream << 40) + c as u64);
            let ctx = self.sample_context(&mut rng);
            for s in 0..per_context {
                let via = self.sample_via(&ctx, &mut rng);
                let r = c * per_context + s;
                for k in 0..3 {
                    xs[(r, k)] = via[k];
                    ys[(r, k)] = ctx[k];
                }
            }
        }
        (xs, ys)
    }
}

pub fn gen_obstacle_task(n_contexts: usize, samples_per_context: usize, seed: u64) -> Result<TaskSpec> {
    let cfg = ObstacleConfig {
        contexts: n_contexts,
        samples_per_context,
        ..Default::default()
    };
    gen_obstacle_task_with(&cfg, seed)
}

/// Train split from `cfg.contexts` contexts; test and validation splits from
/// half as many fresh contexts each.
pub fn gen_obstacle_task_with(cfg: &ObstacleConfig, seed: u64) -> Result<TaskSpec> {
    if cfg.contexts == 0 || cfg.samples_per_context == 0 {
        return Err(EimError::Input("context and sample counts must be positive".into()));
    }
    if cfg.resolution < 2 {
        return Err(EimError::Config("collision check needs at least two points".into()));
    }
    let held_out = (cfg.contexts / 2).max(1);
    let (train, train_c) = cfg.generate(cfg.contexts, cfg.samples_per_context, seed, 1);
    let (test, test_c) = cfg.generate(held_out, cfg.samples_per_context, seed, 2);
    let (validation, val_c) = cfg.generate(held_out, cfg.samples_per_context, seed, 3);
    Ok(TaskSpec {
        kind: TaskKind::Obstacle(cfg.clone()),
        seed,
        train,
        test,
        validation,
        train_contexts: Some(train_c),
        test_contexts: Some(test_c),
        validation_contexts: Some(val_c),
        target: None,
    })
}

/// The three obstacle clearances of a trajectory given its context.
#[derive(Clone, Debug)]
pub struct ClearanceFeatures {
    pub config: ObstacleConfig,
}

impl FeatureMap for ClearanceFeatures {
    fn name(&self) -> &str {
        "clearance"
    }
    fn width(&self) -> usize {
        3
    }
    fn features(&self, x: &[f64], context: &[f64]) -> Vec<f64> {
        self.config
            .clearances(x, context)
            .map(|c| c.to_vec())
            .unwrap_or_else(|_| vec![f64::NAN; 3])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;
    use crate::rng::rng_from_seed;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn single_component_task_is_a_gaussian() {
        let t = gen_random_gmm_task_with(3, 1, 4, SplitCounts::from_train(10)).unwrap();
        let g = t.target.unwrap();
        assert_eq!(g.num_components(), 1);
        assert_eq!(g.weights().probs()[0], 1.0);
    }

    #[test]
    fn generation_is_deterministic() {
        let a = gen_random_gmm_task_with(2, 5, 9, SplitCounts::from_train(100)).unwrap();
        let b = gen_random_gmm_task_with(2, 5, 9, SplitCounts::from_train(100)).unwrap();
        assert_eq!(a, b);
        let c = gen_random_gmm_task_with(2, 5, 10, SplitCounts::from_train(100)).unwrap();
        assert_ne!(a.target, c.target);
    }

    #[test]
    fn random_target_weights_are_floored() {
        for seed in 0..20 {
            let g = random_gmm(2, 5, seed).unwrap();
            assert!(g.weights().probs().iter().all(|w| *w >= 0.05 / 1.25 - 1e-12));
            for c in g.components() {
                assert!(c.mean().iter().all(|m| (-5.0..=5.0).contains(m)));
            }
        }
    }

    #[test]
    fn one_dimensional_target_integrates_to_one() {
        for seed in 0..3 {
            let g = random_gmm(1, 5, seed).unwrap();
            let mass = integrate(|x| g.log_density(&[x]).unwrap().exp(), -20.0, 20.0, 1e-10);
            assert!((mass - 1.0).abs() < 1e-4, "{mass}");
        }
    }

    #[test]
    fn two_dimensional_target_integrates_to_one() {
        let g = random_gmm(2, 3, 1).unwrap();
        let mass = integrate(
            |x| integrate(|y| g.log_density(&[x, y]).unwrap().exp(), -15.0, 15.0, 1e-9),
            -15.0,
            15.0,
            1e-7,
        );
        assert!((mass - 1.0).abs() < 1e-3, "{mass}");
    }

    #[test]
    fn forward_kinematics_special_postures() {
        let arm = RobotArm::uniform(10, 1.0);
        let p = arm.forward_kinematics(&[0.0; 10]);
        assert!((p[0] - 10.0).abs() < 1e-12 && p[1].abs() < 1e-12);
        let mut a = [0.0; 10];
        a[0] = FRAC_PI_2;
        let p = arm.forward_kinematics(&a);
        assert!(p[0].abs() < 1e-12 && (p[1] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn forward_kinematics_matches_rotation_products() {
        let arm = RobotArm {
            link_lengths: (0..10).map(|i| 0.5 + 0.1 * i as f64).collect(),
        };
        let mut rng = rng_from_seed(3);
        for _ in 0..50 {
            let a: Vec<f64> = (0..10).map(|_| rng.random_range(-3.0..3.0)).collect();
            // Homogeneous transforms: rotate by θᵢ, then translate along the link.
            let mut t = nalgebra::Matrix3::<f64>::identity();
            for (l, th) in arm.link_lengths.iter().zip(&a) {
                let (s, c) = th.sin_cos();
                let step = nalgebra::Matrix3::new(c, -s, c * l, s, c, s * l, 0.0, 0.0, 1.0);
                t *= step;
            }
            let p = arm.forward_kinematics(&a);
            assert!((p[0] - t[(0, 2)]).abs() < 1e-10 && (p[1] - t[(1, 2)]).abs() < 1e-10);
        }
    }

    #[test]
    fn kinematic_jacobian_matches_finite_differences() {
        let arm = RobotArm::uniform(10, 1.0);
        let mut rng = rng_from_seed(4);
        let a: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        let j = arm.jacobian(&a);
        for i in 0..10 {
            let mut up = a.clone();
            up[i] += 1e-6;
            let mut dn = a.clone();
            dn[i] -= 1e-6;
            let (pu, pd) = (arm.forward_kinematics(&up), arm.forward_kinematics(&dn));
            for r in 0..2 {
                assert!(((pu[r] - pd[r]) / 2e-6 - j[(r, i)]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn robot_data_lies_on_the_line() {
        let t = gen_robot_line_task_with(&RobotLineConfig::default(), SplitCounts::from_train(200), 1).unwrap();
        let TaskKind::RobotLine(cfg) = &t.kind else { unreachable!() };
        for r in t.train.row_iter() {
            let a: Vec<f64> = r.iter().cloned().collect();
            assert!(cfg.configuration_distance(&a) <= 1e-2);
        }
        assert_eq!(t.test.nrows(), 100);
    }

    #[test]
    fn robot_solutions_are_multimodal() {
        let cfg = RobotLineConfig::default();
        let arm = cfg.arm();
        let mut rng = rng_from_seed(5);
        let mut signs = [0usize; 2];
        for _ in 0..100 {
            let init: Vec<f64> = (0..10).map(|_| standard_normal(&mut rng) * cfg.init_std).collect();
            if let Some(t) = arm.solve_ik([7.0, 0.0], &init, cfg.damping, cfg.max_steps, cfg.tolerance) {
                // Elbow statistic: height of the middle joint.
                let mid = arm.joint_positions(&t)[4][1];
                signs[(mid > 0.0) as usize] += 1;
            }
        }
        assert!(signs[0] >= 5 && signs[1] >= 5, "{signs:?}");
    }

    #[test]
    fn spline_interpolates_and_is_linear_for_collinear_knots() {
        let s = NaturalCubicSpline::new(&[0.0, 0.25, 0.5, 0.75, 1.0], &[0.5, 0.2, 0.9, 0.4, 0.5]).unwrap();
        for (x, y) in [(0.0, 0.5), (0.25, 0.2), (0.5, 0.9), (0.75, 0.4), (1.0, 0.5)] {
            assert!((s.eval(x) - y).abs() < 1e-12);
        }
        let line = NaturalCubicSpline::new(&[0.0, 0.3, 0.6, 1.0], &[0.0, 0.6, 1.2, 2.0]).unwrap();
        assert!((line.eval(0.45) - 0.9).abs() < 1e-12);
    }

    #[test]
    fn spline_has_zero_curvature_at_the_ends() {
        let s = NaturalCubicSpline::new(&[0.0, 0.25, 0.5, 0.75, 1.0], &[0.5, 0.2, 0.9, 0.4, 0.5]).unwrap();
        let h = 1e-4;
        for x in [h, 1.0 - h] {
            let c = (s.eval(x + h) - 2.0 * s.eval(x) + s.eval(x - h)) / (h * h);
            assert!(c.abs() < 0.05, "{c}");
        }
    }

    #[test]
    fn straight_line_through_centred_obstacles_collides() {
        let cfg = ObstacleConfig::default();
        assert!(!cfg.success(&[0.5, 0.5, 0.5], &[0.5, 0.5, 0.5]).unwrap());
        assert!(cfg.success(&[0.85, 0.15, 0.85], &[0.5, 0.5, 0.5]).unwrap());
    }

    #[test]
    fn all_eight_modes_appear() {
        let cfg = ObstacleConfig::default();
        let mut rng = rng_from_seed(6);
        let mut counts = [0usize; 8];
        for _ in 0..1000 {
            let v = cfg.sample_via(&[0.5, 0.5, 0.5], &mut rng);
            let code = (0..3).map(|o| ((v[o] > 0.5) as usize) << o).sum::<usize>();
            counts[code] += 1;
        }
        assert!(counts.iter().all(|c| *c > 0), "{counts:?}");
    }

    #[test]
    fn border_obstacle_gives_valid_probability() {
        let cfg = ObstacleConfig::default();
        assert_eq!(cfg.above_probability(0.1), 1.0);
        assert_eq!(cfg.above_probability(0.9), 0.0);
        let mut rng = rng_from_seed(7);
        for _ in 0..100 {
            let v = cfg.sample_via(&[0.1, 0.9, 0.5], &mut rng);
            assert!(v.iter().all(|h| (cfg.via_min..=cfg.via_max).contains(h)));
            assert!(v[0] > 0.2 && v[1] < 0.8);
        }
    }

    #[test]
    fn expert_data_is_mostly_but_not_always_successful() {
        let t = gen_obstacle_task(300, 10, 3).unwrap();
        let TaskKind::Obstacle(cfg) = &t.kind else { unreachable!() };
        let ctx = t.train_contexts.as_ref().unwrap();
        let ok = (0..t.train.nrows())
            .filter(|&r| {
                let x: Vec<f64> = t.train.row(r).iter().cloned().collect();
                let y: Vec<f64> = ctx.row(r).iter().cloned().collect();
                cfg.success(&x, &y).unwrap()
            })
            .count();
        let rate = ok as f64 / t.train.nrows() as f64;
        assert!((0.75..=0.95).contains(&rate), "{rate}");
    }

    #[test]
    fn coarse_collision_check_agrees_with_dense_check() {
        let cfg = ObstacleConfig::default();
        let mut rng = rng_from_seed(8);
        for _ in 0..100 {
            let ctx = cfg.sample_context(&mut rng);
            let via = cfg.sample_via(&ctx, &mut rng);
            let coarse = cfg.success(&via, &ctx).unwrap();
            let dense = cfg.clearances_at(&via, &ctx, 2000).unwrap().iter().all(|c| *c > 0.0);
            assert_eq!(coarse, dense);
        }
    }

    #[test]
    fn splits_are_disjoint() {
        let t = gen_random_gmm_task_with(2, 3, 2, SplitCounts::from_train(50)).unwrap();
        for a in t.train.row_iter() {
            assert!(t.test.row_iter().all(|b| a != b));
        }
        let o = gen_obstacle_task(10, 2, 2).unwrap();
        let train_c = o.train_contexts.unwrap();
        let test_c = o.test_contexts.unwrap();
        for a in train_c.row_iter() {
            assert!(test_c.row_iter().all(|b| a != b));
        }
    }

    #[test]
    fn feature_maps_are_pure() {
        let t = gen_obstacle_task(2, 2, 1).unwrap();
        let f = t.feature_map().unwrap();
        let a = f.features(&[0.3, 0.6, 0.2], &[0.4, 0.5, 0.6]);
        let b = f.features(&[0.3, 0.6, 0.2], &[0.4, 0.5, 0.6]);
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
        let r = RobotLineConfig::default();
        let e = EndEffectorFeatures { arm: r.arm() };
        assert_eq!(e.features(&[0.0; 10], &[]), vec![10.0, 0.0]);
    }
}
