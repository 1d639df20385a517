//! Command-line front end: dataset generation, fitting, evaluation and sweeps.
//!
//! Configuration is TOML with one section per module. Missing keys take the
//! task's defaults, unknown keys are an error. Every fit writes the resolved
//! configuration next to its outputs, so feeding that file back reproduces
//! the run.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::eim_conditional::{init_moe, run_eim_moe, run_ml_moe, CondEimConfig, CondMlConfig, MixtureOfExperts};
use crate::eim_gmm::{
    init_gmm, records_to_trace, run_eim_ablation, run_eim_gmm, run_em_gmm, run_fgan_gmm, Ablation, EimGmmConfig,
    EmConfig, GanConfig, Monitor,
};
use crate::error::{EimError, Result};
use crate::eval::{mc_i_projection, task_metrics, test_log_likelihood, ModelRef};
use crate::io::{load_model, load_task, save_model, save_task, Model};
use crate::tasks::{
    gen_obstacle_task_with, gen_random_gmm_task_with, gen_robot_line_task_with, ObstacleConfig, RobotLineConfig,
    SplitCounts, TaskKind, TaskSpec,
};
use crate::trace::Trace;

#[derive(Parser, Debug)]
#[command(name = "eim", version, about = "Fit Gaussian mixtures and mixtures of experts by I-projection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic dataset directory.
    GenData(GenDataArgs),
    /// Fit a model to a dataset directory.
    Fit(FitArgs),
    /// Evaluate a stored model on a dataset directory.
    Eval(EvalArgs),
    /// Run a grid of random-GMM fits from a config file.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TaskName {
    RandomGmm,
    RobotLine,
    Obstacle,
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    #[arg(long, value_enum)]
    pub task: TaskName,
    /// Dimension of the random GMM target.
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    /// Components of the random GMM target.
    #[arg(long, default_value_t = 5)]
    pub target_components: usize,
    /// Training samples, or training contexts for the obstacle task.
    /// Test and validation splits get half as many.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Samples per context (obstacle task).
    #[arg(long, default_value_t = 10)]
    pub samples_per_context: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Eim,
    Em,
    Fgan,
    EimNoKl,
    EimJoint,
    EimJointNoKl,
    EimCond,
    MlCond,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Eim => "eim",
            Method::Em => "em",
            Method::Fgan => "fgan",
            Method::EimNoKl => "eim-no-kl",
            Method::EimJoint => "eim-joint",
            Method::EimJointNoKl => "eim-joint-no-kl",
            Method::EimCond => "eim-cond",
            Method::MlCond => "ml-cond",
        }
    }

    pub fn is_conditional(self) -> bool {
        matches!(self, Method::EimCond | Method::MlCond)
    }
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[arg(long, value_enum)]
    pub method: Method,
    /// Dataset directory written by `gen-data`.
    #[arg(long)]
    pub task: PathBuf,
    #[arg(long)]
    pub components: Option<usize>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the iteration count of the chosen method.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Initial model; derived from the data when absent.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Give the discriminator the task's feature map.
    #[arg(long)]
    pub features: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub task: PathBuf,
    /// Comma-separated metric names; all applicable metrics when absent.
    #[arg(long, value_delimiter = ',')]
    pub metrics: Vec<String>,
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Value of the `method` column.
    #[arg(long, default_value = "model")]
    pub label: String,
    /// Output CSV; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Concurrent jobs; overrides `sweep.jobs`.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub components: usize,
    pub features: bool,
    /// Hidden widths of the gating and expert networks.
    pub moe_hidden: Vec<usize>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: 0,
            components: 5,
            features: false,
            moe_hidden: vec![64, 64],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Samples for the final metrics.
    pub samples: usize,
    /// Trace evaluation period in iterations; 0 evaluates only at the end.
    pub trace_every: usize,
    pub trace_samples: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            samples: 10_000,
            trace_every: 10,
            trace_samples: 2_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub dims: Vec<usize>,
    pub components: Vec<usize>,
    pub seeds: Vec<u64>,
    pub methods: Vec<Method>,
    pub target_components: usize,
    pub train_samples: usize,
    pub jobs: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            dims: vec![2, 6, 10],
            components: vec![5],
            seeds: (0..5).collect(),
            methods: vec![Method::Eim, Method::Fgan],
            target_components: 5,
            train_samples: 10_000,
            jobs: 1,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub eim: EimGmmConfig,
    pub em: EmConfig,
    pub gan: GanConfig,
    pub cond_eim: CondEimConfig,
    pub cond_ml: CondMlConfig,
    pub eval: EvalSection,
    pub sweep: SweepSection,
}

impl RunConfig {
    /// Defaults for a task: the robot task uses a tighter trust region and
    /// a two-layer discriminator of width 100, the obstacle task runs four
    /// experts for 150 iterations.
    pub fn for_task(kind: &TaskKind) -> Self {
        let mut cfg = Self::default();
        match kind {
            TaskKind::RobotLine(_) => {
                cfg.eim.component_epsilon = 0.005;
                cfg.eim.coefficient_epsilon = 0.005;
                cfg.eim.ratio.hidden = vec![100, 100];
                cfg.run.components = 20;
            }
            TaskKind::Obstacle(_) => {
                cfg.run.components = 4;
                cfg.cond_eim.iterations = 150;
            }
            TaskKind::RandomGmm { .. } => {}
        }
        cfg
    }

    /// `base` overlaid with the keys present in `text`.
    pub fn overlay(base: &Self, text: &str) -> Result<Self> {
        let over: toml::Table = toml::from_str(text).map_err(|e| EimError::Config(e.to_string()))?;
        let mut merged = toml::Table::try_from(base).map_err(|e| EimError::Config(e.to_string()))?;
        merge(&mut merged, over);
        merged.try_into().map_err(|e: toml::de::Error| EimError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| EimError::Config(e.to_string()))
    }

    /// Sets every seed in the configuration.
    pub fn set_seed(&mut self, seed: u64) {
        self.run.seed = seed;
        self.eim.seed = seed;
        self.em.seed = seed;
        self.gan.seed = seed;
        self.cond_eim.seed = seed;
        self.cond_ml.seed = seed;
    }

    pub fn set_iterations(&mut self, method: Method, iterations: usize) {
        match method {
            Method::Eim | Method::EimNoKl | Method::EimJoint | Method::EimJointNoKl => self.eim.iterations = iterations,
            Method::Em => self.em.iterations = iterations,
            Method::Fgan => self.gan.iterations = iterations,
            Method::EimCond => self.cond_eim.iterations = iterations,
            Method::MlCond => self.cond_ml.iterations = iterations,
        }
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// One evaluated metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub method: String,
    pub task: String,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
    pub stderr: Option<f64>,
    pub n: usize,
}

pub const METRICS: [&str; 5] = [
    "i_projection",
    "test_log_likelihood",
    "rmse_to_line",
    "success_rate",
    "clearance_violation_rate",
];

/// Metrics that make sense for this model on this task.
pub fn default_metrics(model: &Model, task: &TaskSpec) -> Vec<&'static str> {
    let mut out = Vec::new();
    if task.target.is_some() && matches!(model, Model::Gmm(_)) {
        out.push("i_projection");
    }
    out.push("test_log_likelihood");
    match (&task.kind, model) {
        (TaskKind::RobotLine(_), Model::Gmm(_)) => out.push("rmse_to_line"),
        (TaskKind::Obstacle(_), Model::Moe(_)) => out.extend(["success_rate", "clearance_violation_rate"]),
        _ => {}
    }
    out
}

/// Evaluates `metrics` (see [`METRICS`]) with `n` samples.
pub fn evaluate(
    model: &Model,
    task: &TaskSpec,
    metrics: &[&str],
    n: usize,
    seed: u64,
    label: &str,
) -> Result<Vec<MetricRow>> {
    let row = |metric: &str, value: f64, stderr: Option<f64>, n: usize| MetricRow {
        method: label.to_string(),
        task: task.name().to_string(),
        seed,
        metric: metric.to_string(),
        value,
        stderr,
        n,
    };
    let mut out = Vec::new();
    let mut task_record = None;
    for &m in metrics {
        match m {
            "i_projection" => {
                let (Model::Gmm(g), Some(t)) = (model, &task.target) else {
                    return Err(EimError::UnsupportedMetric(m.into()));
                };
                let r = mc_i_projection(g, t, n, seed)?;
                out.push(row(m, r.value, Some(r.stderr), r.used));
            }
            "test_log_likelihood" => {
                let v = match model {
                    Model::Gmm(g) => test_log_likelihood(g, &task.test)?,
                    Model::Moe(moe) => {
                        let ctx = task
                            .test_contexts
                            .as_ref()
                            .ok_or_else(|| EimError::UnsupportedMetric(m.into()))?;
                        moe.log_density(&task.test, ctx)?.mean()
                    }
                };
                out.push(row(m, v, None, task.test.nrows()));
            }
            "rmse_to_line" | "success_rate" | "clearance_violation_rate" => {
                if task_record.is_none() {
                    task_record = Some(task_metrics(model.as_ref(), task, n, seed).map_err(|e| match e {
                        EimError::UnsupportedMetric(_) => EimError::UnsupportedMetric(m.into()),
                        e => e,
                    })?);
                }
                let r = task_record.as_ref().expect("set above");
                let v = match m {
                    "rmse_to_line" => r.rmse_to_line,
                    "success_rate" => r.success_rate,
                    _ => r.clearance_violation_rate,
                };
                let v = v.ok_or_else(|| EimError::UnsupportedMetric(m.into()))?;
                out.push(row(m, v, None, n));
            }
            other => {
                return Err(EimError::UnsupportedMetric(format!(
                    "{other} (known: {})",
                    METRICS.join(", ")
                )))
            }
        }
    }
    Ok(out)
}

pub fn write_metrics<W: Write>(w: W, rows: &[MetricRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn generate(args: &GenDataArgs) -> Result<TaskSpec> {
    match args.task {
        TaskName::RandomGmm => {
            let counts = args.samples.map_or_else(SplitCounts::default, SplitCounts::from_train);
            gen_random_gmm_task_with(args.dim, args.target_components, args.seed, counts)
        }
        TaskName::RobotLine => {
            let counts = args.samples.map_or_else(SplitCounts::default, SplitCounts::from_train);
            gen_robot_line_task_with(&RobotLineConfig::default(), counts, args.seed)
        }
        TaskName::Obstacle => {
            let mut cfg = ObstacleConfig {
                samples_per_context: args.samples_per_context,
                ..Default::default()
            };
            if let Some(n) = args.samples {
                cfg.contexts = n;
            }
            gen_obstacle_task_with(&cfg, args.seed)
        }
    }
}

/// Result of one fit.
pub struct FitOutput {
    pub init: Model,
    pub model: Model,
    pub trace: Trace,
}

/// Fits `method` to `task` under a resolved configuration.
pub fn fit_task(task: &TaskSpec, method: Method, cfg: &RunConfig, init: Option<Model>) -> Result<FitOutput> {
    if method.is_conditional() != task.is_conditional() {
        return Err(EimError::Config(format!(
            "method {} does not apply to the {} task",
            method.name(),
            task.name()
        )));
    }
    let features = if cfg.run.features { task.feature_map() } else { None };
    if method.is_conditional() {
        let ctx = task.train_contexts.as_ref().expect("conditional task");
        let init = match init {
            Some(Model::Moe(m)) => m,
            Some(Model::Gmm(_)) => return Err(EimError::Config("conditional methods need a mixture-of-experts init".into())),
            None => init_moe(&task.train, ctx, cfg.run.components, &cfg.run.moe_hidden, cfg.run.seed)?,
        };
        let mut monitor = moe_monitor(task, &cfg.eval);
        let (model, trace) = match method {
            Method::EimCond => run_eim_moe(&task.train, ctx, &init, &cfg.cond_eim, features, &mut monitor)?,
            _ => run_ml_moe(&task.train, ctx, &init, &cfg.cond_ml, &mut monitor)?,
        };
        return Ok(FitOutput {
            init: Model::Moe(init),
            model: Model::Moe(model),
            trace,
        });
    }
    let init = match init {
        Some(Model::Gmm(g)) => g,
        Some(Model::Moe(_)) => return Err(EimError::Config("GMM methods need a GMM init".into())),
        None => init_gmm(&task.train, cfg.run.components, cfg.run.seed)?,
    };
    let monitor = Monitor {
        target: task.target.as_ref().map(|t| t as &dyn crate::distributions::Density),
        test_data: Some(&task.test),
        every: cfg.eval.trace_every,
        samples: cfg.eval.trace_samples,
        seed: cfg.run.seed,
    };
    let (model, trace) = match method {
        Method::Eim => {
            let (m, r) = run_eim_gmm(&task.train, &init, &cfg.eim, features, &monitor)?;
            (m, records_to_trace(&r))
        }
        Method::EimNoKl | Method::EimJoint | Method::EimJointNoKl => {
            let variant = match method {
                Method::EimNoKl => Ablation::NoKl,
                Method::EimJoint => Ablation::Joint,
                _ => Ablation::JointNoKl,
            };
            let (m, r) = run_eim_ablation(&task.train, &init, &cfg.eim, variant, features, &monitor)?;
            (m, records_to_trace(&r))
        }
        Method::Em => {
            let (m, t) = run_em_gmm(&task.train, &init, &cfg.em, &monitor)?;
            (m, t.to_trace())
        }
        Method::Fgan => {
            let (m, t) = run_fgan_gmm(&task.train, &init, &cfg.gan, &monitor)?;
            (m, t.to_trace())
        }
        Method::EimCond | Method::MlCond => unreachable!("handled above"),
    };
    Ok(FitOutput {
        init: Model::Gmm(init),
        model: Model::Gmm(model),
        trace,
    })
}

fn moe_monitor<'a>(
    task: &'a TaskSpec,
    eval: &'a EvalSection,
) -> impl FnMut(usize, &MixtureOfExperts, &mut Trace) -> Result<()> + 'a {
    move |it, model, trace| {
        if eval.trace_every == 0 || it % eval.trace_every != 0 {
            return Ok(());
        }
        if let Some(ctx) = &task.test_contexts {
            trace.push(it, "test_log_likelihood", model.log_density(&task.test, ctx)?.mean());
        }
        if matches!(task.kind, TaskKind::Obstacle(_)) {
            let r = task_metrics(ModelRef::Moe(model), task, eval.trace_samples, it as u64)?;
            trace.push(it, "success_rate", r.success_rate.unwrap_or(f64::NAN));
        }
        Ok(())
    }
}

/// Fits and writes `init.json`, `model.json`, `trace.csv`, `metrics.csv`
/// and the resolved `config.toml` under `out`.
pub fn fit_and_write(
    task: &TaskSpec,
    method: Method,
    cfg: &RunConfig,
    init: Option<Model>,
    out: &Path,
) -> Result<Vec<MetricRow>> {
    let fit = fit_task(task, method, cfg, init)?;
    fs::create_dir_all(out)?;
    fs::write(out.join("config.toml"), cfg.to_toml()?)?;
    save_model(&out.join("init.json"), &fit.init)?;
    save_model(&out.join("model.json"), &fit.model)?;
    fit.trace.write_csv(fs::File::create(out.join("trace.csv"))?)?;
    let names = default_metrics(&fit.model, task);
    let rows = evaluate(&fit.model, task, &names, cfg.eval.samples, cfg.run.seed, method.name())?;
    write_metrics(fs::File::create(out.join("metrics.csv"))?, &rows)?;
    Ok(rows)
}

/// Base config for a task overlaid with an optional config file.
pub fn resolve_config(task: &TaskSpec, path: Option<&Path>) -> Result<RunConfig> {
    let base = RunConfig::for_task(&task.kind);
    match path {
        Some(p) => RunConfig::overlay(&base, &fs::read_to_string(p)?),
        None => Ok(base),
    }
}

fn cmd_fit(args: &FitArgs) -> Result<()> {
    let task = load_task(&args.task)?;
    let mut cfg = resolve_config(&task, args.config.as_deref())?;
    if let Some(s) = args.seed {
        cfg.set_seed(s);
    }
    if let Some(k) = args.components {
        cfg.run.components = k;
    }
    if let Some(it) = args.iterations {
        cfg.set_iterations(args.method, it);
    }
    cfg.run.features |= args.features;
    let init = args.init.as_deref().map(load_model).transpose()?;
    let rows = fit_and_write(&task, args.method, &cfg, init, &args.out)?;
    for r in rows {
        println!("{} {}", r.metric, r.value);
    }
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let task = load_task(&args.task)?;
    let model = load_model(&args.model)?;
    let names: Vec<&str> = if args.metrics.is_empty() {
        default_metrics(&model, &task)
    } else {
        args.metrics.iter().map(|s| s.as_str()).collect()
    };
    let rows = evaluate(&model, &task, &names, args.n, args.seed, &args.label)?;
    match &args.out {
        Some(p) => write_metrics(fs::File::create(p)?, &rows),
        None => write_metrics(std::io::stdout().lock(), &rows),
    }
}

/// One row of the sweep summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: String,
    pub dim: usize,
    pub components: usize,
    pub seed: u64,
    pub i_projection: f64,
    pub i_projection_stderr: f64,
    pub test_log_likelihood: f64,
}

/// Runs the `[sweep]` grid of a configuration under `out`: datasets in
/// `out/data`, one directory per fit in `out/runs`, and `out/aggregate.csv`.
pub fn sweep(cfg: &RunConfig, out: &Path, jobs: usize) -> Result<Vec<SweepRow>> {
    let s = &cfg.sweep;
    if s.methods.iter().any(|m| m.is_conditional()) {
        return Err(EimError::Config("sweeps run on random GMM tasks; conditional methods do not apply".into()));
    }
    let mut tasks = Vec::new();
    for &dim in &s.dims {
        for &seed in &s.seeds {
            let t = gen_random_gmm_task_with(dim, s.target_components, seed, SplitCounts::from_train(s.train_samples))?;
            save_task(&out.join("data").join(format!("d{dim}_s{seed}")), &t)?;
            tasks.push(t);
        }
    }
    let mut grid = Vec::new();
    for &method in &s.methods {
        for (di, &dim) in s.dims.iter().enumerate() {
            for &k in &s.components {
                for (si, &seed) in s.seeds.iter().enumerate() {
                    grid.push((method, dim, k, seed, di * s.seeds.len() + si));
                }
            }
        }
    }
    let results: Vec<Mutex<Option<Result<SweepRow>>>> = grid.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let worker = || loop {
        let j = next.fetch_add(1, Ordering::SeqCst);
        if j >= grid.len() {
            break;
        }
        let (method, dim, k, seed, ti) = grid[j];
        let mut run_cfg = cfg.clone();
        run_cfg.set_seed(seed);
        run_cfg.run.components = k;
        let dir = out.join("runs").join(format!("{}_d{dim}_k{k}_s{seed}", method.name()));
        let row = fit_and_write(&tasks[ti], method, &run_cfg, None, &dir).map(|rows| {
            let get = |m: &str| rows.iter().find(|r| r.metric == m);
            let ip = get("i_projection");
            SweepRow {
                method: method.name().to_string(),
                dim,
                components: k,
                seed,
                i_projection: ip.map_or(f64::NAN, |r| r.value),
                i_projection_stderr: ip.and_then(|r| r.stderr).unwrap_or(f64::NAN),
                test_log_likelihood: get("test_log_likelihood").map_or(f64::NAN, |r| r.value),
            }
        });
        *results[j].lock().expect("no poisoned jobs") = Some(row);
    };
    std::thread::scope(|scope| {
        for _ in 0..jobs.max(1) {
            scope.spawn(worker);
        }
    });
    let rows = results
        .into_iter()
        .map(|m| m.into_inner().expect("no poisoned jobs").expect("every job ran"))
        .collect::<Result<Vec<_>>>()?;
    let mut w = csv::Writer::from_path(out.join("aggregate.csv"))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(rows)
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let cfg = RunConfig::overlay(&RunConfig::default(), &fs::read_to_string(&args.config)?)?;
    fs::create_dir_all(&args.out)?;
    fs::write(args.out.join("config.toml"), cfg.to_toml()?)?;
    let rows = sweep(&cfg, &args.out, args.jobs.unwrap_or(cfg.sweep.jobs))?;
    println!("{} runs written to {}", rows.len(), args.out.join("aggregate.csv").display());
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::GenData(a) => {
            let t = generate(a)?;
            save_task(&a.out, &t)?;
            println!("{} task with {} training rows written to {}", t.name(), t.train.nrows(), a.out.display());
            Ok(())
        }
        Command::Fit(a) => cmd_fit(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
    }
}
