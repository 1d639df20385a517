//! Via-point trajectories around three obstacles: a mixture of experts
//! fitted by conditional EIM and by maximum likelihood, scored by the
//! fraction of sampled trajectories that clear every obstacle.
//!
//! Usage: obstacle_moe [contexts] [iterations] [seed]

use eim::cli::RunConfig;
use eim::eim_conditional::{init_moe, run_eim_moe, run_ml_moe, MixtureOfExperts};
use eim::eval::{task_metrics, ModelRef};
use eim::tasks::{gen_obstacle_task, TaskKind, TaskSpec};
use eim::trace::Trace;
use std::error::Error;

fn success(model: &MixtureOfExperts, task: &TaskSpec) -> eim::Result<f64> {
    Ok(task_metrics(ModelRef::Moe(model), task, 2_000, 0)?.success_rate.expect("obstacle task"))
}

fn main() -> Result<(), Box<dyn Error>> {
    let mut args = std::env::args().skip(1);
    let contexts = args.next().map_or(Ok(200), |s| s.parse())?;
    let iterations = args.next().map_or(Ok(30), |s| s.parse())?;
    let seed = args.next().map_or(Ok(0), |s| s.parse())?;

    let task = gen_obstacle_task(contexts, 10, seed)?;
    let ctx = task.train_contexts.as_ref().expect("contexts");
    let TaskKind::Obstacle(geometry) = &task.kind else { unreachable!() };
    let data_rate = eim::eval::obstacle_rates(geometry, &task.test, task.test_contexts.as_ref().expect("contexts"))?.0;
    println!("data success {data_rate:.3}");

    let cfg = RunConfig::for_task(&task.kind);
    let init = init_moe(&task.train, ctx, cfg.run.components, &cfg.run.moe_hidden, seed)?;
    println!("init success {:.3}", success(&init, &task)?);

    let mut report = |it: usize, m: &MixtureOfExperts, _: &mut Trace| {
        if it > 0 && it % 10 == 0 {
            println!("  iter {it:>3} success {:.3}", success(m, &task)?);
        }
        Ok(())
    };

    let mut eim_cfg = cfg.cond_eim.clone();
    eim_cfg.iterations = iterations;
    eim_cfg.seed = seed;
    println!("conditional EIM");
    let (eim, _) = run_eim_moe(&task.train, ctx, &init, &eim_cfg, task.feature_map(), &mut report)?;

    println!("maximum likelihood");
    let ml_cfg = eim::eim_conditional::CondMlConfig { seed, ..cfg.cond_ml.clone() };
    let (ml, _) = run_ml_moe(&task.train, ctx, &init, &ml_cfg, &mut |_, _, _| Ok(()))?;

    println!("EIM success {:.3}, ML success {:.3}", success(&eim, &task)?, success(&ml, &task)?);
    Ok(())
}
