//! Planar 10-link arm whose end effector should lie on a vertical line.
//! EM spreads mass over infeasible postures between the data modes; EIM
//! keeps its samples close to the line, more so when the discriminator
//! also sees the end-effector position.
//!
//! Usage: robot_line [samples] [iterations]

use eim::cli::RunConfig;
use eim::eim_gmm::{init_gmm, run_eim_gmm, run_em_gmm, Monitor};
use eim::eval::{task_metrics, ModelRef};
use eim::tasks::{gen_robot_line_task, TaskSpec};
use std::error::Error;

fn rmse(model: &eim::distributions::Gmm, task: &TaskSpec) -> Result<f64, Box<dyn Error>> {
    let m = task_metrics(ModelRef::Gmm(model), task, 10_000, 0)?;
    Ok(m.rmse_to_line.expect("robot task"))
}

fn main() -> Result<(), Box<dyn Error>> {
    let mut args = std::env::args().skip(1);
    let n = args.next().map_or(Ok(2_000), |s| s.parse())?;
    let iterations = args.next().map_or(Ok(60), |s| s.parse())?;

    let task = gen_robot_line_task(n, 0)?;
    let cfg = RunConfig::for_task(&task.kind);
    let init = init_gmm(&task.train, cfg.run.components, 0)?;
    let data_rmse = eim::eval::robot_line_rmse(&Default::default(), &task.test)?;
    println!("data      rmse {data_rmse:.4}");
    println!("init      rmse {:.4}", rmse(&init, &task)?);

    let (em, _) = run_em_gmm(&task.train, &init, &cfg.em, &Monitor::default())?;
    println!("EM        rmse {:.4}", rmse(&em, &task)?);

    let mut eim_cfg = cfg.eim.clone();
    eim_cfg.iterations = iterations;
    let (plain, _) = run_eim_gmm(&task.train, &init, &eim_cfg, None, &Monitor::default())?;
    println!("EIM       rmse {:.4}", rmse(&plain, &task)?);
    let (feat, _) = run_eim_gmm(&task.train, &init, &eim_cfg, task.feature_map(), &Monitor::default())?;
    println!("EIM+feat  rmse {:.4}", rmse(&feat, &task)?);
    Ok(())
}
