//! EIM against an f-GAN trained on the same data from the same init.

use eim::eim_gmm::{init_gmm, run_eim_gmm, run_fgan_gmm, EimGmmConfig, GanConfig, Monitor};
use eim::eval::mc_i_projection;
use eim::tasks::gen_random_gmm_task;
use std::error::Error;

fn main() -> Result<(), Box<dyn Error>> {
    let dim = std::env::args().nth(1).map_or(Ok(2), |s| s.parse())?;
    let task = gen_random_gmm_task(dim, 5, 3)?;
    let target = task.target.as_ref().expect("target");
    let init = init_gmm(&task.train, 5, 3)?;
    let monitor = Monitor::default();

    let (eim, _) = run_eim_gmm(
        &task.train,
        &init,
        &EimGmmConfig {
            iterations: 100,
            ..Default::default()
        },
        None,
        &monitor,
    )?;
    let (gan, trace) = run_fgan_gmm(&task.train, &init, &GanConfig::default(), &monitor)?;

    println!("dim {dim}");
    println!("init  {:.4}", mc_i_projection(&init, target, 10_000, 0)?.value);
    println!("EIM   {:.4}", mc_i_projection(&eim, target, 10_000, 0)?.value);
    println!(
        "f-GAN {:.4}{}",
        mc_i_projection(&gan, target, 10_000, 0)?.value,
        if trace.diverged { " (diverged)" } else { "" }
    );
    Ok(())
}
