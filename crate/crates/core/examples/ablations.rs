//! The closed-form EIM updates next to the variants without the extra KL
//! term and with plain gradient steps on all parameters.

use eim::eim_gmm::{init_gmm, run_eim_ablation, run_eim_gmm, Ablation, EimGmmConfig, Monitor};
use eim::eval::mc_i_projection;
use eim::tasks::gen_random_gmm_task;
use std::error::Error;

fn main() -> Result<(), Box<dyn Error>> {
    let task = gen_random_gmm_task(2, 5, 1)?;
    let target = task.target.as_ref().expect("target");
    let init = init_gmm(&task.train, 5, 1)?;
    let cfg = EimGmmConfig {
        iterations: 100,
        seed: 1,
        ..Default::default()
    };
    let m = Monitor::default();

    let (full, _) = run_eim_gmm(&task.train, &init, &cfg, None, &m)?;
    println!("{:<14} {:.4}", "eim", mc_i_projection(&full, target, 10_000, 0)?.value);
    for (name, v) in [
        ("no-kl", Ablation::NoKl),
        ("joint", Ablation::Joint),
        ("joint-no-kl", Ablation::JointNoKl),
    ] {
        let (model, _) = run_eim_ablation(&task.train, &init, &cfg, v, None, &m)?;
        println!("{name:<14} {:.4}", mc_i_projection(&model, target, 10_000, 0)?.value);
    }
    Ok(())
}
