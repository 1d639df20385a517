//! EIM on a random 2-D target mixture, printing the I-projection as it goes.

use eim::eim_gmm::{init_gmm, run_eim_gmm, EimGmmConfig, Monitor};
use eim::eval::mc_i_projection;
use eim::tasks::gen_random_gmm_task;
use std::error::Error;

fn main() -> Result<(), Box<dyn Error>> {
    let task = gen_random_gmm_task(2, 5, 0)?;
    let target = task.target.as_ref().expect("random tasks carry their target");
    let init = init_gmm(&task.train, 5, 0)?;
    println!("init I-projection {:.4}", mc_i_projection(&init, target, 10_000, 1)?.value);

    let cfg = EimGmmConfig {
        iterations: 100,
        ..Default::default()
    };
    let monitor = Monitor {
        target: Some(target),
        test_data: Some(&task.test),
        every: 20,
        samples: 5_000,
        seed: 1,
    };
    let (model, records) = run_eim_gmm(&task.train, &init, &cfg, None, &monitor)?;
    for r in &records {
        if let Some(ip) = &r.i_projection {
            println!(
                "iter {:>3}  I-projection {:.4} ± {:.4}  test ll {:.4}",
                r.iteration,
                ip.value,
                ip.stderr,
                r.test_log_likelihood.unwrap_or(f64::NAN)
            );
        }
    }
    let final_ip = mc_i_projection(&model, target, 10_000, 2)?;
    println!("final I-projection {:.4}", final_ip.value);
    println!("weights {:?}", model.weights().probs().as_slice());
    Ok(())
}
