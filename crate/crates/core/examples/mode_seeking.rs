//! One Gaussian fitted to a well-separated bimodal target. EM averages the
//! two modes, EIM commits to one of them.

use eim::distributions::{Categorical, Gaussian, Gmm};
use eim::eim_gmm::{init_gmm, run_eim_gmm, run_em_gmm, EimGmmConfig, EmConfig, Monitor};
use eim::rng::rng_from_seed;
use nalgebra::DVector;
use std::error::Error;

fn main() -> Result<(), Box<dyn Error>> {
    let target = Gmm::new(
        vec![
            Gaussian::isotropic(DVector::from_element(1, -5.0), 1.0)?,
            Gaussian::isotropic(DVector::from_element(1, 5.0), 1.0)?,
        ],
        Categorical::uniform(2),
    )?;
    for seed in 0..3 {
        let (data, _) = target.sample(10_000, &mut rng_from_seed(seed));
        let init = init_gmm(&data, 1, seed)?;

        let em_cfg = EmConfig { seed, ..Default::default() };
        let (em, _) = run_em_gmm(&data, &init, &em_cfg, &Monitor::default())?;

        let mut cfg = EimGmmConfig {
            iterations: 50,
            seed,
            ..Default::default()
        };
        // weight decay smooths away the gap between the modes
        cfg.ratio.l2 = 0.0;
        let (eim, _) = run_eim_gmm(&data, &init, &cfg, None, &Monitor::default())?;

        let show = |g: &Gmm| {
            let c = &g.components()[0];
            format!("mean {:+.3} sd {:.3}", c.mean()[0], c.covariance()[(0, 0)].sqrt())
        };
        println!("seed {seed}: EM {} | EIM {}", show(&em), show(&eim));
    }
    Ok(())
}
