//! Learns log(q/p) for p = N(0,1), q = N(1,1) and compares it with the
//! analytic ratio x - 0.5.

use eim::distributions::Gaussian;
use eim::ratio_estimator::{train_ratio, TrainConfig};
use eim::rng::rng_from_seed;
use nalgebra::{DMatrix, DVector};
use std::error::Error;

fn main() -> Result<(), Box<dyn Error>> {
    let mut rng = rng_from_seed(7);
    let p = Gaussian::isotropic(DVector::from_element(1, 0.0), 1.0)?.sample(10_000, &mut rng);
    let q = Gaussian::isotropic(DVector::from_element(1, 1.0), 1.0)?.sample(10_000, &mut rng);

    let (est, report) = train_ratio(&p, &q, &TrainConfig::default(), None, 7)?;
    println!(
        "trained {} epochs, best validation BCE {:.4}",
        report.epochs.len(),
        report.best_validation_bce
    );

    let grid = DMatrix::from_fn(11, 1, |i, _| -2.0 + 0.5 * i as f64);
    let learned = est.log_ratio_batch(&grid, None)?;
    let mut sq = 0.0;
    println!("{:>6} {:>9} {:>9}", "x", "learned", "exact");
    for (i, x) in grid.column(0).iter().enumerate() {
        let exact = x - 0.5;
        sq += (learned[i] - exact).powi(2);
        println!("{x:>6.2} {:>9.4} {exact:>9.4}", learned[i]);
    }
    println!("rmse {:.4}", (sq / grid.nrows() as f64).sqrt());
    Ok(())
}
