//! Trust-region updates of a single Gaussian and of mixture weights.

use eim::distributions::{kl_categorical, Categorical, Gaussian};
use eim::more::{categorical_more_update, gaussian_more_update, QuadraticSurrogate, TrustRegionConfig};
use nalgebra::{DMatrix, DVector};
use std::error::Error;

fn main() -> Result<(), Box<dyn Error>> {
    let old = Gaussian::standard(1);

    // a linear loss small enough that the bound stays inactive
    let phi = QuadraticSurrogate::new(DMatrix::zeros(1, 1), DVector::from_element(1, -0.1), 0.0)?;
    let up = gaussian_more_update(&old, &phi, &TrustRegionConfig::with_epsilon(0.05))?;
    println!(
        "small step: mean {:.4}, eta {:.3e}, kl {:.5}, active {}",
        up.gaussian.mean()[0],
        up.dual.eta,
        up.dual.kl,
        up.dual.constraint_active
    );

    // a steep loss: the step is cut back to the boundary, mean sqrt(2 eps)
    let eps = 0.02;
    let phi = QuadraticSurrogate::new(DMatrix::zeros(1, 1), DVector::from_element(1, -50.0), 0.0)?;
    let up = gaussian_more_update(&old, &phi, &TrustRegionConfig::with_epsilon(eps))?;
    println!(
        "steep step: mean {:.6} (sqrt(2 eps) = {:.6}), kl {:.6}",
        up.gaussian.mean()[0],
        (2.0 * eps).sqrt(),
        up.dual.kl
    );

    let weights = Categorical::uniform(3);
    let losses = [1.0, 0.0, -2.0];
    for eps in [0.01, 0.1, 1.0] {
        let (new, dual) = categorical_more_update(&weights, &losses, &TrustRegionConfig::with_epsilon(eps))?;
        println!(
            "eps {eps:<5} weights {:?} kl {:.4} eta {:.3e}",
            new.probs().iter().map(|p| format!("{p:.3}")).collect::<Vec<_>>(),
            kl_categorical(&new, &weights)?,
            dual.eta
        );
    }
    Ok(())
}
