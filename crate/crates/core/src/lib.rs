mod discriminator;
pub mod cli;
pub mod distributions;
pub mod eim_conditional;
pub mod eim_gmm;
pub mod error;
pub mod eval;
pub mod io;
pub mod more;
pub mod nn;
pub mod quadrature;
pub mod ratio_estimator;
pub mod reparam;
pub mod rng;
pub mod tasks;
pub mod trace;

pub use error::{EimError, Result};
