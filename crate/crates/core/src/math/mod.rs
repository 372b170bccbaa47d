//! Dense matrices, seeded random streams and the statistics the drop
//! strategies are built from.

mod matrix;
mod rng;
mod stats;

pub use matrix::{add, hadamard, matmul, sub, Matrix};
pub use rng::{derive_seed, mix64, Rng, Stream};
pub use stats::{bernoulli_mask, mean_and_std, sigmoid, zscore, ZScoreDenominator, MIN_SPREAD};
