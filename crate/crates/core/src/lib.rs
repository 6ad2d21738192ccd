//! Interpolating discrete diffusion on small categorical sequences.
//!
//! The forward process moves each token from its clean value toward a
//! prior along `gamma(t) = 1 - t`. The reverse process mixes three moves
//! (stay, resample from the prior, jump to the predicted clean token), with
//! `lambda` trading off between absorbing-style and uniform-style dynamics.
//!
//! No `std`; only `alloc`.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod data;
pub mod denoiser;
pub mod error;
pub mod kernel;
pub mod objective;
pub mod oracle;
pub mod predictor;
pub mod rng;
pub mod sampler;
pub mod schedule;

pub use error::{Error, Result};
pub use kernel::{PosteriorWeights, Simplex};
pub use predictor::Predictor;
pub use rng::Rng;
pub use schedule::{GammaSchedule, LambdaSchedule, StepGrid};
