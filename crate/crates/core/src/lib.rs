pub mod cli;
pub mod denoiser;
pub mod diffusion;
pub mod error;
pub mod evaluation;
pub mod losses;
pub mod masking;
pub mod motion;
pub mod nn;
pub mod rng;
pub mod trainer;

pub use error::{DecodeError, Error, Result};
