//! Bayesian optimization with exact, derivative-augmented and sparse
//! Gaussian-process surrogates.

pub mod acquisition;
pub mod bench;
pub mod data;
pub mod direct;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod fic;
pub mod gmd;
pub mod gp;
pub mod gpd;
pub mod kernel;
pub mod linalg;
pub mod meta;
pub mod quasi;
pub mod spectrum;
pub mod surrogate;

pub use data::{Dataset, GradientObs};
pub use error::{Error, Result};
pub use gp::{ExactGp, Prediction, PosteriorKind, Preset};
pub use kernel::{KernelFamily, KernelSpec};
