//! HTTP service and command-line front end for sparsebo campaigns and
//! experiments.

pub mod api;
pub mod cli;
pub mod error;
pub mod slice;
pub mod store;

pub use error::{ApiError, ErrorCode};
