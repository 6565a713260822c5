//! Parameter-dependent pseudodifferential and Toeplitz calculus on the circle,
//! with exact truncated-Fourier oracles.

pub mod core_model;
pub mod ellipticity;
pub mod error;
pub mod fit;
pub mod harness;
pub mod jet;
pub mod quantize;
pub mod symbol;
pub mod toeplitz;

pub use error::{PsidoError, Result};
