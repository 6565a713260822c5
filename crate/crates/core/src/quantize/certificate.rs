//! Heuristic `L²` invertibility certificate: smallest singular value stable
//! under doubling of the cutoff.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::jet::CMatrix;

pub const DOUBLING_REL_TOL: f64 = 0.1;
pub const DOUBLING_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sigma3Certificate {
    pub k_max: usize,
    pub sigma_k: f64,
    pub sigma_2k: f64,
    pub relative_change: f64,
    pub pass: bool,
}

pub fn smallest_singular_value(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return f64::INFINITY;
    }
    m.clone().singular_values().min()
}

/// `build(K)` returns the matrix to certify at cutoff `K`.
pub fn doubling_certificate(k_max: usize, build: impl Fn(usize) -> Result<CMatrix>) -> Result<Sigma3Certificate> {
    let sigma_k = smallest_singular_value(&build(k_max)?);
    let sigma_2k = smallest_singular_value(&build(2 * k_max)?);
    let relative_change = (sigma_k - sigma_2k).abs() / sigma_k.max(sigma_2k).max(f64::MIN_POSITIVE);
    let pass = relative_change < DOUBLING_REL_TOL && sigma_k.min(sigma_2k) >= DOUBLING_FLOOR;
    Ok(Sigma3Certificate { k_max, sigma_k, sigma_2k, relative_change, pass })
}
