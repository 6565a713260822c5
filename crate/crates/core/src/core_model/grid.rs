use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{PsidoError, Result};

/// Spatial and frequency discretization of the circle.
///
/// Frequencies run over `-K..=K`; symbol values are `n1 × n0` matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CircleGrid {
    n_x: usize,
    k_max: usize,
    n0: usize,
    n1: usize,
}

impl CircleGrid {
    pub fn new(n_x: usize, k_max: usize, n0: usize, n1: usize) -> Result<Self> {
        if k_max < 1 {
            return Err(PsidoError::InvalidGrid("K must be at least 1".into()));
        }
        if n_x < 2 * k_max + 2 {
            return Err(PsidoError::InvalidGrid(format!("n_x = {n_x} < 2K+2 = {}", 2 * k_max + 2)));
        }
        if n0 == 0 || n1 == 0 || n0 > 4 || n1 > 4 {
            return Err(PsidoError::InvalidGrid("fiber dimensions must lie in 1..=4".into()));
        }
        Ok(CircleGrid { n_x, k_max, n0, n1 })
    }

    /// Minimal alias-free grid for cutoff `k_max` with square `n × n` fibers.
    pub fn square(k_max: usize, n: usize) -> Result<Self> {
        CircleGrid::new(2 * k_max + 2, k_max, n, n)
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn n0(&self) -> usize {
        self.n0
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n_freq(&self) -> usize {
        2 * self.k_max + 1
    }

    pub fn frequencies(&self) -> impl Iterator<Item = i64> {
        let k = self.k_max as i64;
        -k..=k
    }

    /// Position of frequency `k` in the block ordering.
    pub fn freq_index(&self, k: i64) -> usize {
        (k + self.k_max as i64) as usize
    }

    pub fn x_points(&self) -> Vec<f64> {
        x_points(self.n_x)
    }

    /// Same grid with doubled cutoff.
    pub fn doubled(&self) -> Self {
        CircleGrid { n_x: 2 * self.n_x, k_max: 2 * self.k_max, ..*self }
    }

    pub fn with_k(&self, k_max: usize) -> Result<Self> {
        CircleGrid::new((2 * k_max + 2).max(self.n_x), k_max, self.n0, self.n1)
    }

    pub fn with_fibers(&self, n0: usize, n1: usize) -> Result<Self> {
        CircleGrid::new(self.n_x, self.k_max, n0, n1)
    }
}

pub fn x_points(n_x: usize) -> Vec<f64> {
    (0..n_x).map(|j| TAU * j as f64 / n_x as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enforces_alias_free_sampling() {
        assert!(CircleGrid::new(10, 4, 1, 1).is_ok());
        assert!(CircleGrid::new(9, 4, 1, 1).is_err());
        assert!(CircleGrid::new(10, 0, 1, 1).is_err());
        assert!(CircleGrid::new(10, 4, 5, 1).is_err());
    }

    #[test]
    fn frequency_indexing() {
        let g = CircleGrid::square(3, 1).unwrap();
        assert_eq!(g.frequencies().collect::<Vec<_>>(), vec![-3, -2, -1, 0, 1, 2, 3]);
        assert_eq!(g.freq_index(-3), 0);
        assert_eq!(g.freq_index(3), 6);
        assert_eq!(g.doubled().k_max(), 6);
    }
}
