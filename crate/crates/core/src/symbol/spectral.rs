//! x-Fourier machinery on the equispaced circle grid.

use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::core_model::grid::x_points;
use crate::jet::{CMatrix, MatJet, C64};

/// Evaluation context shared by a whole symbol tree: the x-grid, its FFT plans,
/// and the requested jet length.
#[derive(Clone)]
pub struct FieldCtx {
    nx: usize,
    len: usize,
    xs: Arc<[f64]>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

impl FieldCtx {
    pub fn new(nx: usize, len: usize) -> Self {
        let mut planner = FftPlanner::new();
        FieldCtx {
            nx,
            len: len.max(1),
            xs: x_points(nx).into(),
            fft: planner.plan_fft_forward(nx),
            ifft: planner.plan_fft_inverse(nx),
        }
    }

    pub fn with_len(&self, len: usize) -> Self {
        FieldCtx { len: len.max(1), ..self.clone() }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    /// Signed frequency of FFT bin `j`; the Nyquist bin maps to `None`.
    pub fn bin_frequency(&self, j: usize) -> Option<i64> {
        let n = self.nx;
        if n % 2 == 0 && j == n / 2 {
            None
        } else if j <= n / 2 {
            Some(j as i64)
        } else {
            Some(j as i64 - n as i64)
        }
    }

    /// Normalized Fourier coefficients `c_m = (1/n) Σ_j v_j e^{-i m x_j}` indexed by bin.
    pub fn forward(&self, values: &mut [C64]) {
        self.fft.process(values);
        let s = 1.0 / self.nx as f64;
        values.iter_mut().for_each(|v| *v *= s);
    }

    pub fn inverse(&self, modes: &mut [C64]) {
        self.ifft.process(modes);
    }

    /// Matrix-valued Fourier coefficients of grid samples, indexed by bin.
    pub fn matrix_modes(&self, values: &[CMatrix]) -> Vec<CMatrix> {
        let (r, c) = values[0].shape();
        let mut out = vec![CMatrix::zeros(r, c); self.nx];
        let mut buf = vec![C64::new(0.0, 0.0); self.nx];
        for i in 0..r {
            for k in 0..c {
                for (b, v) in buf.iter_mut().zip(values) {
                    *b = v[(i, k)];
                }
                self.forward(&mut buf);
                for (o, b) in out.iter_mut().zip(&buf) {
                    o[(i, k)] = *b;
                }
            }
        }
        out
    }

    /// `D_x^α = (−i ∂_x)^α` applied to every jet coefficient of a grid field.
    pub fn dx_power(&self, field: &[MatJet], alpha: usize) -> Vec<MatJet> {
        if alpha == 0 {
            return field.to_vec();
        }
        let (r, c) = field[0].shape();
        let len = field[0].len();
        let mut out: Vec<MatJet> = vec![MatJet::zeros(r, c, len); self.nx];
        let mut buf = vec![C64::new(0.0, 0.0); self.nx];
        for k in 0..len {
            for i in 0..r {
                for l in 0..c {
                    for (b, f) in buf.iter_mut().zip(field) {
                        *b = f.coeffs()[k][(i, l)];
                    }
                    self.forward(&mut buf);
                    for (j, b) in buf.iter_mut().enumerate() {
                        *b = match self.bin_frequency(j) {
                            Some(m) => *b * (m as f64).powi(alpha as i32),
                            None => C64::new(0.0, 0.0),
                        };
                    }
                    self.inverse(&mut buf);
                    for (o, b) in out.iter_mut().zip(&buf) {
                        o.coeffs_mut()[k][(i, l)] = *b;
                    }
                }
            }
        }
        out
    }

    /// Trigonometric interpolation of grid samples at an arbitrary `x`.
    pub fn interpolate(&self, values: &[CMatrix], x: f64) -> CMatrix {
        let modes = self.matrix_modes(values);
        let (r, c) = values[0].shape();
        let mut acc = CMatrix::zeros(r, c);
        for (j, m) in modes.iter().enumerate() {
            match self.bin_frequency(j) {
                Some(f) => acc += m * C64::from_polar(1.0, f as f64 * x),
                None => acc += m * C64::new((self.nx as f64 / 2.0 * x).cos(), 0.0),
            }
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jet::Jet;

    #[test]
    fn dx_of_exponential_is_multiplication_by_frequency() {
        let ctx = FieldCtx::new(16, 2);
        let field: Vec<MatJet> = ctx
            .xs()
            .iter()
            .map(|&x| MatJet::scalar(&Jet::constant(C64::from_polar(1.0, 3.0 * x), 2)))
            .collect();
        let d2 = ctx.dx_power(&field, 2);
        for (f, d) in field.iter().zip(&d2) {
            assert!((d.value()[(0, 0)] - f.value()[(0, 0)] * 9.0).norm() < 1e-12);
        }
    }

    #[test]
    fn interpolation_reproduces_trig_polynomial() {
        let ctx = FieldCtx::new(12, 1);
        let f = |x: f64| C64::new(x.cos(), 0.0) + C64::from_polar(0.3, -2.0 * x);
        let vals: Vec<CMatrix> = ctx.xs().iter().map(|&x| CMatrix::from_element(1, 1, f(x))).collect();
        let x = 0.4321;
        assert!((ctx.interpolate(&vals, x)[(0, 0)] - f(x)).norm() < 1e-13);
    }
}
