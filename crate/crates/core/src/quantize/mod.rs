//! Exact quantization on the truncated Fourier space `|k| ≤ K` of the circle.
//!
//! Block `(k', k)` of `Op(a)(λ)` is the `(k' − k)`-th x-Fourier coefficient of
//! `a(·, k, λ)`. Matrix products, adjoints and inverses of these blocks are the
//! ground truth every symbol-level statement is checked against.

mod certificate;
mod export;
mod smoothing;

pub use certificate::{doubling_certificate, smallest_singular_value, Sigma3Certificate, DOUBLING_FLOOR, DOUBLING_REL_TOL};
pub use export::{decode_operator, encode_operator, MatrixHeader};
pub use smoothing::{encode_smoothing, DecayCertificate, LambdaFamily, SmoothingKernel};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::core_model::grid::CircleGrid;
use crate::core_model::strip::Lambda;
use crate::error::{PsidoError, Result};
use crate::jet::{CMatrix, C64};
use crate::symbol::expr::{SymbolExpr, SymbolKind, XField};
use crate::symbol::spectral::FieldCtx;

/// Relative singular-value floor below which inversion is refused.
pub const INVERT_TOL: f64 = 1e-12;

/// `Op(a)(λ)` restricted to frequencies `|k| ≤ K`.
#[derive(Debug, Clone)]
pub struct TruncatedOperator {
    pub matrix: CMatrix,
    pub lambda: Lambda,
    pub k_max: usize,
    /// `(N1, N0)` fiber dimensions.
    pub fibers: (usize, usize),
    pub sobolev_s: f64,
}

impl TruncatedOperator {
    pub fn new(matrix: CMatrix, lambda: Lambda, k_max: usize, fibers: (usize, usize)) -> Result<Self> {
        let n = 2 * k_max + 1;
        if matrix.shape() != (n * fibers.0, n * fibers.1) {
            return Err(PsidoError::ShapeMismatch(format!(
                "matrix {:?} does not fit K={k_max} with fibers {:?}",
                matrix.shape(),
                fibers
            )));
        }
        Ok(TruncatedOperator { matrix, lambda, k_max, fibers, sobolev_s: 0.0 })
    }

    pub fn identity(n: usize, lambda: Lambda, k_max: usize) -> Self {
        let d = (2 * k_max + 1) * n;
        TruncatedOperator { matrix: CMatrix::identity(d, d), lambda, k_max, fibers: (n, n), sobolev_s: 0.0 }
    }

    pub fn n_freq(&self) -> usize {
        2 * self.k_max + 1
    }

    /// Row/column index of `(frequency, fiber)`.
    pub fn index(&self, k: i64, fiber: usize, n: usize) -> usize {
        (k + self.k_max as i64) as usize * n + fiber
    }

    /// Block `(k', k)`.
    pub fn block(&self, k_row: i64, k_col: i64) -> CMatrix {
        let (n1, n0) = self.fibers;
        let r = self.index(k_row, 0, n1);
        let c = self.index(k_col, 0, n0);
        self.matrix.view((r, c), (n1, n0)).into_owned()
    }

    /// Rows and columns with `|k| ≤ band`.
    pub fn band(&self, band: usize) -> CMatrix {
        let band = band.min(self.k_max);
        let (n1, n0) = self.fibers;
        let r = self.index(-(band as i64), 0, n1);
        let c = self.index(-(band as i64), 0, n0);
        self.matrix.view((r, c), ((2 * band + 1) * n1, (2 * band + 1) * n0)).into_owned()
    }

    /// Same operator on a different cutoff: truncated or zero-padded.
    pub fn resized(&self, k_max: usize) -> Self {
        let (n1, n0) = self.fibers;
        let n = 2 * k_max + 1;
        let mut m = CMatrix::zeros(n * n1, n * n0);
        let common = k_max.min(self.k_max) as i64;
        for kr in -common..=common {
            for kc in -common..=common {
                let b = self.block(kr, kc);
                let r = (kr + k_max as i64) as usize * n1;
                let c = (kc + k_max as i64) as usize * n0;
                m.view_mut((r, c), (n1, n0)).copy_from(&b);
            }
        }
        TruncatedOperator { matrix: m, k_max, ..self.clone() }
    }

    pub fn adjoint(&self) -> Self {
        TruncatedOperator {
            matrix: self.matrix.adjoint(),
            fibers: (self.fibers.1, self.fibers.0),
            ..self.clone()
        }
    }

    pub fn scale(&self, c: C64) -> Self {
        TruncatedOperator { matrix: &self.matrix * c, ..self.clone() }
    }

    pub fn add(&self, other: &TruncatedOperator) -> Result<Self> {
        check_compatible(self, other, self.fibers == other.fibers)?;
        Ok(TruncatedOperator { matrix: &self.matrix + &other.matrix, ..self.clone() })
    }

    pub fn sub(&self, other: &TruncatedOperator) -> Result<Self> {
        check_compatible(self, other, self.fibers == other.fibers)?;
        Ok(TruncatedOperator { matrix: &self.matrix - &other.matrix, ..self.clone() })
    }

    /// Operator norm `L² → L²`.
    pub fn norm(&self) -> f64 {
        spectral_norm(&self.matrix)
    }
}

fn check_compatible(a: &TruncatedOperator, b: &TruncatedOperator, shapes_ok: bool) -> Result<()> {
    if !shapes_ok || a.k_max != b.k_max {
        return Err(PsidoError::ShapeMismatch(format!(
            "operators with K={} fibers {:?} and K={} fibers {:?}",
            a.k_max, a.fibers, b.k_max, b.fibers
        )));
    }
    let same = (a.lambda.tau - b.lambda.tau).abs() <= 1e-12 * a.lambda.tau.abs().max(1.0)
        && (a.lambda.theta - b.lambda.theta).abs() <= 1e-12;
    if !same {
        return Err(PsidoError::LambdaMismatch(
            (a.lambda.tau, a.lambda.theta),
            (b.lambda.tau, b.lambda.theta),
        ));
    }
    Ok(())
}

pub fn spectral_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().max()
}

/// Spatial samples used for cutoff `K`.
pub fn default_nx(k_max: usize) -> usize {
    (2 * k_max + 2).max(64)
}

/// `Op(a)(λ)` on `|k| ≤ K`.
pub fn quantize(a: &SymbolExpr, lambda: Lambda, k_max: usize) -> Result<TruncatedOperator> {
    quantize_with(a, lambda, k_max, default_nx(k_max))
}

pub fn quantize_on(a: &SymbolExpr, lambda: Lambda, grid: &CircleGrid) -> Result<TruncatedOperator> {
    quantize_with(a, lambda, grid.k_max(), grid.n_x())
}

pub fn quantize_with(a: &SymbolExpr, lambda: Lambda, k_max: usize, nx: usize) -> Result<TruncatedOperator> {
    if contains_smoothing(a) {
        return quantize_structural(a, lambda, k_max, nx);
    }
    let (n1, n0) = a.shape();
    let nf = 2 * k_max + 1;
    let ctx = FieldCtx::new(nx, 1);
    let kk = k_max as i64;
    let columns: Vec<(i64, XField)> = (-kk..=kk)
        .into_par_iter()
        .map(|k| a.field(k as f64, lambda.tau, lambda.theta, &ctx).map(|f| (k, f)))
        .collect::<Result<_>>()?;
    let mut m = CMatrix::zeros(nf * n1, nf * n0);
    for (k, field) in columns {
        let c = (k + kk) as usize * n0;
        match field {
            XField::Const(v) => {
                let r = (k + kk) as usize * n1;
                m.view_mut((r, c), (n1, n0)).copy_from(v.value());
            }
            XField::Grid(_) => {
                let modes = ctx.matrix_modes(&field.values(nx));
                for (j, mode) in modes.iter().enumerate() {
                    let Some(f) = ctx.bin_frequency(j) else { continue };
                    let row = k + f;
                    if row.abs() > kk {
                        continue;
                    }
                    let r = (row + kk) as usize * n1;
                    m.view_mut((r, c), (n1, n0)).copy_from(mode);
                }
            }
        }
    }
    Ok(TruncatedOperator { matrix: m, lambda, k_max, fibers: (n1, n0), sobolev_s: 0.0 })
}

pub fn contains_smoothing(a: &SymbolExpr) -> bool {
    match a.kind() {
        SymbolKind::SmoothingKernel(_) => true,
        SymbolKind::Sum(t) => t.iter().any(|(_, s)| contains_smoothing(s)),
        SymbolKind::LeibnizProduct { left, right, .. } => contains_smoothing(left) || contains_smoothing(right),
        SymbolKind::Adjoint { inner, .. } | SymbolKind::ExcisedInverse { inner, .. } => contains_smoothing(inner),
        _ => false,
    }
}

/// Trees with matrix-level smoothing terms are quantized by operator algebra:
/// products become matrix products, which is exact because smoothing kernels
/// map into and out of `|k| ≤ K`.
fn quantize_structural(a: &SymbolExpr, lambda: Lambda, k_max: usize, nx: usize) -> Result<TruncatedOperator> {
    if !contains_smoothing(a) {
        return quantize_with(a, lambda, k_max, nx);
    }
    match a.kind() {
        SymbolKind::SmoothingKernel(k) => k.operator(lambda, k_max),
        SymbolKind::Sum(terms) => {
            let (n1, n0) = a.shape();
            let nf = 2 * k_max + 1;
            let mut m = CMatrix::zeros(nf * n1, nf * n0);
            for (c, t) in terms {
                m += quantize_structural(t, lambda, k_max, nx)?.matrix * *c;
            }
            Ok(TruncatedOperator { matrix: m, lambda, k_max, fibers: (n1, n0), sobolev_s: 0.0 })
        }
        SymbolKind::LeibnizProduct { left, right, .. } => {
            let l = quantize_structural(left, lambda, k_max, nx)?;
            let r = quantize_structural(right, lambda, k_max, nx)?;
            oracle_compose(&l, &r)
        }
        SymbolKind::Adjoint { inner, .. } => Ok(quantize_structural(inner, lambda, k_max, nx)?.adjoint()),
        _ => Err(PsidoError::NonEvaluable {
            x: f64::NAN,
            xi: f64::NAN,
            tau: lambda.tau,
            theta: lambda.theta,
            reason: format!("`{}` inverts a smoothing term pointwise", a.name()),
        }),
    }
}

/// `‖T‖_{H^s → H^t} = σ_max(D_t T D_s^{−1})`, `D_r = diag(⟨k⟩^r)`.
pub fn sobolev_opnorm(t_op: &TruncatedOperator, s: f64, t: f64) -> f64 {
    spectral_norm(&sobolev_weighted(t_op, s, t))
}

pub fn sobolev_weighted(t_op: &TruncatedOperator, s: f64, t: f64) -> CMatrix {
    let (n1, n0) = t_op.fibers;
    let kk = t_op.k_max as i64;
    let bracket = |i: usize, n: usize| {
        let k = (i / n) as i64 - kk;
        (1.0 + (k * k) as f64).sqrt()
    };
    CMatrix::from_fn(t_op.matrix.nrows(), t_op.matrix.ncols(), |i, j| {
        t_op.matrix[(i, j)] * (bracket(i, n1).powf(t) / bracket(j, n0).powf(s))
    })
}

pub fn oracle_compose(a: &TruncatedOperator, b: &TruncatedOperator) -> Result<TruncatedOperator> {
    check_compatible(a, b, a.fibers.1 == b.fibers.0)?;
    Ok(TruncatedOperator {
        matrix: &a.matrix * &b.matrix,
        lambda: a.lambda,
        k_max: a.k_max,
        fibers: (a.fibers.0, b.fibers.1),
        sobolev_s: b.sobolev_s,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Regularize {
    None,
    Tikhonov(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub condition: f64,
}

pub fn oracle_invert(t: &TruncatedOperator, regularize: Regularize) -> Result<(TruncatedOperator, ConditionReport)> {
    let (r, c) = t.matrix.shape();
    if r != c {
        return Err(PsidoError::ShapeMismatch(format!("cannot invert a {r}x{c} matrix")));
    }
    let sv = t.matrix.clone().singular_values();
    let sigma_max = sv.max();
    let sigma_min = sv.min();
    let report = ConditionReport { sigma_min, sigma_max, condition: sigma_max / sigma_min };
    let inv = match regularize {
        Regularize::None => {
            if sigma_min < INVERT_TOL * sigma_max || sigma_max == 0.0 {
                return Err(PsidoError::SingularToTolerance { ratio: sigma_min / sigma_max });
            }
            t.matrix.clone().try_inverse().ok_or(PsidoError::SingularToTolerance {
                ratio: sigma_min / sigma_max,
            })?
        }
        Regularize::Tikhonov(eps) => {
            let th = t.matrix.adjoint();
            let normal = &th * &t.matrix + CMatrix::identity(c, c) * C64::new(eps * eps, 0.0);
            let chol = normal.cholesky().ok_or(PsidoError::SingularToTolerance { ratio: 0.0 })?;
            chol.solve(&th)
        }
    };
    Ok((
        TruncatedOperator {
            matrix: inv,
            lambda: t.lambda,
            k_max: t.k_max,
            fibers: (t.fibers.1, t.fibers.0),
            sobolev_s: t.sobolev_s,
        },
        report,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbol::catalog;

    fn lam() -> Lambda {
        Lambda::new(1.0, 0.0)
    }

    #[test]
    fn identity_quantizes_to_identity() {
        let t = quantize(&SymbolExpr::identity(1), lam(), 8).unwrap();
        assert!((t.matrix - CMatrix::identity(17, 17)).norm() < 1e-14);
    }

    #[test]
    fn shift_is_subdiagonal() {
        let t = quantize(&catalog::shift(), lam(), 6).unwrap();
        for kr in -6i64..=6 {
            for kc in -6i64..=6 {
                let want = if kr == kc + 1 { 1.0 } else { 0.0 };
                assert!((t.block(kr, kc)[(0, 0)] - want).norm() < 1e-13, "{kr},{kc}");
            }
        }
    }

    #[test]
    fn bessel_is_diagonal_and_isometric() {
        let t = quantize(&catalog::bessel(1.0), lam(), 10).unwrap();
        for k in -10i64..=10 {
            assert!((t.block(k, k)[(0, 0)].re - ((1 + k * k) as f64).sqrt()).abs() < 1e-12);
        }
        assert!((sobolev_opnorm(&t, 1.0, 0.0) - 1.0).abs() < 1e-12);
        assert!((sobolev_opnorm(&TruncatedOperator::identity(1, lam(), 5), 2.0, 2.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hardy_norm_and_idempotence() {
        let t = quantize(&catalog::hardy(), lam(), 12).unwrap();
        assert!((sobolev_opnorm(&t, 0.5, 0.5) - 1.0).abs() < 1e-12);
        let sq = oracle_compose(&t, &t).unwrap();
        assert!((sq.matrix - &t.matrix).norm() < 1e-14);
    }

    #[test]
    fn toeplitz_model_inverse_norm() {
        // diag(τe^{iθ} + ik) on k ≥ 0 at τ = 10, θ = π/2: inverse norm max_k 1/|τ + k| = 1/10
        let lambda = Lambda::new(10.0, std::f64::consts::FRAC_PI_2);
        let kk = 16;
        let t = quantize(&catalog::toeplitz_model(), lambda, kk).unwrap();
        let hardy_block = t.matrix.view((kk, kk), (kk + 1, kk + 1)).into_owned();
        let inv = hardy_block.try_inverse().unwrap();
        assert!((spectral_norm(&inv) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn shift_is_not_invertible() {
        let t = quantize(&catalog::shift(), lam(), 6).unwrap();
        assert!(matches!(oracle_invert(&t, Regularize::None), Err(PsidoError::SingularToTolerance { .. })));
        let (pinv, _) = oracle_invert(&t, Regularize::Tikhonov(1e-6)).unwrap();
        assert!(pinv.matrix.norm().is_finite());
    }

    #[test]
    fn lambda_mismatch_is_reported() {
        let a = TruncatedOperator::identity(1, lam(), 3);
        let b = TruncatedOperator::identity(1, Lambda::new(2.0, 0.0), 3);
        assert!(matches!(oracle_compose(&a, &b), Err(PsidoError::LambdaMismatch(..))));
    }
}
