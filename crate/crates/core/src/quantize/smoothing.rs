use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::core_model::strip::Lambda;
use crate::error::{PsidoError, Result};
use crate::fit::loglog_fit;
use crate::jet::{CMatrix, C64};
use crate::quantize::{spectral_norm, TruncatedOperator};
use crate::symbol::expr::SymbolExpr;

/// `λ ↦ matrix on |k| ≤ K`; `None` outside the family's domain.
pub type LambdaFamily = Arc<dyn Fn(Lambda) -> Option<CMatrix> + Send + Sync>;

/// Sup over the sample grid of `⟨τ⟩^m ‖R(λ)‖` for `m = 0..=3`, and the fitted
/// log-log slope of `‖R‖` over the upper half of the τ samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayCertificate {
    pub weighted_sup: [f64; 4],
    pub tail_slope: f64,
}

/// A matrix-level operator family re-entering the calculus as a symbol of order −∞.
#[derive(Clone)]
pub struct SmoothingKernel {
    family: LambdaFamily,
    k_max: usize,
    fibers: (usize, usize),
    grid: Vec<Lambda>,
    certificate: DecayCertificate,
    vanishing: bool,
    norms: Vec<(Lambda, f64)>,
}

impl fmt::Debug for SmoothingKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SmoothingKernel")
            .field("k_max", &self.k_max)
            .field("fibers", &self.fibers)
            .field("certificate", &self.certificate)
            .field("vanishing", &self.vanishing)
            .finish_non_exhaustive()
    }
}

fn bracket(t: f64) -> f64 {
    (1.0 + t * t).sqrt()
}

impl SmoothingKernel {
    /// Certificates are measured on `grid`.
    pub fn new(family: LambdaFamily, grid: Vec<Lambda>, k_max: usize, fibers: (usize, usize)) -> Result<Self> {
        let mut samples = Vec::with_capacity(grid.len());
        for &l in &grid {
            let m = family(l).ok_or(PsidoError::NonEvaluable {
                x: f64::NAN,
                xi: f64::NAN,
                tau: l.tau,
                theta: l.theta,
                reason: "smoothing family undefined at a certificate point".into(),
            })?;
            let n = 2 * k_max + 1;
            if m.shape() != (n * fibers.0, n * fibers.1) {
                return Err(PsidoError::ShapeMismatch(format!(
                    "family member {:?} vs K={k_max}, fibers {:?}",
                    m.shape(),
                    fibers
                )));
            }
            samples.push((l.tau, spectral_norm(&m)));
        }
        let (certificate, vanishing) = certify(&samples);
        let norms = grid.iter().zip(&samples).map(|(l, (_, n))| (*l, *n)).collect();
        Ok(SmoothingKernel { family, k_max, fibers, grid, certificate, vanishing, norms })
    }

    pub fn zero(k_max: usize, fibers: (usize, usize), grid: Vec<Lambda>) -> Self {
        let n = 2 * k_max + 1;
        let family: LambdaFamily = Arc::new(move |_| Some(CMatrix::zeros(n * fibers.0, n * fibers.1)));
        SmoothingKernel::new(family, grid, k_max, fibers).expect("zero family is well formed")
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn shape(&self) -> (usize, usize) {
        self.fibers
    }

    pub fn grid(&self) -> &[Lambda] {
        &self.grid
    }

    pub fn certificate(&self) -> &DecayCertificate {
        &self.certificate
    }

    /// `‖R(λ)‖` at each certificate point.
    pub fn sample_norms(&self) -> &[(Lambda, f64)] {
        &self.norms
    }

    pub fn is_vanishing(&self) -> bool {
        self.vanishing
    }

    pub fn matrix(&self, lambda: Lambda) -> Result<CMatrix> {
        (self.family)(lambda).ok_or(PsidoError::NonEvaluable {
            x: f64::NAN,
            xi: f64::NAN,
            tau: lambda.tau,
            theta: lambda.theta,
            reason: "parameter outside the smoothing family's domain".into(),
        })
    }

    pub fn operator(&self, lambda: Lambda, k_max: usize) -> Result<TruncatedOperator> {
        let t = TruncatedOperator::new(self.matrix(lambda)?, lambda, self.k_max, self.fibers)?;
        Ok(if k_max == self.k_max { t } else { t.resized(k_max) })
    }

    /// `a(x, k) = Σ_{k'} T_{k',k} e^{i(k'−k)x}`; defined at integer `k` only.
    pub fn symbol_at(&self, x: f64, xi: f64, tau: f64, theta: f64) -> Result<CMatrix> {
        let k = xi.round();
        if (xi - k).abs() > 1e-12 {
            return Err(PsidoError::NonEvaluable {
                x,
                xi,
                tau,
                theta,
                reason: "smoothing kernels are defined at integer frequencies only".into(),
            });
        }
        let (n1, n0) = self.fibers;
        let kk = self.k_max as i64;
        let k = k as i64;
        if k.abs() > kk {
            return Ok(CMatrix::zeros(n1, n0));
        }
        let t = self.operator(Lambda::new(tau, theta), self.k_max)?;
        let mut acc = CMatrix::zeros(n1, n0);
        for kr in -kk..=kk {
            acc += t.block(kr, k) * C64::from_polar(1.0, (kr - k) as f64 * x);
        }
        Ok(acc)
    }

    pub fn into_symbol(self) -> SymbolExpr {
        SymbolExpr::smoothing(Arc::new(self))
    }
}

/// Norms below this are treated as exact zeros by the decay certificate.
pub const NORM_FLOOR: f64 = 1e-12;

fn certify(samples: &[(f64, f64)]) -> (DecayCertificate, bool) {
    let mut weighted_sup = [0.0f64; 4];
    for &(tau, n) in samples {
        for (m, w) in weighted_sup.iter_mut().enumerate() {
            *w = w.max(bracket(tau).powi(m as i32) * n);
        }
    }
    // worst norm per distinct τ, then slope over the upper half
    let mut per_tau: Vec<(f64, f64)> = Vec::new();
    for &(tau, n) in samples {
        match per_tau.iter_mut().find(|(t, _)| (*t - tau).abs() <= 1e-12 * tau.max(1.0)) {
            Some(e) => e.1 = e.1.max(n),
            None => per_tau.push((tau, n)),
        }
    }
    per_tau.sort_by(|a, b| a.0.total_cmp(&b.0));
    let all_zero = per_tau.iter().all(|&(_, n)| n == 0.0);
    let tail = &per_tau[per_tau.len() / 2..];
    // norms at round-off level carry no slope information
    let tail_floored = tail.iter().all(|&(_, n)| n <= NORM_FLOOR);
    let tail_slope = if all_zero {
        f64::NEG_INFINITY
    } else if tail.len() >= 2 {
        let xs: Vec<f64> = tail.iter().map(|(t, _)| t.max(1e-300)).collect();
        let ys: Vec<f64> = tail.iter().map(|(_, n)| n.max(NORM_FLOOR)).collect();
        loglog_fit(&xs, &ys).0
    } else {
        0.0
    };
    let vanishing = all_zero || tail_floored || (weighted_sup[1].is_finite() && tail_slope < 0.0);
    (DecayCertificate { weighted_sup, tail_slope }, vanishing)
}

/// Package sampled matrices as a smoothing kernel; lookups match λ exactly
/// (relative 1e−12).
pub fn encode_smoothing(samples: Vec<(Lambda, CMatrix)>, k_max: usize, fibers: (usize, usize)) -> Result<SmoothingKernel> {
    let grid: Vec<Lambda> = samples.iter().map(|(l, _)| *l).collect();
    let samples = Arc::new(samples);
    let family: LambdaFamily = Arc::new(move |l: Lambda| {
        samples
            .iter()
            .find(|(g, _)| {
                (g.tau - l.tau).abs() <= 1e-12 * l.tau.abs().max(1.0) && (g.theta - l.theta).abs() <= 1e-12
            })
            .map(|(_, m)| m.clone())
    });
    SmoothingKernel::new(family, grid, k_max, fibers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core_model::strip::log_tau_grid;

    fn grid() -> Vec<Lambda> {
        log_tau_grid(0.0, 3.0, 4).unwrap().into_iter().map(|t| Lambda::new(t, 0.0)).collect()
    }

    #[test]
    fn zero_family_vanishes() {
        let k = SmoothingKernel::zero(3, (1, 1), grid());
        assert!(k.is_vanishing());
        assert_eq!(k.certificate().weighted_sup, [0.0; 4]);
    }

    #[test]
    fn rank_one_decaying_family() {
        let n = 7;
        let u = CMatrix::from_fn(n, 1, |i, _| C64::new(1.0 / (1.0 + i as f64), 0.0));
        let v = CMatrix::from_fn(n, 1, |i, _| C64::new(0.5, i as f64 * 0.1));
        let uv = &u * v.adjoint();
        let norm = u.norm() * v.norm();
        let samples: Vec<(Lambda, CMatrix)> =
            grid().into_iter().map(|l| (l, &uv * C64::new(1.0 / (1.0 + l.tau), 0.0))).collect();
        let k = encode_smoothing(samples, 3, (1, 1)).unwrap();
        assert!(k.is_vanishing());
        let c1 = k.certificate().weighted_sup[1];
        assert!(c1 <= norm * (1.0 + 1e-12) && c1 > 0.99 * norm, "{c1} vs {norm}");
    }

    #[test]
    fn constant_family_does_not_vanish() {
        let m = CMatrix::identity(7, 7);
        let samples: Vec<(Lambda, CMatrix)> = grid().into_iter().map(|l| (l, m.clone())).collect();
        let k = encode_smoothing(samples, 3, (1, 1)).unwrap();
        assert!(!k.is_vanishing());
    }

    #[test]
    fn symbol_roundtrip_through_quantize() {
        let n = 9;
        let m = CMatrix::from_fn(n, n, |i, j| C64::new((i + 2 * j) as f64 * 0.01, (i as f64 - j as f64) * 0.02));
        let l = Lambda::new(3.0, 0.0);
        let k = encode_smoothing(vec![(l, m.clone())], 4, (1, 1)).unwrap();
        let sym = k.into_symbol();
        let t = crate::quantize::quantize(&sym, l, 4).unwrap();
        assert!((t.matrix - &m).norm() < 1e-14);
        assert!(sym.eval(0.3, 0.5, 3.0, 0.0).is_err());
        // direct symbol evaluation matches the Fourier rule
        let v = sym.eval(0.0, 1.0, 3.0, 0.0).unwrap()[(0, 0)];
        let want: C64 = (0..n).map(|r| m[(r, 5)]).sum();
        assert!((v - want).norm() < 1e-13);
    }
}
