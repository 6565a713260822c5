//! Weighted sup-norms of symbol derivatives over a sampled grid.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::core_model::grid::CircleGrid;
use crate::core_model::strip::ParameterStrip;
use crate::error::{PsidoError, Result};
use crate::jet::CMatrix;
use crate::symbol::expr::{SymbolExpr, XField};
use crate::symbol::spectral::FieldCtx;

pub const MAX_DERIVATIVE: usize = 4;

/// `sup |∂^α_ξ D^β_x ∂^k_τ a| ⟨ξ⟩^{−(μ−α)} ⟨ξ,τ⟩^{−(γ−k)}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeminormSpec {
    pub alpha: usize,
    pub beta: usize,
    pub k: usize,
    pub mu: f64,
    pub gamma: f64,
}

impl SeminormSpec {
    pub fn new(alpha: usize, beta: usize, k: usize, mu: f64, gamma: f64) -> Self {
        SeminormSpec { alpha, beta, k, mu, gamma }
    }

    /// Plain weighted sup `|a| ⟨ξ⟩^{−μ}`.
    pub fn order(mu: f64) -> Self {
        SeminormSpec::new(0, 0, 0, mu, 0.0)
    }

    fn weight(&self, xi: f64, tau: f64) -> f64 {
        let b = (1.0 + xi * xi).sqrt();
        let bt = (1.0 + xi * xi + tau * tau).sqrt();
        b.powf(-(self.mu - self.alpha as f64)) * bt.powf(-(self.gamma - self.k as f64))
    }
}

/// Where the sup was attained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeminormEstimate {
    pub value: f64,
    pub x: f64,
    pub xi: f64,
    pub tau: f64,
    pub theta: f64,
}

/// Covariable samples: step 1/2 over `[−K, K]`.
pub fn xi_samples(k_max: usize) -> Vec<f64> {
    let n = 2 * k_max as i64;
    (-n..=n).map(|j| j as f64 * 0.5).collect()
}

fn binomial(n: usize, j: usize) -> f64 {
    (0..j).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Central stencil `(offset/h, weight·h^n)` for the n-th derivative.
fn stencil(n: usize) -> Vec<(f64, f64)> {
    (0..=n)
        .map(|j| {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            (n as f64 / 2.0 - j as f64, sign * binomial(n, j))
        })
        .collect()
}

/// Relative step: `1e−3` for orders ≤ 2, `1e−2` above, where rounding dominates.
fn step(order: usize, scale: f64) -> f64 {
    let rel = if order <= 2 { 1e-3 } else { 1e-2 };
    rel * scale.max(1.0)
}

pub fn estimate_seminorm(
    a: &SymbolExpr,
    spec: SeminormSpec,
    strip: &ParameterStrip,
    grid: &CircleGrid,
) -> Result<f64> {
    estimate_seminorm_detailed(a, spec, strip, grid, &xi_samples(grid.k_max())).map(|e| e.value)
}

/// Sup over `x ∈ grid, ξ ∈ xis, (τ, θ) ∈ strip`; ξ and τ derivatives by central
/// differences, x derivatives spectrally.
pub fn estimate_seminorm_detailed(
    a: &SymbolExpr,
    spec: SeminormSpec,
    strip: &ParameterStrip,
    grid: &CircleGrid,
    xis: &[f64],
) -> Result<SeminormEstimate> {
    for d in [spec.alpha, spec.beta, spec.k] {
        if d > MAX_DERIVATIVE {
            return Err(PsidoError::DerivativeOrderTooHigh(d));
        }
    }
    let ctx = FieldCtx::new(grid.n_x(), 1);
    let points: Vec<(f64, f64, f64)> = strip
        .tau_samples()
        .iter()
        .flat_map(|&t| {
            strip
                .theta_samples()
                .iter()
                .flat_map(move |&th| xis.iter().map(move |&xi| (xi, t, th)))
        })
        .collect();
    let sa = stencil(spec.alpha);
    let sk = stencil(spec.k);
    let results: Vec<SeminormEstimate> = points
        .par_iter()
        .map(|&(xi, tau, theta)| {
            let hx = step(spec.alpha, xi.abs());
            let ht = step(spec.k, tau);
            let mut acc: Option<Vec<CMatrix>> = None;
            for &(oa, wa) in &sa {
                for &(ok, wk) in &sk {
                    let t = tau + ok * ht;
                    let field = a.field(xi + oa * hx, t.max(0.0), theta, &ctx)?;
                    let vals = field_values(&field, &ctx);
                    let w = wa * wk / (hx.powi(spec.alpha as i32) * ht.powi(spec.k as i32));
                    acc = Some(match acc {
                        None => vals.into_iter().map(|v| v * crate::jet::C64::new(w, 0.0)).collect(),
                        Some(prev) => prev
                            .into_iter()
                            .zip(vals)
                            .map(|(p, v)| p + v * crate::jet::C64::new(w, 0.0))
                            .collect(),
                    });
                }
            }
            let mut vals = acc.expect("nonempty stencils");
            if spec.beta > 0 {
                vals = spectral_dx(&ctx, &vals, spec.beta);
            }
            let weight = spec.weight(xi, tau);
            let (j, m) = vals
                .iter()
                .enumerate()
                .map(|(j, v)| (j, matrix_norm(v)))
                .fold((0, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            Ok(SeminormEstimate { value: m * weight, x: ctx.xs()[j], xi, tau, theta })
        })
        .collect::<Result<_>>()?;
    Ok(results
        .into_iter()
        .fold(SeminormEstimate { value: 0.0, x: 0.0, xi: 0.0, tau: 0.0, theta: 0.0 }, |best, cur| {
            if cur.value > best.value { cur } else { best }
        }))
}

fn field_values(field: &XField, ctx: &FieldCtx) -> Vec<CMatrix> {
    field.values(ctx.nx())
}

fn spectral_dx(ctx: &FieldCtx, vals: &[CMatrix], beta: usize) -> Vec<CMatrix> {
    let jets: Vec<crate::jet::MatJet> = vals.iter().map(|v| crate::jet::MatJet::constant(v.clone(), 1)).collect();
    ctx.dx_power(&jets, beta).into_iter().map(|j| j.value().clone()).collect()
}

/// Operator 2-norm of a small matrix; absolute value for scalars.
pub fn matrix_norm(m: &CMatrix) -> f64 {
    if m.nrows() == 1 && m.ncols() == 1 {
        return m[(0, 0)].norm();
    }
    m.clone().singular_values().max()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbol::catalog;

    fn strip() -> ParameterStrip {
        ParameterStrip::new(0.0, 1.0, vec![1.0, 3.0, 10.0, 30.0], vec![0.0, 1.0]).unwrap()
    }

    fn grid() -> CircleGrid {
        CircleGrid::new(16, 6, 1, 1).unwrap()
    }

    #[test]
    fn identity_has_unit_norm() {
        let v = estimate_seminorm(&SymbolExpr::identity(1), SeminormSpec::order(0.0), &strip(), &grid()).unwrap();
        assert!((v - 1.0).abs() < 1e-14);
    }

    #[test]
    fn tau_derivative_of_inverse_bracket() {
        // |∂_τ ⟨ξ,τ⟩^{-1}| ⟨ξ,τ⟩² = τ/⟨ξ,τ⟩ < 1
        let spec = SeminormSpec::new(0, 0, 1, 0.0, -1.0);
        let a = catalog::param_bessel(-1.0);
        let v = estimate_seminorm(&a, spec, &strip(), &grid()).unwrap();
        let exact = 30.0 / (1.0f64 + 900.0).sqrt();
        assert!((v - exact).abs() < 1e-5, "{v} vs {exact}");
    }

    #[test]
    fn tau_independent_symbols_have_no_tau_derivative() {
        let spec = SeminormSpec::new(0, 0, 1, 0.0, 0.0);
        let v = estimate_seminorm(&catalog::bessel(1.0), spec, &strip(), &grid()).unwrap();
        assert!(v < 1e-6);
    }

    #[test]
    fn x_derivative_of_shift() {
        let spec = SeminormSpec::new(0, 2, 0, 0.0, 0.0);
        let v = estimate_seminorm(&catalog::shift(), spec, &strip(), &grid()).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn refuses_high_orders() {
        let spec = SeminormSpec::new(5, 0, 0, 0.0, 0.0);
        assert!(matches!(
            estimate_seminorm(&SymbolExpr::identity(1), spec, &strip(), &grid()),
            Err(PsidoError::DerivativeOrderTooHigh(5))
        ));
    }

    #[test]
    fn xi_samples_cover_band() {
        let s = xi_samples(3);
        assert_eq!(s.first(), Some(&-3.0));
        assert_eq!(s.last(), Some(&3.0));
        assert_eq!(s.len(), 13);
    }
}
