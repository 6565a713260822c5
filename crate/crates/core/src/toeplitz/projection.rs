use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::core_model::grid::x_points;
use crate::core_model::strip::Lambda;
use crate::error::{PsidoError, Result};
use crate::jet::{CMatrix, MatJet, C64};
use crate::quantize::{quantize, spectral_norm, TruncatedOperator};
use crate::symbol::catalog;
use crate::symbol::expr::SymbolExpr;
use crate::symbol::principal::HomogComponent;

use super::basis::range_basis;

/// Rank of `σ₁(p)` at a cosphere point `(x, φ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankSample {
    pub x_index: usize,
    pub phi: i8,
    pub rank: usize,
}

/// A zero-order projection symbol.
#[derive(Debug, Clone)]
pub struct ProjectionSymbol {
    pub symbol: SymbolExpr,
    /// The quantized matrix is exactly idempotent on every truncation.
    pub exact: bool,
    pub rank_profile: Vec<RankSample>,
}

const N_X_PROFILE: usize = 16;

impl ProjectionSymbol {
    pub fn new(symbol: SymbolExpr, exact: bool) -> Result<Self> {
        let (r, c) = symbol.shape();
        if r != c {
            return Err(PsidoError::ShapeMismatch(format!("a {r}x{c} symbol is not a projection")));
        }
        let p = symbol.principal().ok_or(PsidoError::NoPrincipalData)?;
        let xs = if symbol.is_x_dependent() { x_points(N_X_PROFILE) } else { vec![0.0] };
        let mut rank_profile = Vec::new();
        for (i, &x) in xs.iter().enumerate() {
            for phi in [1i8, -1] {
                let m = p.eval(x, phi as f64, 0.0, 0.0);
                rank_profile.push(RankSample { x_index: i, phi, rank: range_basis(&m).ncols() });
            }
        }
        Ok(ProjectionSymbol { symbol, exact, rank_profile })
    }

    pub fn identity(n: usize) -> Self {
        ProjectionSymbol::new(SymbolExpr::identity(n), true).expect("identity is a projection")
    }

    pub fn rotated() -> Self {
        ProjectionSymbol::new(catalog::rotated_projection(), false).expect("rotated projection has principal data")
    }

    pub fn fiber(&self) -> usize {
        self.symbol.shape().0
    }

    /// `σ₁(p)` at `(x, φ)`.
    pub fn principal_at(&self, x: f64, xi: f64, tau: f64, theta: f64) -> CMatrix {
        self.symbol.principal().expect("checked at construction").eval(x, xi, tau, theta)
    }

    pub fn operator(&self, lambda: Lambda, k_max: usize) -> Result<TruncatedOperator> {
        quantize(&self.symbol, lambda, k_max)
    }

    /// `‖Q² − Q‖` on the band `|k| ≤ band`, `Q = Op(p)(λ)` on `|k| ≤ K`.
    pub fn idempotence_residual(&self, lambda: Lambda, k_max: usize, band: usize) -> Result<f64> {
        let q = self.operator(lambda, k_max)?;
        let d = TruncatedOperator::new(&q.matrix * &q.matrix - &q.matrix, lambda, k_max, q.fibers)?;
        Ok(spectral_norm(&d.band(band)))
    }

    /// Pointwise `‖σ(p)² − σ(p)‖` for σ₁ on the cosphere, σ₂ and the limit family
    /// at the sample angles.
    pub fn symbol_idempotence(&self, thetas: &[f64]) -> Result<f64> {
        let xs = if self.symbol.is_x_dependent() { x_points(N_X_PROFILE) } else { vec![0.0] };
        let ang = self.symbol.angular().ok_or(PsidoError::NoPrincipalData)?;
        let lim = self.symbol.limit_family()?;
        let defect = |m: CMatrix| (&m * &m - &m).norm();
        let mut worst: f64 = 0.0;
        for &x in &xs {
            for &theta in thetas {
                for phi in [1.0, -1.0] {
                    worst = worst.max(defect(self.principal_at(x, phi, 0.0, theta)));
                    worst = worst.max(defect(ang.eval(x, phi, theta)));
                    if !lim.is_zero {
                        for xi in [-3.0, -1.0, 0.0, 2.0] {
                            worst = worst.max(defect(lim.eval(x, xi, theta)?));
                        }
                    }
                }
            }
        }
        Ok(worst)
    }
}

/// Hardy multiplier; its quantization on `|k| ≤ K` is exactly `diag(1_{k≥0})`.
pub fn make_hardy_projection(k_max: usize) -> Result<ProjectionSymbol> {
    let p = ProjectionSymbol::new(catalog::hardy(), true)?;
    let q = p.operator(Lambda::new(1.0, 0.0), k_max)?;
    let exact = (&q.matrix * &q.matrix - &q.matrix).iter().all(|v| *v == C64::new(0.0, 0.0));
    Ok(ProjectionSymbol { exact, ..p })
}

/// `⟨ξ, τ⟩^μ` times the `n × n` identity.
fn bracket_multiplier(mu: f64, n: usize) -> SymbolExpr {
    if n == 1 {
        return catalog::param_bessel(mu);
    }
    let id = CMatrix::identity(n, n);
    let id2 = id.clone();
    SymbolExpr::classical(
        format!("<xi,tau>^{mu} I{n}"),
        mu,
        (n, n),
        false,
        true,
        HomogComponent::from_fn(mu, move |_, xi, tau, _| &id * C64::new((xi * xi + tau * tau).sqrt().powf(mu), 0.0)),
        Arc::new(move |_, xi, tau, _| MatJet::from_scalar(&catalog::param_bracket_jet(xi, tau, mu), &id2)),
    )
}

/// `R = ⟨ξ, τ⟩^{−μ}`, `S = ⟨ξ, τ⟩^{μ}` on fibers of dimension `n`.
#[derive(Debug, Clone)]
pub struct OrderReductionPair {
    pub r: SymbolExpr,
    pub s: SymbolExpr,
    pub mu: f64,
    pub fiber: usize,
}

impl OrderReductionPair {
    pub fn new(mu: f64, fiber: usize) -> Result<Self> {
        if !(mu > 0.0) {
            return Err(PsidoError::NotInCalculus(format!("order reduction needs mu > 0, got {mu}")));
        }
        Ok(OrderReductionPair { r: bracket_multiplier(-mu, fiber), s: bracket_multiplier(mu, fiber), mu, fiber })
    }

    /// `Op(R)(λ)` and `Op(S)(λ)`.
    pub fn operators(&self, lambda: Lambda, k_max: usize) -> Result<(CMatrix, CMatrix)> {
        Ok((quantize(&self.r, lambda, k_max)?.matrix, quantize(&self.s, lambda, k_max)?.matrix))
    }

    /// `max(‖Op(R)Op(S) − 1‖, ‖Op(S)Op(R) − 1‖)` at λ.
    pub fn inverse_defect(&self, lambda: Lambda, k_max: usize) -> Result<f64> {
        let (r, s) = self.operators(lambda, k_max)?;
        let n = r.nrows();
        let id = CMatrix::identity(n, n);
        Ok(spectral_norm(&(&r * &s - &id)).max(spectral_norm(&(&s * &r - &id))))
    }

    /// `r^{(−μ)}(x, 0, 1, θ)`, the factor entering the limit-family of `R # p # S`.
    pub fn r_infinity(&self) -> f64 {
        self.r.principal().expect("multiplier pair is classical").eval(0.0, 0.0, 1.0, 0.0)[(0, 0)].re
    }
}

/// `P̃ = R # P # S`. Multiplier projections commute with the pair and are
/// returned unchanged.
pub fn tilde_conjugate(p: &ProjectionSymbol, rs: &OrderReductionPair, truncation: usize) -> Result<ProjectionSymbol> {
    if p.fiber() != rs.fiber {
        return Err(PsidoError::ShapeMismatch(format!(
            "projection on C^{} conjugated by a pair on C^{}",
            p.fiber(),
            rs.fiber
        )));
    }
    if !p.symbol.is_x_dependent() {
        return Ok(p.clone());
    }
    let ps = SymbolExpr::leibniz(&p.symbol, &rs.s, truncation)?;
    let sym = SymbolExpr::leibniz(&rs.r, &ps, truncation)?.with_name(format!("R#{}#S", p.symbol.name()));
    let mut out = ProjectionSymbol::new(sym, false)?;
    out.rank_profile = p.rank_profile.clone();
    Ok(out)
}

/// `Op(R) Op(P) Op(S)` at λ: the operator `P̃(λ)` itself, as opposed to the
/// quantization of the truncated symbol product.
pub fn tilde_operator(p: &ProjectionSymbol, rs: &OrderReductionPair, lambda: Lambda, k_max: usize) -> Result<CMatrix> {
    let (r, s) = rs.operators(lambda, k_max)?;
    let q = p.operator(lambda, k_max)?.matrix;
    Ok(r * q * s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hardy_is_exact_and_diagonal() {
        let p = make_hardy_projection(12).unwrap();
        assert!(p.exact);
        let q = p.operator(Lambda::new(3.0, 1.0), 12).unwrap();
        for k in -12i64..=12 {
            let want = if k >= 0 { 1.0 } else { 0.0 };
            assert_eq!(q.block(k, k)[(0, 0)], C64::new(want, 0.0));
        }
        assert!(p.rank_profile.contains(&RankSample { x_index: 0, phi: 1, rank: 1 }));
        assert!(p.rank_profile.contains(&RankSample { x_index: 0, phi: -1, rank: 0 }));
        assert!(p.symbol_idempotence(&[0.0, 2.0]).unwrap() < 1e-12);
        let ang = p.symbol.angular().unwrap();
        assert_eq!(ang.eval(0.0, 1.0, 0.0)[(0, 0)], C64::new(1.0, 0.0));
        assert_eq!(ang.eval(0.0, -1.0, 0.0)[(0, 0)], C64::new(0.0, 0.0));
    }

    #[test]
    fn reduction_pair_is_exactly_inverse() {
        let rs = OrderReductionPair::new(1.0, 1).unwrap();
        for tau in [0.0, 1.0, 50.0] {
            assert!(rs.inverse_defect(Lambda::new(tau, 0.3), 16).unwrap() < 1e-14);
        }
        assert_eq!(rs.r_infinity(), 1.0);
        assert!(OrderReductionPair::new(0.0, 1).is_err());
    }

    #[test]
    fn multiplier_projection_is_unchanged_by_conjugation() {
        let p = make_hardy_projection(8).unwrap();
        let rs = OrderReductionPair::new(1.0, 1).unwrap();
        let t = tilde_conjugate(&p, &rs, 3).unwrap();
        assert!(t.exact && t.symbol.ptr_eq(&p.symbol));
        let id = ProjectionSymbol::identity(1);
        let l = Lambda::new(7.0, 0.2);
        let m = tilde_operator(&id, &rs, l, 8).unwrap();
        assert!((m - CMatrix::identity(17, 17)).norm() < 1e-14);
    }

    #[test]
    fn rotated_projection_conjugate_is_idempotent_on_the_interior() {
        let k = 16;
        let p = ProjectionSymbol::rotated();
        assert!(!p.exact);
        assert!(p.symbol_idempotence(&[0.0]).unwrap() < 1e-12);
        let rs = OrderReductionPair::new(1.0, 2).unwrap();
        let t = tilde_conjugate(&p, &rs, 3).unwrap();
        assert!(!t.exact);
        let lim = t.symbol.limit_family().unwrap();
        assert!(!lim.is_zero);
        for (x, xi) in [(0.3, 2.0), (1.7, -4.0)] {
            let d = lim.eval(x, xi, 0.5).unwrap() - p.symbol.eval(x, xi, 1.0, 0.5).unwrap();
            assert!(d.norm() < 1e-12);
        }
        let l = Lambda::new(5.0, 0.5);
        let m = tilde_operator(&p, &rs, l, k).unwrap();
        let d = TruncatedOperator::new(&m * &m - &m, l, k, (2, 2)).unwrap();
        assert!(spectral_norm(&d.band(k / 2)) < 1e-10);
        assert!(p.idempotence_residual(l, k, k / 2).unwrap() < 1e-10);
    }
}
