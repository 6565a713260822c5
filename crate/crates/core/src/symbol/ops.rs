//! Calculus operations on structured symbols.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::core_model::grid::CircleGrid;
use crate::core_model::seminorm::{estimate_seminorm, matrix_norm, SeminormSpec};
use crate::core_model::strip::ParameterStrip;
use crate::error::{PsidoError, Result};
use crate::fit::loglog_fit;
use crate::jet::{CMatrix, MatJet, C64};
use crate::symbol::excision::chi_jet;
use crate::symbol::expr::{LimitFamily, SymbolExpr, XField};
use crate::symbol::principal::HomogComponent;
use crate::symbol::spectral::FieldCtx;

pub fn leibniz_product(a: &SymbolExpr, b: &SymbolExpr, truncation: usize) -> Result<SymbolExpr> {
    SymbolExpr::leibniz(a, b, truncation)
}

pub fn adjoint_symbol(a: &SymbolExpr, truncation: usize) -> Result<SymbolExpr> {
    SymbolExpr::adjoint(a, truncation)
}

pub fn limit_family(a: &SymbolExpr) -> Result<LimitFamily> {
    a.limit_family()
}

/// The multiplier `χ(ξ / radius)` as an n×n fixed symbol of order 0.
pub fn excision_symbol(radius: f64, n: usize) -> SymbolExpr {
    SymbolExpr::fixed(
        format!("chi(xi/{radius})"),
        0.0,
        (n, n),
        false,
        HomogComponent::from_fn(0.0, move |_, _, _, _| CMatrix::identity(n, n)),
        Arc::new(move |_, xi, _, _| MatJet::from_scalar(&chi_jet(xi, radius), &CMatrix::identity(n, n))),
    )
}

/// `a · χ(ξ/radius)`; exact pointwise product since the right factor is x-independent.
pub fn excise(a: &SymbolExpr, radius: f64) -> SymbolExpr {
    SymbolExpr::leibniz(a, &excision_symbol(radius, a.shape().1), 0).expect("square excision fits any symbol")
}

#[derive(Debug, Clone)]
pub struct AsymptoticSum {
    pub symbol: SymbolExpr,
    /// Excision radius `1/c_k` used for each component.
    pub radii: Vec<f64>,
    /// Order-`(μ−k+1)` seminorm of each excised component.
    pub contributions: Vec<f64>,
}

/// `Σ_k χ(c_k ξ) a_k` with `c_k` halved until term `k` contributes at most
/// `2^{−k}` in the order-`(μ−k+1)` seminorm on the grid.
pub fn asymptotic_sum(
    components: &[SymbolExpr],
    strip: &ParameterStrip,
    grid: &CircleGrid,
) -> Result<AsymptoticSum> {
    let first = components
        .iter()
        .find(|c| c.order().is_finite())
        .ok_or_else(|| PsidoError::OrderGapInvalid("no component of finite order".into()));
    let shape = components
        .first()
        .map(SymbolExpr::shape)
        .ok_or_else(|| PsidoError::OrderGapInvalid("empty component list".into()))?;
    let Ok(first) = first else {
        return Ok(AsymptoticSum {
            symbol: SymbolExpr::zero(shape),
            radii: vec![1.0; components.len()],
            contributions: vec![0.0; components.len()],
        });
    };
    let idx0 = components.iter().position(|c| c.ptr_eq(first)).expect("found above");
    let mu = first.order() + idx0 as f64;
    for (k, c) in components.iter().enumerate() {
        if c.shape() != shape {
            return Err(PsidoError::ShapeMismatch(format!("component {k} has shape {:?}", c.shape())));
        }
        let o = c.order();
        if o.is_finite() && (o - (mu - k as f64)).abs() > 1e-12 {
            return Err(PsidoError::OrderGapInvalid(format!(
                "component {k} has order {o}, expected {}",
                mu - k as f64
            )));
        }
    }
    let mut terms = Vec::with_capacity(components.len());
    let mut radii = Vec::with_capacity(components.len());
    let mut contributions = Vec::with_capacity(components.len());
    let cap = 4.0 * grid.k_max() as f64 + 4.0;
    for (k, c) in components.iter().enumerate() {
        let spec = SeminormSpec::order(mu - k as f64 + 1.0);
        let mut radius = 1.0;
        let mut term = excise(c, radius);
        let mut contrib = estimate_seminorm(&term, spec, strip, grid)?;
        while k > 0 && contrib > 0.5f64.powi(k as i32) && radius < cap {
            radius *= 2.0;
            term = excise(c, radius);
            contrib = estimate_seminorm(&term, spec, strip, grid)?;
        }
        radii.push(radius);
        contributions.push(contrib);
        terms.push((C64::new(1.0, 0.0), term));
    }
    Ok(AsymptoticSum { symbol: SymbolExpr::sum(terms)?, radii, contributions })
}

/// Samples of a candidate limit over `θ × ξ × x`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LimitEstimate {
    pub thetas: Vec<f64>,
    pub xis: Vec<f64>,
    pub xs: Vec<f64>,
    #[serde(skip)]
    pub values: Vec<CMatrix>,
    pub error_estimate: f64,
}

impl LimitEstimate {
    pub fn value(&self, i_theta: usize, i_xi: usize, i_x: usize) -> &CMatrix {
        &self.values[(i_theta * self.xis.len() + i_xi) * self.xs.len() + i_x]
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MembershipVerdict {
    pub pass: bool,
    /// `sup (1+τ)^{1+δ} |∂_τ a|` over the whole grid.
    pub bound: f64,
    /// The same sup restricted to the top τ-decade and to the rest.
    pub top_decade: f64,
    pub lower_decades: f64,
    pub limit: Option<LimitEstimate>,
}

/// Gauss–Legendre nodes and weights on `[−1, 1]`.
const GL3: [(f64, f64); 3] = [(-0.774_596_669_241_483_4, 5.0 / 9.0), (0.0, 8.0 / 9.0), (0.774_596_669_241_483_4, 5.0 / 9.0)];

/// Sufficient test for membership: `(1+τ)^{1+δ} ∂_τ a` bounded on the log grid,
/// then `a(τ_0) + ∫ ∂_τ a dτ` with a power-law tail as the limit candidate.
pub fn membership_by_derivative_decay(
    a: &SymbolExpr,
    delta: f64,
    strip: &ParameterStrip,
    grid: &CircleGrid,
    xis: &[f64],
) -> Result<MembershipVerdict> {
    let ctx = FieldCtx::new(grid.n_x(), 1);
    let taus = strip.tau_samples();
    if taus.len() < 3 {
        return Err(PsidoError::InvalidStrip("need at least three tau samples".into()));
    }
    let field_at = |xi: f64, tau: f64, theta: f64| -> Result<Vec<CMatrix>> {
        Ok(match a.field(xi, tau, theta, &ctx)? {
            f @ XField::Const(_) | f @ XField::Grid(_) => f.values(ctx.nx()),
        })
    };
    let dtau = |xi: f64, tau: f64, theta: f64| -> Result<Vec<CMatrix>> {
        let h = 1e-4 * tau.max(1.0);
        let p = field_at(xi, tau + h, theta)?;
        let m = field_at(xi, (tau - h).max(0.0), theta)?;
        let w = 1.0 / (tau + h - (tau - h).max(0.0));
        Ok(p.iter().zip(&m).map(|(p, m)| (p - m) * C64::new(w, 0.0)).collect())
    };
    let t_top = taus[taus.len() - 1];
    let top_start = t_top / 10.0;
    let thetas = strip.theta_samples().to_vec();
    let jobs: Vec<(usize, usize)> =
        (0..thetas.len()).flat_map(|i| (0..xis.len()).map(move |j| (i, j))).collect();
    struct Partial {
        top: f64,
        lower: f64,
        values: Vec<CMatrix>,
        err: f64,
    }
    let parts: Vec<Partial> = jobs
        .par_iter()
        .map(|&(it, ix)| {
            let theta = thetas[it];
            let xi = xis[ix];
            let mut top: f64 = 0.0;
            let mut lower: f64 = 0.0;
            for &t in taus {
                let d = dtau(xi, t, theta)?;
                let w = (1.0 + t).powf(1.0 + delta) * d.iter().map(matrix_norm).fold(0.0, f64::max);
                if t >= top_start * (1.0 - 1e-12) && t > taus[0] {
                    top = top.max(w);
                } else {
                    lower = lower.max(w);
                }
            }
            // a(τ_0) + Σ GL3 over each log interval
            let mut acc = field_at(xi, taus[0], theta)?;
            for win in taus.windows(2) {
                let (l0, l1) = (win[0].max(1e-12).ln(), win[1].ln());
                for &(node, weight) in &GL3 {
                    let s = 0.5 * (l0 + l1) + 0.5 * (l1 - l0) * node;
                    let t = s.exp();
                    let d = dtau(xi, t, theta)?;
                    let jac = 0.5 * (l1 - l0) * weight * t;
                    for (a, d) in acc.iter_mut().zip(&d) {
                        *a += d * C64::new(jac, 0.0);
                    }
                }
            }
            // tail ∫_{T}^∞ c τ^{−p} dτ fitted from the last two samples
            let t1 = taus[taus.len() - 2];
            let d1 = dtau(xi, t1, theta)?;
            let d2 = dtau(xi, t_top, theta)?;
            let mut err: f64 = 0.0;
            for ((a, d1), d2) in acc.iter_mut().zip(&d1).zip(&d2) {
                let n1 = d1.norm();
                let n2 = d2.norm();
                if n2 == 0.0 || n1 == 0.0 {
                    continue;
                }
                let p = -(n2 / n1).ln() / (t_top / t1).ln();
                if p > 1.0 {
                    let tail = d2 * C64::new(t_top / (p - 1.0), 0.0);
                    err = err.max(0.5 * tail.norm());
                    *a += tail;
                } else {
                    err = f64::INFINITY;
                }
            }
            Ok(Partial { top, lower, values: acc, err })
        })
        .collect::<Result<_>>()?;
    let top = parts.iter().map(|p| p.top).fold(0.0, f64::max);
    let lower = parts.iter().map(|p| p.lower).fold(0.0, f64::max);
    let pass = top <= 1e-12 || top <= 1.5 * lower;
    let err = parts.iter().map(|p| p.err).fold(0.0, f64::max);
    let values: Vec<CMatrix> = parts.into_iter().flat_map(|p| p.values).collect();
    Ok(MembershipVerdict {
        pass,
        bound: top.max(lower),
        top_decade: top,
        lower_decades: lower,
        limit: pass.then(|| LimitEstimate {
            thetas,
            xis: xis.to_vec(),
            xs: ctx.xs().to_vec(),
            values,
            error_estimate: err,
        }),
    })
}

/// `sup_{x, ξ} |a(x,ξ,τ,θ) − a^∞(x,ξ,θ)| ⟨ξ⟩^{−order}`.
pub fn limit_distance(
    a: &SymbolExpr,
    lim: &LimitFamily,
    tau: f64,
    theta: f64,
    xis: &[f64],
    nx: usize,
    order: f64,
) -> Result<f64> {
    let ctx = FieldCtx::new(nx, 1);
    xis.par_iter()
        .map(|&xi| {
            let va = a.field(xi, tau, theta, &ctx)?.values(nx);
            let vl = lim.symbol.field(xi, 1.0, theta, &ctx)?.values(nx);
            let w = (1.0 + xi * xi).sqrt().powf(-order);
            Ok(va.iter().zip(&vl).map(|(p, q)| matrix_norm(&(p - q)) * w).fold(0.0, f64::max))
        })
        .collect::<Result<Vec<f64>>>()
        .map(|v| v.into_iter().fold(0.0, f64::max))
}

/// Distances at each τ and the fitted log-log slope.
pub fn limit_decay(
    a: &SymbolExpr,
    taus: &[f64],
    theta: f64,
    xis: &[f64],
    nx: usize,
    order: f64,
) -> Result<(Vec<f64>, f64)> {
    let lim = a.limit_family()?;
    let d = taus
        .iter()
        .map(|&t| limit_distance(a, &lim, t, theta, xis, nx, order))
        .collect::<Result<Vec<_>>>()?;
    let (slope, _) = loglog_fit(taus, &d);
    Ok((d, slope))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core_model::strip::log_tau_grid;
    use crate::jet::Jet;
    use crate::symbol::catalog;
    use std::f64::consts::FRAC_PI_2;

    fn m_eval(xi: &Jet) -> Jet {
        // an order-0 multiplier
        xi.scale(1.0).div(&catalog::bracket_jet(xi, 1.0))
    }

    fn small_grid() -> CircleGrid {
        CircleGrid::new(8, 3, 1, 1).unwrap()
    }

    #[test]
    fn arctan_family_converges() {
        let a = SymbolExpr::raw(
            "arctan(tau) m",
            0.0,
            (1, 1),
            false,
            true,
            Arc::new(|_, xi, tau, _| MatJet::scalar(&m_eval(xi).scale(tau.atan()))),
        );
        let strip = ParameterStrip::new(0.0, 0.0, log_tau_grid(0.0, 3.0, 4).unwrap(), vec![0.0]).unwrap();
        let xis = [-2.0, 0.5, 3.0];
        let v = membership_by_derivative_decay(&a, 0.5, &strip, &small_grid(), &xis).unwrap();
        assert!(v.pass);
        let lim = v.limit.unwrap();
        for (j, &xi) in xis.iter().enumerate() {
            let want = FRAC_PI_2 * xi / (1.0 + xi * xi).sqrt();
            assert!((lim.value(0, j, 0)[(0, 0)].re - want).abs() < 1e-3, "xi={xi}");
        }
    }

    #[test]
    fn log_oscillation_fails() {
        let a = SymbolExpr::raw(
            "sin(log(1+tau)) m",
            0.0,
            (1, 1),
            false,
            true,
            Arc::new(|_, xi, tau, _| MatJet::scalar(&m_eval(xi).scale((1.0 + tau).ln().sin()))),
        );
        let strip = ParameterStrip::new(0.0, 0.0, log_tau_grid(0.0, 3.0, 4).unwrap(), vec![0.0]).unwrap();
        let v = membership_by_derivative_decay(&a, 0.5, &strip, &small_grid(), &[1.0, 3.0]).unwrap();
        assert!(!v.pass);
        assert!(v.limit.is_none());
    }

    #[test]
    fn tau_independent_passes_with_itself() {
        let strip = ParameterStrip::new(0.0, 0.0, vec![1.0, 10.0, 100.0], vec![0.0]).unwrap();
        let v = membership_by_derivative_decay(&catalog::hardy(), 0.5, &strip, &small_grid(), &[-1.0, 0.0, 2.0])
            .unwrap();
        assert!(v.pass);
        let lim = v.limit.unwrap();
        assert!((lim.value(0, 1, 0)[(0, 0)].re - 1.0).abs() < 1e-12);
        assert!(lim.value(0, 0, 0)[(0, 0)].norm() < 1e-12);
    }

    #[test]
    fn asymptotic_sum_of_brackets() {
        let comps: Vec<SymbolExpr> = (0..5).map(|k| catalog::bessel(-(k as f64))).collect();
        let strip = ParameterStrip::new(0.0, 0.0, vec![1.0], vec![0.0]).unwrap();
        let grid = CircleGrid::square(16, 1).unwrap();
        let s = asymptotic_sum(&comps, &strip, &grid).unwrap();
        for (k, c) in s.contributions.iter().enumerate().skip(1) {
            assert!(*c <= 0.5f64.powi(k as i32) + 1e-12, "k={k}: {c}");
        }
        // remainder past ℓ = 2 is of order −2
        let head = SymbolExpr::sum(vec![
            (C64::new(1.0, 0.0), excise(&comps[0], s.radii[0])),
            (C64::new(1.0, 0.0), excise(&comps[1], s.radii[1])),
        ])
        .unwrap();
        let rem = s.symbol.sub(&head).unwrap();
        let r2 = estimate_seminorm(&rem, SeminormSpec::order(-2.0), &strip, &grid).unwrap();
        assert!(r2 <= 2.0, "{r2}");
    }

    #[test]
    fn asymptotic_sum_rejects_gaps_and_handles_zero() {
        let strip = ParameterStrip::new(0.0, 0.0, vec![1.0], vec![0.0]).unwrap();
        let grid = CircleGrid::new(8, 3, 1, 1).unwrap();
        let bad = [catalog::bessel(0.0), catalog::bessel(-2.0)];
        assert!(matches!(asymptotic_sum(&bad, &strip, &grid), Err(PsidoError::OrderGapInvalid(_))));
        let zeros = [SymbolExpr::zero((1, 1)), SymbolExpr::zero((1, 1))];
        let s = asymptotic_sum(&zeros, &strip, &grid).unwrap();
        assert!(s.symbol.eval(0.0, 2.0, 1.0, 0.0).unwrap()[(0, 0)].norm() == 0.0);
    }

    #[test]
    fn single_component_is_only_excised() {
        let strip = ParameterStrip::new(0.0, 0.0, vec![1.0, 5.0], vec![0.0]).unwrap();
        let grid = CircleGrid::square(8, 1).unwrap();
        let a = catalog::classical_phase();
        let s = asymptotic_sum(std::slice::from_ref(&a), &strip, &grid).unwrap();
        for xi in [2.0, 3.5, -7.0] {
            let d = s.symbol.eval(0.0, xi, 5.0, 0.3).unwrap() - a.eval(0.0, xi, 5.0, 0.3).unwrap();
            assert!(d.norm() < 1e-6);
        }
    }

    #[test]
    fn classical_phase_limit_decays() {
        let taus = [10.0, 31.6, 100.0, 316.0, 1000.0];
        let xis: Vec<f64> = (-64..=64).map(|k| k as f64).collect();
        let (d, slope) = limit_decay(&catalog::classical_phase(), &taus, 0.8, &xis, 4, 1.0).unwrap();
        assert!(slope <= -0.9, "{slope} {d:?}");
    }
}
