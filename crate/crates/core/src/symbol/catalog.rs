//! Named closed-form symbols used by tests, the acceptance suite and the CLI.

use std::sync::Arc;

use crate::error::{PsidoError, Result};
use crate::jet::{CMatrix, Jet, MatJet, C64};
use crate::symbol::excision::hardy_step_jet;
use crate::symbol::expr::{JetEval, SymbolExpr};
use crate::symbol::principal::HomogComponent;
use crate::symbol::taylor::{homog_extend, taylor_expand_northpole, PolarEval, TaylorProbes};

pub const DEFAULT_TRUNCATION: usize = 3;

pub const IDS: &[&str] = &[
    "identity",
    "shift",
    "bessel1",
    "bessel-inv",
    "param-bessel-inv",
    "classical-phase",
    "resolvent-reduced",
    "resolvent-reduced-perturbed",
    "toeplitz-model",
    "toeplitz-model-perturbed",
    "hardy",
    "rotated-projection",
    "north-pole-rho",
    "taylor-model",
];

/// Parameters that catalog entries may depend on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CatalogParams {
    pub eps: f64,
    pub mu: f64,
}

impl Default for CatalogParams {
    fn default() -> Self {
        CatalogParams { eps: 0.1, mu: 1.0 }
    }
}

pub fn lookup(id: &str, params: CatalogParams) -> Result<SymbolExpr> {
    Ok(match id {
        "identity" => SymbolExpr::identity(1),
        "shift" => shift(),
        "bessel1" => bessel(1.0),
        "bessel-inv" => bessel(-1.0),
        "param-bessel-inv" => param_bessel(-1.0),
        "classical-phase" => classical_phase(),
        "resolvent-reduced" => resolvent_reduced(),
        "resolvent-reduced-perturbed" => resolvent_reduced_perturbed(params.eps),
        "toeplitz-model" => toeplitz_model(),
        "toeplitz-model-perturbed" => toeplitz_model_perturbed(params.eps),
        "hardy" => hardy(),
        "rotated-projection" => rotated_projection(),
        "north-pole-rho" => north_pole_rho(),
        "taylor-model" => taylor_model(),
        other => {
            // "-id" is the negated entry
            if let Some(rest) = other.strip_prefix('-') {
                if IDS.contains(&rest) {
                    return Ok(lookup(rest, params)?.scale(C64::new(-1.0, 0.0)).with_name(other));
                }
            }
            return Err(PsidoError::CatalogMiss(other.to_string()));
        }
    })
}

fn scalar_eval(f: impl Fn(f64, &Jet, f64, f64) -> Jet + Send + Sync + 'static) -> JetEval {
    Arc::new(move |x, xi, tau, theta| MatJet::scalar(&f(x, xi, tau, theta)))
}

fn scalar_principal(degree: f64, f: impl Fn(f64, f64, f64, f64) -> C64 + Send + Sync + 'static) -> HomogComponent {
    HomogComponent::from_fn(degree, move |x, xi, tau, theta| CMatrix::from_element(1, 1, f(x, xi, tau, theta)))
}

/// `⟨ξ⟩^μ = (1 + ξ²)^{μ/2}` as a jet.
pub fn bracket_jet(xi: &Jet, mu: f64) -> Jet {
    (xi * xi).add_scalar(1.0).powf(0.5 * mu)
}

/// `⟨ξ, τ⟩^μ`.
pub fn param_bracket_jet(xi: &Jet, tau: f64, mu: f64) -> Jet {
    (xi * xi).add_scalar(1.0 + tau * tau).powf(0.5 * mu)
}

/// `e^{ix}`.
pub fn shift() -> SymbolExpr {
    SymbolExpr::classical(
        "e^{ix}",
        0.0,
        (1, 1),
        true,
        false,
        scalar_principal(0.0, |x, _, _, _| C64::from_polar(1.0, x)),
        scalar_eval(|x, xi, _, _| Jet::constant(C64::from_polar(1.0, x), xi.len())),
    )
}

/// Multiplication by the trigonometric polynomial `Σ c_k e^{ikx}`.
pub fn trig_polynomial(coeffs: &[(i64, C64)]) -> SymbolExpr {
    let c: Arc<Vec<(i64, C64)>> = Arc::new(coeffs.to_vec());
    let value = move |x: f64| c.iter().map(|&(k, ck)| ck * C64::from_polar(1.0, k as f64 * x)).sum::<C64>();
    let v2 = value.clone();
    SymbolExpr::classical(
        "trig-polynomial",
        0.0,
        (1, 1),
        coeffs.iter().any(|&(k, _)| k != 0),
        false,
        scalar_principal(0.0, move |x, _, _, _| value(x)),
        scalar_eval(move |x, xi, _, _| Jet::constant(v2(x), xi.len())),
    )
}

/// Parameter-independent `⟨ξ⟩^μ`.
pub fn bessel(mu: f64) -> SymbolExpr {
    SymbolExpr::fixed(
        format!("<xi>^{mu}"),
        mu,
        (1, 1),
        false,
        scalar_principal(mu, move |_, xi, _, _| C64::new(xi.abs().powf(mu), 0.0)),
        scalar_eval(move |_, xi, _, _| bracket_jet(xi, mu)),
    )
}

/// `⟨ξ, τ⟩^μ`, classical of order μ.
pub fn param_bessel(mu: f64) -> SymbolExpr {
    SymbolExpr::classical(
        format!("<xi,tau>^{mu}"),
        mu,
        (1, 1),
        false,
        true,
        scalar_principal(mu, move |_, xi, tau, _| C64::new((xi * xi + tau * tau).sqrt().powf(mu), 0.0)),
        scalar_eval(move |_, xi, tau, _| param_bracket_jet(xi, tau, mu)),
    )
}

/// `τ e^{iθ} ⟨ξ, τ⟩^{-1}`.
pub fn classical_phase() -> SymbolExpr {
    SymbolExpr::classical(
        "tau e^{i theta}/<xi,tau>",
        0.0,
        (1, 1),
        false,
        true,
        scalar_principal(0.0, |_, xi, tau, theta| C64::from_polar(tau / (xi * xi + tau * tau).sqrt(), theta)),
        scalar_eval(|_, xi, tau, theta| param_bracket_jet(xi, tau, -1.0).scale(C64::from_polar(tau, theta))),
    )
}

/// `⟨ξ,τ⟩^{-1}(τ e^{iθ} − ⟨ξ⟩)`, the resolvent of `⟨D⟩` after order reduction.
pub fn resolvent_reduced() -> SymbolExpr {
    let rest = SymbolExpr::leibniz(&param_bessel(-1.0), &bessel(1.0), DEFAULT_TRUNCATION)
        .expect("scalar shapes compose");
    classical_phase()
        .sub(&rest)
        .expect("scalar shapes match")
        .with_name("resolvent-reduced")
}

/// `ε e^{ix} ⟨ξ, τ⟩^{-1}`.
pub fn perturbation(eps: f64) -> SymbolExpr {
    SymbolExpr::classical(
        format!("{eps} e^{{ix}}/<xi,tau>"),
        -1.0,
        (1, 1),
        true,
        true,
        scalar_principal(-1.0, move |x, xi, tau, _| C64::from_polar(eps / (xi * xi + tau * tau).sqrt(), x)),
        scalar_eval(move |x, xi, tau, _| param_bracket_jet(xi, tau, -1.0).scale(C64::from_polar(eps, x))),
    )
}

pub fn resolvent_reduced_perturbed(eps: f64) -> SymbolExpr {
    resolvent_reduced()
        .add(&perturbation(eps))
        .expect("scalar shapes match")
        .with_name("resolvent-reduced-perturbed")
}

/// `τ e^{iθ} + iξ`, classical of order 1.
pub fn toeplitz_model() -> SymbolExpr {
    SymbolExpr::classical(
        "tau e^{i theta} + i xi",
        1.0,
        (1, 1),
        false,
        true,
        scalar_principal(1.0, |_, xi, tau, theta| C64::from_polar(tau, theta) + C64::new(0.0, xi)),
        scalar_eval(|_, xi, tau, theta| xi.scale(C64::new(0.0, 1.0)).add_scalar(C64::from_polar(tau, theta))),
    )
}

pub fn toeplitz_model_perturbed(eps: f64) -> SymbolExpr {
    toeplitz_model()
        .add(&shift().scale(C64::new(eps, 0.0)))
        .expect("scalar shapes match")
        .with_name("toeplitz-model-perturbed")
}

/// Multiplier `ψ(ξ)`: 0 for `ξ ≤ −0.9`, 1 for `ξ ≥ −0.1`.
pub fn hardy() -> SymbolExpr {
    SymbolExpr::fixed(
        "hardy",
        0.0,
        (1, 1),
        false,
        scalar_principal(0.0, |_, xi, _, _| C64::new(if xi > 0.0 { 1.0 } else { 0.0 }, 0.0)),
        scalar_eval(|_, xi, _, _| hardy_step_jet(xi)),
    )
}

/// `u(x) u(x)*` with `u(x) = (cos x/2, sin x/2)`.
pub fn rotated_projection() -> SymbolExpr {
    let field = |x: f64| {
        let (s, c) = x.sin_cos();
        CMatrix::from_row_slice(
            2,
            2,
            &[
                C64::new(0.5 * (1.0 + c), 0.0),
                C64::new(0.5 * s, 0.0),
                C64::new(0.5 * s, 0.0),
                C64::new(0.5 * (1.0 - c), 0.0),
            ],
        )
    };
    SymbolExpr::classical(
        "rotated-projection",
        0.0,
        (2, 2),
        true,
        false,
        HomogComponent::from_fn(0.0, move |x, _, _, _| field(x)),
        Arc::new(move |x, xi, _, _| MatJet::constant(field(x), xi.len())),
    )
}

fn polar_scalar(f: impl Fn(&Jet, f64) -> Jet + Send + Sync + 'static) -> PolarEval {
    Arc::new(move |_, _, rho, theta| MatJet::scalar(&f(rho, theta)))
}

/// `χ(ξ) arccos(τ / |(ξ, τ)|)`, the homogeneous extension of `ρ`.
pub fn north_pole_rho() -> SymbolExpr {
    let t = taylor_expand_northpole(polar_scalar(|rho, _| rho.clone()), (1, 1), 2, &TaylorProbes::default())
        .expect("rho has an exact expansion");
    homog_extend(&t, 1.0).with_name("north-pole-rho")
}

/// Homogeneous extension of `cos ρ e^{iθ} − sin ρ`.
pub fn taylor_model() -> SymbolExpr {
    let t = taylor_expand_northpole(taylor_model_polar(), (1, 1), 2, &TaylorProbes::default())
        .expect("entire function of rho");
    homog_extend(&t, 1.0).with_name("taylor-model")
}

pub fn taylor_model_polar() -> PolarEval {
    polar_scalar(|rho, theta| {
        let (s, c) = rho.sin_cos();
        &c.scale(C64::from_polar(1.0, theta)) - &s
    })
}
