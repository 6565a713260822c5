//! Expansion at the north-pole `(ξ, τ) = (0, 1)` of the upper semicircle.
//!
//! A function `â(x, φ, ρ, θ)` on the punctured semicircle (polar angle `ρ`
//! from the pole, side `φ = ±1`) with `â ~ Σ ρ^j â_j(x, φ, θ)`.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::sync::Arc;

use crate::error::{PsidoError, Result};
use crate::jet::{CMatrix, Jet, MatJet, C64};
use crate::symbol::excision::{chi, chi_jet};
use crate::symbol::expr::{JetEval, SymbolExpr};
use crate::symbol::principal::{CosphereEval, HomogComponent};

/// `(x, φ, ρ-jet, θ) ↦ matrix jet` in the polar angle.
pub type PolarEval = Arc<dyn Fn(f64, f64, &Jet, f64) -> MatJet + Send + Sync>;

pub const RICHARDSON_RHO0: f64 = 0.4;
pub const RICHARDSON_LEVELS: usize = 8;
pub const SLOPE_RHOS: [f64; 3] = [0.1, 0.05, 0.025];
pub const SLOPE_SLACK: f64 = 0.1;
const SINGULAR_TOL: f64 = 1e-10;

/// Points `(x, φ, θ)` at which expansions are certified.
#[derive(Debug, Clone)]
pub struct TaylorProbes {
    pub xs: Vec<f64>,
    pub thetas: Vec<f64>,
}

impl Default for TaylorProbes {
    fn default() -> Self {
        TaylorProbes { xs: vec![0.0, 1.3, 4.1], thetas: vec![0.0, 1.0, 2.5] }
    }
}

impl TaylorProbes {
    pub fn with_thetas(thetas: Vec<f64>) -> Self {
        TaylorProbes { thetas, ..TaylorProbes::default() }
    }

    fn points(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.xs.iter().flat_map(move |&x| {
            [-1.0, 1.0]
                .into_iter()
                .flat_map(move |phi| self.thetas.iter().map(move |&t| (x, phi, t)))
        })
    }
}

#[derive(Clone)]
pub struct TaylorData {
    shape: (usize, usize),
    evaluator: PolarEval,
    coefficients: Vec<CosphereEval>,
    depth: usize,
    remainder_slopes: Vec<f64>,
    leading_vanishes: bool,
}

impl fmt::Debug for TaylorData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TaylorData")
            .field("shape", &self.shape)
            .field("depth", &self.depth)
            .field("remainder_slopes", &self.remainder_slopes)
            .finish_non_exhaustive()
    }
}

impl TaylorData {
    pub fn shape(&self) -> (usize, usize) {
        self.shape
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Fitted remainder exponents, one per level `ℓ ≤ depth` (infinite when the
    /// remainder is below rounding).
    pub fn remainder_slopes(&self) -> &[f64] {
        &self.remainder_slopes
    }

    pub fn evaluator(&self) -> PolarEval {
        self.evaluator.clone()
    }

    pub fn eval(&self, x: f64, phi: f64, rho: f64, theta: f64) -> CMatrix {
        (self.evaluator)(x, phi, &Jet::constant(rho, 1), theta).value().clone()
    }

    /// `â_j(x, φ, θ)`; zero beyond the depth.
    pub fn coefficient(&self, j: usize, x: f64, phi: f64, theta: f64) -> CMatrix {
        match self.coefficients.get(j) {
            Some(c) => c(x, phi, theta),
            None => CMatrix::zeros(self.shape.0, self.shape.1),
        }
    }

    pub fn coefficient_evaluator(&self, j: usize) -> Option<CosphereEval> {
        self.coefficients.get(j).cloned()
    }

    pub fn leading_vanishes(&self) -> bool {
        self.leading_vanishes
    }

    /// `χ(ξ/c) â_0(x, sign ξ, θ)`, the τ-independent limit of the homogeneous extension.
    pub fn leading_fixed_symbol(&self, excision: f64) -> SymbolExpr {
        let a0 = self.coefficients[0].clone();
        let a0p = a0.clone();
        let principal = HomogComponent::from_fn(0.0, move |x, xi, _, theta| {
            a0p(x, if xi >= 0.0 { 1.0 } else { -1.0 }, theta)
        });
        let symbol: JetEval = Arc::new(move |x, xi, _, theta| {
            let c = chi_jet(xi, excision);
            let phi = if xi.value().re >= 0.0 { 1.0 } else { -1.0 };
            MatJet::from_scalar(&c, &a0(x, phi, theta))
        });
        SymbolExpr::fixed("lim(taylor)", 0.0, self.shape, true, principal, symbol)
    }
}

/// Limit `ρ → 0` of `f(ρ)` by Richardson extrapolation at `ρ0 2^{−m}`.
pub fn pole_limit(f: impl Fn(f64) -> CMatrix) -> CMatrix {
    let samples: Vec<CMatrix> = (0..RICHARDSON_LEVELS)
        .map(|m| f(RICHARDSON_RHO0 / 2f64.powi(m as i32)))
        .collect();
    richardson(samples)
}

/// Neville-style table for `g(ρ) = g0 + g1 ρ + …` sampled at halving steps.
fn richardson(mut t: Vec<CMatrix>) -> CMatrix {
    let n = t.len();
    for k in 1..n {
        let f = 2f64.powi(k as i32);
        for m in (k..n).rev() {
            t[m] = (&t[m] * C64::new(f, 0.0) - &t[m - 1]) / C64::new(f - 1.0, 0.0);
        }
    }
    t.pop().expect("nonempty table")
}

fn richardson_coefficients(eval: &PolarEval, depth: usize, x: f64, phi: f64, theta: f64) -> Vec<CMatrix> {
    let rhos: Vec<f64> = (0..RICHARDSON_LEVELS)
        .map(|m| RICHARDSON_RHO0 / 2f64.powi(m as i32))
        .collect();
    let vals: Vec<CMatrix> = rhos
        .iter()
        .map(|&r| eval(x, phi, &Jet::constant(r, 1), theta).value().clone())
        .collect();
    let mut coeffs: Vec<CMatrix> = Vec::with_capacity(depth + 1);
    for j in 0..=depth {
        let g: Vec<CMatrix> = rhos
            .iter()
            .zip(&vals)
            .map(|(&r, v)| {
                let mut rem = v.clone();
                for (i, c) in coeffs.iter().enumerate() {
                    rem -= c * C64::new(r.powi(i as i32), 0.0);
                }
                rem / C64::new(r.powi(j as i32), 0.0)
            })
            .collect();
        coeffs.push(richardson(g));
    }
    coeffs
}

fn slope_fit(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let num: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    num / den
}

/// Worst fitted remainder slope at level `ℓ` over the probes.
fn remainder_slope(
    eval: &PolarEval,
    coefficients: &[CosphereEval],
    level: usize,
    probes: &TaylorProbes,
) -> f64 {
    let mut worst = f64::INFINITY;
    for (x, phi, theta) in probes.points() {
        let cs: Vec<CMatrix> = coefficients[..=level].iter().map(|c| c(x, phi, theta)).collect();
        let scale = cs[0].norm().max(1.0);
        let mut lx = Vec::new();
        let mut ly = Vec::new();
        for &r in &SLOPE_RHOS {
            let v = eval(x, phi, &Jet::constant(r, 1), theta).value().clone();
            let mut rem = v;
            for (i, c) in cs.iter().enumerate() {
                rem -= c * C64::new(r.powi(i as i32), 0.0);
            }
            lx.push(r.ln());
            ly.push(rem.norm());
        }
        // remainders at rounding level carry no slope information
        if ly.iter().all(|&y| y < 1e-11 * scale) {
            continue;
        }
        let ly: Vec<f64> = ly.iter().map(|y| y.max(1e-300).ln()).collect();
        worst = worst.min(slope_fit(&lx, &ly));
    }
    worst
}

/// Extract `â_0 … â_L` and certify remainder slopes `≥ ℓ + 1 − 0.1`.
pub fn taylor_expand_northpole(
    evaluator: PolarEval,
    shape: (usize, usize),
    depth: usize,
    probes: &TaylorProbes,
) -> Result<TaylorData> {
    let mut coefficients: Vec<CosphereEval> = Vec::with_capacity(depth + 1);
    for j in 0..=depth {
        let e = evaluator.clone();
        coefficients.push(Arc::new(move |x, phi, theta| {
            richardson_coefficients(&e, j, x, phi, theta).pop().expect("depth + 1 entries")
        }));
    }
    finish(evaluator, shape, coefficients, probes)
}

/// Taylor data with coefficients known in closed form.
pub fn taylor_from_coefficients(
    evaluator: PolarEval,
    shape: (usize, usize),
    coefficients: Vec<CosphereEval>,
    probes: &TaylorProbes,
) -> Result<TaylorData> {
    finish(evaluator, shape, coefficients, probes)
}

fn finish(
    evaluator: PolarEval,
    shape: (usize, usize),
    coefficients: Vec<CosphereEval>,
    probes: &TaylorProbes,
) -> Result<TaylorData> {
    let depth = coefficients.len() - 1;
    let mut slopes = Vec::with_capacity(depth + 1);
    for level in 0..=depth {
        let s = remainder_slope(&evaluator, &coefficients, level, probes);
        if s < level as f64 + 1.0 - SLOPE_SLACK {
            return Err(PsidoError::ExpansionDiverges { level, slope: s });
        }
        slopes.push(s);
    }
    let leading_vanishes = probes
        .points()
        .all(|(x, phi, theta)| coefficients[0](x, phi, theta).norm() < 1e-9);
    Ok(TaylorData { shape, evaluator, coefficients, depth, remainder_slopes: slopes, leading_vanishes })
}

/// Polar angle from the pole as a jet in ξ; requires `(ξ0, τ) != 0`.
pub fn polar_angle_jet(xi: &Jet, tau: f64) -> Jet {
    let x0 = xi.value().re;
    let abs = xi.scale(if x0 >= 0.0 { 1.0 } else { -1.0 });
    if tau > x0.abs() {
        abs.scale(1.0 / tau).atan()
    } else {
        // ρ = π/2 − atan(τ/|ξ|), stable near the equator
        (&abs.recip().scale(tau)).atan().scale(-1.0).add_scalar(FRAC_PI_2)
    }
}

/// `a(x, ξ, τ, θ) = χ(ξ/c) â(x, sign ξ, ρ(ξ, τ), θ)`, order 0.
pub fn homog_extend(taylor: &TaylorData, excision: f64) -> SymbolExpr {
    let t = taylor.clone();
    let (r, c) = taylor.shape();
    let symbol: JetEval = Arc::new(move |x, xi, tau, theta| {
        let ch = chi_jet(xi, excision);
        if ch.coeffs().iter().all(|v| v.norm() == 0.0) {
            return MatJet::zeros(r, c, xi.len());
        }
        let phi = if xi.value().re >= 0.0 { 1.0 } else { -1.0 };
        let rho = polar_angle_jet(xi, tau);
        (t.evaluator)(x, phi, &rho, theta).scale_jet(&ch)
    });
    let _ = chi;
    SymbolExpr::taylor_node("taylor", Arc::new(taylor.clone()), excision, true, symbol)
}

fn smallest_singular(m: &CMatrix) -> f64 {
    m.clone().singular_values().iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Pointwise inverse with formal-series coefficients.
pub fn invert_taylor(taylor: &TaylorData, probes: &TaylorProbes) -> Result<TaylorData> {
    let (r, c) = taylor.shape();
    if r != c {
        return Err(PsidoError::ShapeMismatch(format!("cannot invert a {r}x{c} expansion")));
    }
    for (x, phi, theta) in probes.points() {
        if smallest_singular(&taylor.coefficient(0, x, phi, theta)) < SINGULAR_TOL {
            return Err(PsidoError::SingularLeadingCoefficient);
        }
    }
    for (x, phi, theta) in probes.points() {
        for i in 1..=32 {
            let rho = FRAC_PI_2 * i as f64 / 32.0;
            if smallest_singular(&taylor.eval(x, phi, rho, theta)) < SINGULAR_TOL {
                return Err(PsidoError::SingularAtPoint { x, phi, rho, theta });
            }
        }
    }
    let depth = taylor.depth();
    let base = taylor.clone();
    let mut coefficients: Vec<CosphereEval> = Vec::with_capacity(depth + 1);
    for j in 0..=depth {
        let b = base.clone();
        coefficients.push(Arc::new(move |x, phi, theta| {
            let a: Vec<CMatrix> = (0..=j).map(|i| b.coefficient(i, x, phi, theta)).collect();
            let series = MatJet::from_coeffs(a);
            series
                .try_inverse()
                .map(|inv| inv.coeffs()[j].clone())
                .unwrap_or_else(|| CMatrix::from_element(r, r, C64::new(f64::NAN, 0.0)))
        }));
    }
    let e = taylor.evaluator();
    let evaluator: PolarEval = Arc::new(move |x, phi, rho, theta| {
        e(x, phi, rho, theta)
            .try_inverse()
            .unwrap_or_else(|| MatJet::constant(CMatrix::from_element(r, r, C64::new(f64::NAN, 0.0)), rho.len()))
    });
    finish(evaluator, (r, r), coefficients, probes)
}

/// `lim_{ρ→0}` of the principal symbol, using the Taylor data when present.
pub fn angular_symbol(a: &SymbolExpr) -> Result<crate::symbol::principal::AngularSymbol> {
    a.angular().ok_or(PsidoError::NoPrincipalData)
}
