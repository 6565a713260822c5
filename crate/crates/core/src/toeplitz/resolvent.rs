use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::core_model::grid::x_points;
use crate::core_model::strip::{sample_lambda, Lambda, ParameterStrip};
use crate::ellipticity::EllipticityConfig;
use crate::error::{PsidoError, Result};
use crate::fit::loglog_fit;
use crate::jet::{CMatrix, MatJet, C64};
use crate::quantize::{quantize, spectral_norm};
use crate::symbol::catalog::param_bracket_jet;
use crate::symbol::expr::SymbolExpr;
use crate::symbol::principal::HomogComponent;

use super::basis::range_basis;
use super::parametrix::{solve, OperatorFamily, ToeplitzProblem};
use super::projection::{OrderReductionPair, ProjectionSymbol};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolventRow {
    pub tau: f64,
    pub theta: f64,
    /// `|z| = τ^μ`.
    pub z_abs: f64,
    /// `‖(z − A_P)⁻¹‖` on `H^s(range P)`.
    pub inverse_norm: f64,
    pub residual_left: f64,
    pub residual_right: f64,
    pub oracle_gap: Option<f64>,
    /// `‖(z − A_P)⁻¹‖_{H^s → H^{s+μ}}`.
    pub domain_gain: f64,
}

/// Power-law fit `‖(z − A_P)⁻¹‖ ≈ C |z|^slope` along one ray.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RayFit {
    pub theta: f64,
    pub slope: f64,
    pub c_fit: f64,
    /// Decades of `|z|` covered by the fitted samples.
    pub decades: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolventRecord {
    pub mu: f64,
    pub sobolev_s: f64,
    pub tau_threshold: f64,
    pub rows: Vec<ResolventRow>,
    pub fits: Vec<RayFit>,
    /// Largest `domain_gain` for τ ≥ τ₀.
    pub domain_gain: f64,
    /// Largest ratio of `domain_gain` to its value at the first τ ≥ τ₀ on the same ray.
    pub domain_gain_ratio: f64,
}

impl ResolventRecord {
    /// Worst fitted slope over the rays.
    pub fn fitted_slope(&self) -> f64 {
        self.fits.iter().map(|f| f.slope).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn c_fit(&self) -> f64 {
        self.fits.iter().map(|f| f.c_fit).fold(0.0, f64::max)
    }

    pub fn covers_two_decades(&self) -> bool {
        !self.fits.is_empty() && self.fits.iter().all(|f| f.decades >= 2.0 - 1e-9)
    }

    /// Columns `tau, theta, inverse_norm, residual_left, residual_right, oracle_gap`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| PsidoError::Io(std::io::Error::other(e));
        out.write_record(["tau", "theta", "inverse_norm", "residual_left", "residual_right", "oracle_gap"])
            .map_err(io)?;
        for r in &self.rows {
            out.write_record([
                format!("{:?}", r.tau),
                format!("{:?}", r.theta),
                format!("{:?}", r.inverse_norm),
                format!("{:?}", r.residual_left),
                format!("{:?}", r.residual_right),
                r.oracle_gap.map_or(String::new(), |g| format!("{g:?}")),
            ])
            .map_err(io)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn eigenvalues(m: &CMatrix) -> Vec<C64> {
    match m.nrows() {
        0 => vec![],
        1 => vec![m[(0, 0)]],
        _ => nalgebra::linalg::Schur::new(m.clone())
            .eigenvalues()
            .map(|v| v.iter().copied().collect())
            .unwrap_or_default(),
    }
}

/// Eigenvalues of `p a p` on `range p` at a cosphere point.
fn compressed_spectrum(a: &HomogComponent, p: &ProjectionSymbol, x: f64, phi: f64) -> Vec<C64> {
    let q = range_basis(&p.principal_at(x, phi, 0.0, 0.0));
    if q.ncols() == 0 {
        return vec![];
    }
    eigenvalues(&(q.adjoint() * a.eval(x, phi, 0.0, 0.0) * q))
}

fn cosphere_points(x_dep: bool) -> Vec<(f64, f64)> {
    let xs = if x_dep { x_points(32) } else { vec![0.0] };
    xs.into_iter().flat_map(|x| [(x, 1.0), (x, -1.0)]).collect()
}

/// First cosphere point where `p a p` has spectrum in the closed sector.
fn spectral_hypothesis(a: &SymbolExpr, p: &ProjectionSymbol, strip: &ParameterStrip) -> Result<()> {
    let pr = a.principal().ok_or(PsidoError::NoPrincipalData)?;
    for (x, phi) in cosphere_points(a.is_x_dependent() || p.symbol.is_x_dependent()) {
        for ev in compressed_spectrum(pr, p, x, phi) {
            if strip.sector_contains(ev, 1e-9) {
                return Err(PsidoError::SpectralHypothesisFailed { x, phi, eigenvalue: format!("{ev}") });
            }
        }
    }
    Ok(())
}

/// `τ^μ e^{iθ} ⟨ξ, τ⟩^{−μ}` times the identity.
fn reduced_spectral_parameter(mu: f64, n: usize) -> SymbolExpr {
    let id = CMatrix::identity(n, n);
    let id2 = id.clone();
    SymbolExpr::classical(
        format!("tau^{mu} e^{{i theta}}/<xi,tau>^{mu}"),
        0.0,
        (n, n),
        false,
        true,
        HomogComponent::from_fn(0.0, move |_, xi, tau, theta| {
            &id * C64::from_polar(tau.powf(mu) / (xi * xi + tau * tau).powf(0.5 * mu), theta)
        }),
        Arc::new(move |_, xi, tau, theta| {
            MatJet::from_scalar(&param_bracket_jet(xi, tau, -mu).scale(C64::from_polar(tau.powf(mu), theta)), &id2)
        }),
    )
}

/// Resolvent `(z − P A P)⁻¹`, `z = τ^μ e^{iθ}`, on `range P` via the Toeplitz
/// parametrix of `P(τ^μ e^{iθ} − A)P`.
pub fn resolvent_pipeline(
    a: &SymbolExpr,
    p: &ProjectionSymbol,
    cfg: &EllipticityConfig,
    sobolev_s: f64,
) -> Result<ResolventRecord> {
    let mu = a.order();
    if a.is_tau_dependent() || !(mu > 0.0) || mu.fract() != 0.0 {
        return Err(PsidoError::NotInCalculus(format!(
            "resolvent needs a parameter-independent symbol of positive integer order, got `{}` of order {mu}",
            a.name()
        )));
    }
    let n = a.shape().0;
    if p.fiber() != n {
        return Err(PsidoError::ShapeMismatch(format!("projection on C^{} for a {n}x{n} symbol", p.fiber())));
    }
    spectral_hypothesis(a, p, &cfg.strip)?;

    let rs = OrderReductionPair::new(mu, n)?;
    let ra = SymbolExpr::leibniz(&rs.r, a, cfg.truncation)?;
    let reduced = reduced_spectral_parameter(mu, n).sub(&ra)?.with_name("reduced resolvent");
    let sym = a.clone();
    let k_max = cfg.k_max;
    let operator: OperatorFamily = Arc::new(move |l: Lambda| {
        let m = quantize(&sym, l, k_max)?.matrix;
        let d = m.nrows();
        Ok(CMatrix::identity(d, d) * C64::from_polar(l.tau.powf(mu), l.theta) - m)
    });
    let problem = ToeplitzProblem { reduced, operator, order: mu, p0: p.clone(), p1: p.clone(), reduction: Some(rs) };
    let tp = solve(&problem, cfg, sobolev_s)?;

    let rows: Vec<ResolventRow> = tp
        .rows
        .iter()
        .map(|r| ResolventRow {
            tau: r.tau,
            theta: r.theta,
            z_abs: r.tau.powf(mu),
            inverse_norm: r.inverse_norm,
            residual_left: r.residual_left,
            residual_right: r.residual_right,
            oracle_gap: r.oracle_gap,
            domain_gain: r.domain_gain,
        })
        .collect();
    let mut fits = Vec::new();
    let mut gain: f64 = 0.0;
    let mut ratio: f64 = 0.0;
    for &theta in cfg.strip.theta_samples() {
        let mut ray: Vec<&ResolventRow> =
            rows.iter().filter(|r| r.theta == theta && r.tau >= tp.tau_threshold).collect();
        ray.sort_by(|l, r| l.tau.total_cmp(&r.tau));
        if ray.len() >= 2 {
            let zs: Vec<f64> = ray.iter().map(|r| r.z_abs).collect();
            let ns: Vec<f64> = ray.iter().map(|r| r.inverse_norm).collect();
            let (slope, c) = loglog_fit(&zs, &ns);
            let decades = (zs[zs.len() - 1] / zs[0]).log10();
            fits.push(RayFit { theta, slope, c_fit: c.exp(), decades });
        }
        if let Some(first) = ray.first() {
            let top = ray.iter().map(|r| r.domain_gain).fold(0.0, f64::max);
            gain = gain.max(top);
            ratio = ratio.max(top / first.domain_gain);
        }
    }
    Ok(ResolventRecord {
        mu,
        sobolev_s,
        tau_threshold: tp.tau_threshold,
        rows,
        fits,
        domain_gain: gain,
        domain_gain_ratio: ratio,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemarkVerdict {
    /// `(τ, θ, relative residual)` per grid point.
    pub rows: Vec<(f64, f64, f64)>,
    pub max_residual: f64,
    /// `p a p` on `range p` has no spectrum in the sector.
    pub hypothesis_projected: bool,
    /// `c = p a p + (1 − p) b (1 − p)` has no spectrum in the sector.
    pub hypothesis_combined: bool,
    pub equivalent: bool,
    pub pass: bool,
}

/// `P(z − A)P + (1 − P)(z − B)(1 − P) = z − C`, `C = PAP + (1 − P)B(1 − P)`,
/// on the truncated space at every grid point, with `z = τ^μ e^{iθ}`.
pub fn remark_identity_check(
    a: &SymbolExpr,
    b_aux: &SymbolExpr,
    p: &ProjectionSymbol,
    strip: &ParameterStrip,
    k_max: usize,
) -> Result<RemarkVerdict> {
    let mu = a.order();
    if (b_aux.order() - mu).abs() > 1e-12 || a.shape() != b_aux.shape() {
        return Err(PsidoError::ShapeMismatch("auxiliary operator must match order and shape".into()));
    }
    let l0 = Lambda::new(1.0, 0.0);
    let am = quantize(a, l0, k_max)?.matrix;
    let bm = quantize(b_aux, l0, k_max)?.matrix;
    let pm = p.operator(l0, k_max)?.matrix;
    let d = am.nrows();
    let id = CMatrix::identity(d, d);
    let qm = &id - &pm;
    let c = &pm * &am * &pm + &qm * &bm * &qm;
    let rows: Vec<(f64, f64, f64)> = sample_lambda(strip)
        .into_iter()
        .map(|l| {
            let z = C64::from_polar(l.tau.powf(mu), l.theta);
            let zi = &id * z;
            let lhs = &pm * (&zi - &am) * &pm + &qm * (&zi - &bm) * &qm;
            let rhs = &zi - &c;
            let res = spectral_norm(&(lhs - &rhs)) / spectral_norm(&rhs).max(1.0);
            (l.tau, l.theta, res)
        })
        .collect();
    let max_residual = rows.iter().map(|r| r.2).fold(0.0, f64::max);

    let pa = a.principal().ok_or(PsidoError::NoPrincipalData)?;
    let pb = b_aux.principal().ok_or(PsidoError::NoPrincipalData)?;
    let pp = p.symbol.principal().ok_or(PsidoError::NoPrincipalData)?;
    let x_dep = a.is_x_dependent() || b_aux.is_x_dependent() || p.symbol.is_x_dependent();
    let mut hyp_p = true;
    let mut hyp_c = true;
    for (x, phi) in cosphere_points(x_dep) {
        if compressed_spectrum(pa, p, x, phi).iter().any(|e| strip.sector_contains(*e, 1e-9)) {
            hyp_p = false;
        }
        let pv = pp.eval(x, phi, 0.0, 0.0);
        let qv = CMatrix::identity(pv.nrows(), pv.nrows()) - &pv;
        let cv = &pv * pa.eval(x, phi, 0.0, 0.0) * &pv + &qv * pb.eval(x, phi, 0.0, 0.0) * &qv;
        if eigenvalues(&cv).iter().any(|e| strip.sector_contains(*e, 1e-9)) {
            hyp_c = false;
        }
    }
    Ok(RemarkVerdict {
        rows,
        max_residual,
        hypothesis_projected: hyp_p,
        hypothesis_combined: hyp_c,
        equivalent: hyp_p == hyp_c,
        pass: max_residual <= 1e-12,
    })
}
