use std::f64::consts::FRAC_PI_2;

use rayon::prelude::*;

use crate::core_model::grid::x_points;
use crate::core_model::seminorm::xi_samples;
use crate::core_model::strip::{equispaced, Lambda, ParameterStrip};
use crate::error::{PsidoError, Result};
use crate::fit::golden_min;
use crate::jet::CMatrix;
use crate::quantize::{doubling_certificate, quantize, Sigma3Certificate};
use crate::symbol::expr::{LimitFamily, SymbolExpr};
use crate::symbol::spectral::FieldCtx;

use super::report::{EllipticityReport, Flavor, Scan, Verdict, Witness};

/// Sampling and tolerance choices shared by the checks and the parametrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipticityConfig {
    pub strip: ParameterStrip,
    /// Frequency cutoff for σ₃ and for the ξ samples of (I).
    pub k_max: usize,
    /// (I) is tested on `|ξ| ≥ xi_cutoff`; the excision radius is twice this.
    pub xi_cutoff: f64,
    pub rho_min: f64,
    pub n_rho: usize,
    /// x samples for pointwise checks of x-dependent symbols.
    pub n_x: usize,
    pub sv_tol: f64,
    pub truncation: usize,
    pub depth: usize,
}

impl EllipticityConfig {
    pub fn new(strip: ParameterStrip, k_max: usize) -> Self {
        EllipticityConfig {
            strip,
            k_max,
            xi_cutoff: 0.5,
            rho_min: 1e-3,
            n_rho: 64,
            n_x: 32,
            sv_tol: 1e-6,
            truncation: 3,
            depth: 3,
        }
    }

    pub fn excision_radius(&self) -> f64 {
        2.0 * self.xi_cutoff
    }

    fn xs(&self, a: &SymbolExpr) -> Vec<f64> {
        if a.is_x_dependent() { x_points(self.n_x) } else { vec![0.0] }
    }
}

pub fn sigma_min(m: &CMatrix) -> f64 {
    if m.nrows() == 1 && m.ncols() == 1 {
        return m[(0, 0)].norm();
    }
    if m.iter().any(|v| !v.is_finite()) {
        return 0.0;
    }
    m.clone().singular_values().min()
}

fn bracket(xi: f64) -> f64 {
    (1.0 + xi * xi).sqrt()
}

/// (I) and (II) of the rough calculus.
pub fn check_rough(a: &SymbolExpr, mu: f64, cfg: &EllipticityConfig) -> Result<EllipticityReport> {
    square(a)?;
    let condition_one = rough_pointwise(a, mu, cfg)?;
    let (condition_two, cert) = limit_verdict("II", a, cfg)?;
    Ok(EllipticityReport {
        flavor: Flavor::Rough,
        verdicts: vec![condition_one, condition_two],
        sigma3_certificate: cert,
        xi_cutoff: cfg.xi_cutoff,
        strip: cfg.strip.clone(),
    })
}

fn square(a: &SymbolExpr) -> Result<()> {
    let (r, c) = a.shape();
    if r != c {
        return Err(PsidoError::ShapeMismatch(format!("ellipticity of a {r}x{c} symbol")));
    }
    Ok(())
}

fn rough_pointwise(a: &SymbolExpr, mu: f64, cfg: &EllipticityConfig) -> Result<Verdict> {
    let xis: Vec<f64> = xi_samples(cfg.k_max).into_iter().filter(|x| x.abs() >= cfg.xi_cutoff).collect();
    let nx = if a.is_x_dependent() { cfg.n_x.max(8) } else { 8 };
    let ctx = FieldCtx::new(nx, 1);
    let mut points = Vec::new();
    for &tau in cfg.strip.tau_samples() {
        for &theta in cfg.strip.theta_samples() {
            for &xi in &xis {
                points.push((xi, tau, theta));
            }
        }
    }
    let scan = points
        .par_iter()
        .map(|&(xi, tau, theta)| -> Result<Scan> {
            let vals = a.field(xi, tau, theta, &ctx)?.values(nx);
            let mut s = Scan::empty();
            let w = bracket(xi).powf(mu);
            for (j, v) in vals.iter().enumerate() {
                let x = ctx.xs()[j];
                // rank by the order-normalized singular value
                s.push(sigma_min(v) / w, 1.0, Witness::Point { x, xi, tau, theta });
            }
            Ok(s)
        })
        .try_reduce(Scan::empty, |l, r| Ok(l.merge(r)))?;
    let mut scan = scan;
    if let Some(Witness::Point { x, xi, tau, theta }) = scan.argmin {
        let w = |t: f64| bracket(t).powf(mu);
        let f = |t: f64| a.eval_with(&ctx, x, t, tau, theta).map(|m| sigma_min(&m) / w(t)).unwrap_or(f64::INFINITY);
        let (lo, hi) = if xi >= 0.0 {
            ((xi - 0.5).max(cfg.xi_cutoff), xi + 0.5)
        } else {
            (xi - 0.5, (xi + 0.5).min(-cfg.xi_cutoff))
        };
        let (xr, fr) = golden_min(f, lo, hi, 1e-10);
        scan.push(fr, 1.0, Witness::Point { x, xi: xr, tau, theta });
    }
    let v = Verdict::from_scan("I", cfg.sv_tol, scan);
    Ok(v)
}

/// σ₃ / (II): the quantized limit family is invertible and stable under doubling of K.
fn limit_verdict(
    name: &str,
    a: &SymbolExpr,
    cfg: &EllipticityConfig,
) -> Result<(Verdict, Option<Sigma3Certificate>)> {
    let theta0 = cfg.strip.theta_samples()[0];
    let lim = match a.limit_family() {
        Ok(l) => l,
        Err(e) => return Ok((Verdict::failed(name, Witness::Ray { theta: theta0 }, e.to_string()), None)),
    };
    if lim.is_zero {
        return Ok((Verdict::failed(name, Witness::Ray { theta: theta0 }, "limit family vanishes"), None));
    }
    limit_family_verdict(name, &lim, cfg)
}

pub fn limit_family_verdict(
    name: &str,
    lim: &LimitFamily,
    cfg: &EllipticityConfig,
) -> Result<(Verdict, Option<Sigma3Certificate>)> {
    let certs: Vec<(f64, Sigma3Certificate)> = cfg
        .strip
        .theta_samples()
        .par_iter()
        .map(|&theta| {
            doubling_certificate(cfg.k_max, |k| Ok(quantize(&lim.symbol, Lambda::new(1.0, theta), k)?.matrix))
                .map(|c| (theta, c))
        })
        .collect::<Result<_>>()?;
    let (theta_w, worst) = certs
        .iter()
        .min_by(|l, r| rank(&l.1).total_cmp(&rank(&r.1)))
        .cloned()
        .expect("strip has angles");
    let pass = certs.iter().all(|(_, c)| c.pass);
    let sigma = certs.iter().map(|(_, c)| c.sigma_k.min(c.sigma_2k)).fold(f64::INFINITY, f64::min);
    let v = Verdict {
        condition: name.to_string(),
        pass,
        constant: pass.then_some(1.0 / sigma),
        min_singular: sigma,
        witness: (!pass).then_some(Witness::Ray { theta: theta_w }),
        note: None,
    };
    Ok((v, Some(worst)))
}

/// Failing certificates rank first, then by smallest singular value.
fn rank(c: &Sigma3Certificate) -> f64 {
    let s = c.sigma_k.min(c.sigma_2k);
    if c.pass { s } else { s - 1e300 }
}

/// σ₁ on the pole-punctured semicircle, σ₂ at the pole, σ₃ on the limit family.
pub fn check_refined(a: &SymbolExpr, cfg: &EllipticityConfig) -> Result<EllipticityReport> {
    square(a)?;
    let p = a.principal().ok_or(PsidoError::NoPrincipalData)?.clone();
    let ang = a.angular().ok_or(PsidoError::NoPrincipalData)?;
    let xs = cfg.xs(a);
    let rhos = equispaced(cfg.rho_min, FRAC_PI_2, cfg.n_rho);
    let thetas = cfg.strip.theta_samples();

    let mut pts = Vec::new();
    for &x in &xs {
        for phi in [1.0, -1.0] {
            for &theta in thetas {
                pts.push((x, phi, theta));
            }
        }
    }
    let h = rhos.get(1).map_or(0.1, |r| r - rhos[0]);
    let s1 = pts
        .par_iter()
        .map(|&(x, phi, theta)| {
            let f = |rho: f64| sigma_min(&p.on_semicircle(x, phi, rho, theta));
            let mut s = Scan::empty();
            let mut best = (f64::INFINITY, rhos[0]);
            for &rho in &rhos {
                let v = f(rho);
                if v < best.0 {
                    best = (v, rho);
                }
                s.push(v, 1.0, Witness::Semicircle { x, phi, rho, theta });
            }
            // the grid minimum is refined so that zeros between samples are not missed
            let lo = (best.1 - h).max(cfg.rho_min);
            let hi = (best.1 + h).min(FRAC_PI_2);
            let (rho, v) = golden_min(f, lo, hi, 1e-12);
            s.push(v, 1.0, Witness::Semicircle { x, phi, rho, theta });
            s
        })
        .reduce(Scan::empty, Scan::merge);
    let principal = Verdict::from_scan("S1-principal", cfg.sv_tol, s1);

    let s2 = pts
        .iter()
        .map(|&(x, phi, theta)| {
            let mut s = Scan::empty();
            s.push(sigma_min(&ang.eval(x, phi, theta)), 1.0, Witness::Cosphere { x, phi, theta });
            s
        })
        .fold(Scan::empty(), Scan::merge);
    let angular = Verdict::from_scan("S1-angular", cfg.sv_tol, s2);

    let (limit, cert) = limit_verdict("S2-limit", a, cfg)?;
    Ok(EllipticityReport {
        flavor: Flavor::Refined,
        verdicts: vec![principal, angular, limit],
        sigma3_certificate: cert,
        xi_cutoff: cfg.xi_cutoff,
        strip: cfg.strip.clone(),
    })
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::symbol::catalog;

    fn cfg(theta_min: f64, theta_max: f64) -> EllipticityConfig {
        let strip = ParameterStrip::log_spaced(theta_min, theta_max, 0.0, 2.0, 2, 5).unwrap();
        EllipticityConfig::new(strip, 16)
    }

    #[test]
    fn reduced_resolvent_left_half_plane_passes() {
        let c = cfg(PI / 2.0, 1.5 * PI);
        let a = catalog::resolvent_reduced();
        let r = check_rough(&a, 0.0, &c).unwrap();
        assert!(r.passes(), "{r:?}");
        let refined = check_refined(&a, &c).unwrap();
        assert!(refined.passes(), "{refined:?}");
        // |cos ρ e^{iθ} − sin ρ| ≥ 1 for cos θ ≤ 0
        let k = refined.verdict("S1-principal").unwrap().constant.unwrap();
        assert!(k <= 1.0 + 1e-12 && k > 0.99, "{k}");
        let cert = refined.sigma3_certificate.unwrap();
        assert!((cert.sigma_k - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reduced_resolvent_spectral_ray_fails_at_quarter_pi() {
        let c = cfg(0.0, PI / 2.0);
        let a = catalog::resolvent_reduced();
        let refined = check_refined(&a, &c).unwrap();
        assert!(!refined.passes());
        match refined.verdict("S1-principal").unwrap().witness {
            Some(Witness::Semicircle { phi, rho, theta, .. }) => {
                assert_eq!(theta, 0.0);
                assert!((rho - PI / 4.0).abs() < 1e-6, "{rho}");
                let v = a.principal().unwrap().on_semicircle(0.0, phi, rho, theta);
                assert!(v[(0, 0)].norm() < 1e-3);
            }
            w => panic!("unexpected witness {w:?}"),
        }
        let rough = check_rough(&a, 0.0, &c).unwrap();
        assert!(!rough.verdict("I").unwrap().pass);
        match rough.witness() {
            Some(Witness::Point { xi, tau, theta, .. }) => {
                assert_eq!(theta, 0.0);
                assert!((tau * tau - 1.0 - xi * xi).abs() < 1e-6 * tau * tau, "{xi} {tau}");
            }
            w => panic!("unexpected witness {w:?}"),
        }
    }

    #[test]
    fn identity_passes_with_unit_constant() {
        let c = cfg(0.0, 1.0);
        let r = check_rough(&SymbolExpr::identity(1), 0.0, &c).unwrap();
        assert!(r.passes());
        assert_eq!(r.verdict("I").unwrap().constant, Some(1.0));
    }

    #[test]
    fn hardy_fails_on_negative_half() {
        let c = cfg(0.0, 1.0);
        let r = check_refined(&catalog::hardy(), &c).unwrap();
        assert!(!r.verdict("S1-principal").unwrap().pass);
        match r.verdict("S1-principal").unwrap().witness {
            Some(Witness::Semicircle { phi, .. }) => assert_eq!(phi, -1.0),
            w => panic!("unexpected witness {w:?}"),
        }
    }

    #[test]
    fn refined_requires_principal_data() {
        let raw = SymbolExpr::raw("raw", 0.0, (1, 1), false, true, std::sync::Arc::new(|_, xi, _, _| {
            crate::jet::MatJet::scalar(&crate::jet::Jet::constant(1.0, xi.len()))
        }));
        assert!(matches!(check_refined(&raw, &cfg(0.0, 1.0)), Err(PsidoError::NoPrincipalData)));
    }
}
