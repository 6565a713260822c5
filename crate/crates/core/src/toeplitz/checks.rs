use std::f64::consts::FRAC_PI_2;

use rayon::prelude::*;

use crate::core_model::grid::x_points;
use crate::core_model::strip::{equispaced, Lambda};
use crate::ellipticity::{EllipticityConfig, EllipticityReport, Flavor, Verdict, Witness};
use crate::error::{PsidoError, Result};
use crate::fit::golden_min;
use crate::jet::CMatrix;
use crate::quantize::{doubling_certificate, quantize, Sigma3Certificate};
use crate::symbol::expr::SymbolExpr;

use super::basis::range_basis;
use super::projection::{OrderReductionPair, ProjectionSymbol};

/// `R # a` for `μ > 0`, `a` itself otherwise.
pub fn reduce(a: &SymbolExpr, truncation: usize) -> Result<(SymbolExpr, Option<OrderReductionPair>)> {
    let mu = a.order();
    if mu <= 0.0 {
        return Ok((a.clone(), None));
    }
    let rs = OrderReductionPair::new(mu, a.shape().0)?;
    let r = SymbolExpr::leibniz(&rs.r, a, truncation)?.with_name(format!("R#{}", a.name()));
    Ok((r, Some(rs)))
}

/// `Q₁* m Q₀` with `Q_j` orthonormal bases of `range(p_j)`.
pub fn compress(m: &CMatrix, p0: &CMatrix, p1: &CMatrix) -> (CMatrix, usize, usize) {
    let q0 = range_basis(p0);
    let q1 = range_basis(p1);
    let (r0, r1) = (q0.ncols(), q1.ncols());
    (q1.adjoint() * m * q0, r0, r1)
}

/// Compressed principal symbol of the reduced symbol at a semicircle point.
pub fn compressed_principal(
    reduced: &SymbolExpr,
    p0: &ProjectionSymbol,
    p1: &ProjectionSymbol,
    x: f64,
    phi: f64,
    rho: f64,
    theta: f64,
) -> Result<CMatrix> {
    let pr = reduced.principal().ok_or(PsidoError::NoPrincipalData)?;
    let (xi, tau) = (phi * rho.sin(), rho.cos());
    let m = pr.eval(x, xi, tau, theta);
    let (c, r0, r1) = compress(&m, &p0.principal_at(x, xi, tau, theta), &p1.principal_at(x, xi, tau, theta));
    if r0 != r1 {
        return Err(PsidoError::RankMismatch { x, xi, rank0: r0, rank1: r1 });
    }
    Ok(c)
}

fn sigma(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return f64::INFINITY;
    }
    crate::ellipticity::sigma_min(m)
}

/// Running minimum for the compressed checks.
struct Worst {
    sigma: f64,
    sup: f64,
    at: Option<Witness>,
}

impl Worst {
    fn new() -> Self {
        Worst { sigma: f64::INFINITY, sup: 0.0, at: None }
    }

    fn push(&mut self, s: f64, at: Witness) {
        if s.is_finite() {
            self.sup = self.sup.max(if s > 0.0 { 1.0 / s } else { f64::INFINITY });
        }
        if s < self.sigma {
            self.sigma = s;
            self.at = Some(at);
        }
    }

    fn merge(mut self, o: Worst) -> Worst {
        self.sup = self.sup.max(o.sup);
        if o.sigma < self.sigma {
            self.sigma = o.sigma;
            self.at = o.at;
        }
        self
    }

    fn verdict(self, name: &str, tol: f64) -> Verdict {
        let pass = self.sigma >= tol;
        Verdict {
            condition: name.to_string(),
            pass,
            constant: pass.then_some(self.sup),
            min_singular: self.sigma,
            witness: (!pass).then_some(self.at).flatten(),
            note: None,
        }
    }
}

/// Conditions (1)–(3) for `P₁ A P₀`, tested on the order-reduced symbol.
pub fn toeplitz_ellipticity(
    a: &SymbolExpr,
    p0: &ProjectionSymbol,
    p1: &ProjectionSymbol,
    cfg: &EllipticityConfig,
) -> Result<EllipticityReport> {
    let (reduced, _) = reduce(a, cfg.truncation)?;
    toeplitz_ellipticity_reduced(&reduced, p0, p1, cfg)
}

pub fn toeplitz_ellipticity_reduced(
    reduced: &SymbolExpr,
    p0: &ProjectionSymbol,
    p1: &ProjectionSymbol,
    cfg: &EllipticityConfig,
) -> Result<EllipticityReport> {
    let (n1, n0) = reduced.shape();
    if p0.fiber() != n0 || p1.fiber() != n1 {
        return Err(PsidoError::ShapeMismatch(format!(
            "symbol {n1}x{n0} between projections on C^{} and C^{}",
            p0.fiber(),
            p1.fiber()
        )));
    }
    reduced.principal().ok_or(PsidoError::NoPrincipalData)?;
    let x_dep = reduced.is_x_dependent() || p0.symbol.is_x_dependent() || p1.symbol.is_x_dependent();
    let xs = if x_dep { x_points(cfg.n_x) } else { vec![0.0] };
    let thetas = cfg.strip.theta_samples().to_vec();
    let mut pts = Vec::new();
    for &x in &xs {
        for phi in [1.0, -1.0] {
            for &theta in &thetas {
                pts.push((x, phi, theta));
            }
        }
    }

    // rank agreement on the cosphere comes first: without it nothing is bijective
    for &(x, phi, _) in &pts {
        let r0 = range_basis(&p0.principal_at(x, phi, 0.0, 0.0)).ncols();
        let r1 = range_basis(&p1.principal_at(x, phi, 0.0, 0.0)).ncols();
        if r0 != r1 {
            return Err(PsidoError::RankMismatch { x, xi: phi, rank0: r0, rank1: r1 });
        }
    }

    let rhos = equispaced(cfg.rho_min, FRAC_PI_2, cfg.n_rho);
    let h = rhos.get(1).map_or(0.1, |r| r - rhos[0]);
    let one = pts
        .par_iter()
        .map(|&(x, phi, theta)| -> Result<Worst> {
            let f = |rho: f64| {
                compressed_principal(reduced, p0, p1, x, phi, rho, theta).map(|m| sigma(&m)).unwrap_or(0.0)
            };
            let mut w = Worst::new();
            let mut best = (f64::INFINITY, rhos[0]);
            for &rho in &rhos {
                let v = f(rho);
                if v < best.0 {
                    best = (v, rho);
                }
                w.push(v, Witness::Semicircle { x, phi, rho, theta });
            }
            if best.0.is_finite() {
                let (rho, v) = golden_min(f, (best.1 - h).max(cfg.rho_min), (best.1 + h).min(FRAC_PI_2), 1e-12);
                w.push(v, Witness::Semicircle { x, phi, rho, theta });
            }
            Ok(w)
        })
        .try_reduce(Worst::new, |l, r| Ok(l.merge(r)))?;
    let principal = one.verdict("T1-principal", cfg.sv_tol);

    let ang = reduced.angular();
    let mut two = Worst::new();
    for &(x, phi, theta) in &pts {
        let m = match &ang {
            Some(a) => a.eval(x, phi, theta),
            None => reduced.principal().expect("checked").eval(x, 0.0, 1.0, theta),
        };
        let (c, _, _) = compress(&m, &p0.principal_at(x, phi, 0.0, theta), &p1.principal_at(x, phi, 0.0, theta));
        two.push(sigma(&c), Witness::Cosphere { x, phi, theta });
    }
    let angular = two.verdict("T2-angular", cfg.sv_tol);

    let (limit, cert) = compressed_limit_verdict(reduced, p0, p1, cfg)?;
    Ok(EllipticityReport {
        flavor: Flavor::Toeplitz,
        verdicts: vec![principal, angular, limit],
        sigma3_certificate: cert,
        xi_cutoff: cfg.xi_cutoff,
        strip: cfg.strip.clone(),
    })
}

/// Compressed limit family `P₁ a^∞(θ) P₀` on `L²`. The multiplier pair has
/// `r^∞ = s^∞ = 1`, so `P̃₁^∞ = P₁`.
fn compressed_limit_verdict(
    reduced: &SymbolExpr,
    p0: &ProjectionSymbol,
    p1: &ProjectionSymbol,
    cfg: &EllipticityConfig,
) -> Result<(Verdict, Option<Sigma3Certificate>)> {
    let thetas = cfg.strip.theta_samples();
    let lim = match reduced.limit_family() {
        Ok(l) if !l.is_zero => l,
        Ok(_) => {
            return Ok((Verdict::failed("T3-limit", Witness::Ray { theta: thetas[0] }, "limit family vanishes"), None))
        }
        Err(e) => return Ok((Verdict::failed("T3-limit", Witness::Ray { theta: thetas[0] }, e.to_string()), None)),
    };
    let certs: Vec<(f64, Sigma3Certificate)> = thetas
        .par_iter()
        .map(|&theta| {
            let l = Lambda::new(1.0, theta);
            doubling_certificate(cfg.k_max, |k| {
                let m = quantize(&lim.symbol, l, k)?.matrix;
                let q0 = p0.operator(l, k)?.matrix;
                let q1 = p1.operator(l, k)?.matrix;
                let (c, r0, r1) = compress(&m, &q0, &q1);
                if r0 != r1 {
                    return Err(PsidoError::RankMismatch { x: f64::NAN, xi: f64::NAN, rank0: r0, rank1: r1 });
                }
                Ok(c)
            })
            .map(|c| (theta, c))
        })
        .collect::<Result<_>>()?;
    let pass = certs.iter().all(|(_, c)| c.pass);
    let sigma = certs.iter().map(|(_, c)| c.sigma_k.min(c.sigma_2k)).fold(f64::INFINITY, f64::min);
    let (theta_w, worst) = certs
        .iter()
        .min_by(|l, r| {
            let key = |c: &Sigma3Certificate| c.sigma_k.min(c.sigma_2k) - if c.pass { 0.0 } else { 1e300 };
            key(&l.1).total_cmp(&key(&r.1))
        })
        .cloned()
        .expect("strip has angles");
    let v = Verdict {
        condition: "T3-limit".to_string(),
        pass,
        constant: pass.then_some(1.0 / sigma),
        min_singular: sigma,
        witness: (!pass).then_some(Witness::Ray { theta: theta_w }),
        note: None,
    };
    Ok((v, Some(worst)))
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::core_model::strip::ParameterStrip;
    use crate::symbol::catalog;
    use crate::toeplitz::projection::make_hardy_projection;

    fn cfg(lo: f64, hi: f64) -> EllipticityConfig {
        EllipticityConfig::new(ParameterStrip::log_spaced(lo, hi, 0.0, 2.0, 2, 5).unwrap(), 16)
    }

    #[test]
    fn model_on_hardy_passes_up_to_pi() {
        let p = make_hardy_projection(16).unwrap();
        let r = toeplitz_ellipticity(&catalog::toeplitz_model(), &p, &p, &cfg(PI / 4.0, PI)).unwrap();
        assert!(r.passes(), "{r:?}");
        // e^{iθ} on the Hardy block
        let c = r.sigma3_certificate.unwrap();
        assert!((c.sigma_k - 1.0).abs() < 1e-12 && (c.sigma_2k - 1.0).abs() < 1e-12);
    }

    #[test]
    fn model_fails_when_the_strip_meets_minus_i() {
        let p = make_hardy_projection(16).unwrap();
        let a = catalog::toeplitz_model();
        let r = toeplitz_ellipticity(&a, &p, &p, &cfg(PI, 1.5 * PI)).unwrap();
        let v = r.verdict("T1-principal").unwrap();
        assert!(!v.pass);
        let Some(Witness::Semicircle { x, phi, rho, theta }) = v.witness else { panic!("{v:?}") };
        assert_eq!(phi, 1.0);
        assert!((theta - 1.5 * PI).abs() < 1e-12);
        let (reduced, _) = reduce(&a, 3).unwrap();
        let m = compressed_principal(&reduced, &p, &p, x, phi, rho, theta).unwrap();
        assert!(m.norm() < 1e-3);
        // direction τ e^{iθ} = −iξ: ρ = π/4
        assert!((rho - PI / 4.0).abs() < 1e-5);
    }

    #[test]
    fn identity_compression_passes() {
        let p = make_hardy_projection(16).unwrap();
        let r = toeplitz_ellipticity(&SymbolExpr::identity(1), &p, &p, &cfg(0.0, 6.0)).unwrap();
        assert!(r.passes(), "{r:?}");
        assert_eq!(r.verdict("T1-principal").unwrap().constant, Some(1.0));
    }

    #[test]
    fn rank_mismatch_is_reported() {
        let p = make_hardy_projection(16).unwrap();
        let id = ProjectionSymbol::identity(1);
        let e = toeplitz_ellipticity(&SymbolExpr::identity(1), &p, &id, &cfg(0.0, 1.0)).unwrap_err();
        assert!(matches!(e, PsidoError::RankMismatch { rank0: 0, rank1: 1, .. }), "{e:?}");
    }
}
