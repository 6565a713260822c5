use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::core_model::strip::{sample_lambda, Lambda};
use crate::error::{PsidoError, Result};
use crate::jet::CMatrix;
use crate::quantize::{
    oracle_invert, quantize, spectral_norm, LambdaFamily, Regularize, SmoothingKernel, TruncatedOperator,
};
use crate::symbol::expr::SymbolExpr;

use super::checks::{check_refined, check_rough, EllipticityConfig};
use super::report::EllipticityReport;

pub const MAX_DEPTH: usize = 6;

/// `χ(ξ/c) a⁻¹` with `c` twice the cutoff the report was certified on.
pub fn excised_inverse(a: &SymbolExpr, report: &EllipticityReport) -> Result<SymbolExpr> {
    if !report.passes() {
        return Err(PsidoError::ReportFailed);
    }
    SymbolExpr::excised_inverse(a, 2.0 * report.xi_cutoff)
}

/// The stages of the von Neumann construction.
#[derive(Debug, Clone)]
pub struct NeumannParametrix {
    pub b0: SymbolExpr,
    /// `1 − a # b₀`.
    pub r: SymbolExpr,
    /// `b₀ # Σ_{j≤L} r^{#j}`.
    pub b_prime: SymbolExpr,
    /// `b′ + (a^∞)^{−#} # r′^∞`, `r′ = 1 − a # b′`; equal to `b′` when `r′^∞ = 0`.
    pub b_double_prime: SymbolExpr,
    pub depth: usize,
}

pub fn neumann_parametrix(a: &SymbolExpr, depth: usize, excision: f64, truncation: usize) -> Result<NeumannParametrix> {
    if depth > MAX_DEPTH {
        return Err(PsidoError::DepthTooLarge(depth));
    }
    let n = a.shape().0;
    let one = SymbolExpr::identity(n);
    let b0 = SymbolExpr::excised_inverse(a, excision)?;
    let r = one.sub(&SymbolExpr::leibniz(a, &b0, truncation)?)?.with_name("1 - a#b0");
    let b_prime = series(&b0, &r, depth, truncation)?;

    let residual = one.sub(&SymbolExpr::leibniz(a, &b_prime, truncation)?)?;
    let r_lim = residual.limit_family()?;
    let b_double_prime = if r_lim.is_zero {
        b_prime.clone()
    } else {
        let a_lim = a.limit_family()?;
        if a_lim.is_zero {
            return Err(PsidoError::NotInCalculus("limit family of the symbol vanishes".into()));
        }
        let inv = limit_inverse(&a_lim.symbol, depth, truncation)?;
        let corr = SymbolExpr::leibniz(&inv, &r_lim.symbol, truncation)?;
        b_prime.add(&corr)?
    };
    Ok(NeumannParametrix { b0, r, b_prime, b_double_prime: b_double_prime.with_name("b''"), depth })
}

/// `b # (1 + r # (1 + r # (…)))`, `depth` factors of `r`.
fn series(b: &SymbolExpr, r: &SymbolExpr, depth: usize, truncation: usize) -> Result<SymbolExpr> {
    let one = SymbolExpr::identity(b.shape().0);
    let mut h = one.clone();
    for _ in 0..depth {
        h = one.add(&SymbolExpr::leibniz(r, &h, truncation)?)?;
    }
    SymbolExpr::leibniz(b, &h, truncation)
}

/// #-inverse of a τ-independent limit family: exact pointwise inverse when it
/// is x-independent, an unexcised Neumann series otherwise.
fn limit_inverse(lim: &SymbolExpr, depth: usize, truncation: usize) -> Result<SymbolExpr> {
    let b0 = SymbolExpr::excised_inverse(lim, 0.0)?;
    if !lim.is_x_dependent() {
        return Ok(b0);
    }
    let one = SymbolExpr::identity(lim.shape().0);
    let r = one.sub(&SymbolExpr::leibniz(lim, &b0, truncation)?)?;
    series(&b0, &r, depth, truncation)
}

/// `(1 + r)⁻¹ = 1 + s` past the threshold.
#[derive(Debug, Clone)]
pub struct NeumannTail {
    pub s: SmoothingKernel,
    /// Uniform threshold: max over θ of `per_theta`.
    pub threshold: f64,
    pub per_theta: Vec<(f64, f64)>,
}

/// `s = −r + χ(|λ|) r (1 + r)⁻¹ r`, with `χ` the indicator of `τ ≥ C`.
pub fn invert_one_plus_smoothing(r: &SmoothingKernel) -> Result<NeumannTail> {
    let grid = r.grid().to_vec();
    let norms = r.sample_norms();
    let min_norm = norms.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
    if !r.is_vanishing() {
        return Err(PsidoError::NeverSmall(min_norm));
    }
    let per_theta = thresholds(norms).ok_or(PsidoError::NeverSmall(min_norm))?;
    let threshold = per_theta.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
    let rr = r.clone();
    let family: LambdaFamily = Arc::new(move |l: Lambda| {
        let m = rr.matrix(l).ok()?;
        if l.tau < threshold {
            return Some(-m);
        }
        let n = m.nrows();
        let one_plus = CMatrix::identity(n, n) + &m;
        let solved = one_plus.lu().solve(&m)?;
        Some(&m * solved - &m)
    });
    let s = SmoothingKernel::new(family, grid, r.k_max(), r.shape())?;
    Ok(NeumannTail { s, threshold, per_theta })
}

/// Per θ: the first grid τ from which on `‖r‖ ≤ 1/2`.
fn thresholds(norms: &[(Lambda, f64)]) -> Option<Vec<(f64, f64)>> {
    let mut thetas: Vec<f64> = norms.iter().map(|(l, _)| l.theta).collect();
    thetas.sort_by(f64::total_cmp);
    thetas.dedup();
    thetas
        .into_iter()
        .map(|th| {
            let mut row: Vec<(f64, f64)> =
                norms.iter().filter(|(l, _)| l.theta == th).map(|(l, n)| (l.tau, *n)).collect();
            row.sort_by(|a, b| a.0.total_cmp(&b.0));
            let last_bad = row.iter().rposition(|(_, n)| *n > 0.5);
            let first_good = match last_bad {
                None => 0,
                Some(i) => i + 1,
            };
            row.get(first_good).map(|(t, _)| (th, *t))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub tau: f64,
    pub theta: f64,
    /// `‖B Op(a) − 1‖`.
    pub residual_left: f64,
    /// `‖Op(a) B − 1‖`.
    pub residual_right: f64,
    /// `‖1 − Op(a) Op(b″)‖` before the tail correction.
    pub neumann_residual: f64,
    /// `‖B − Op(a)⁻¹‖` on the interior band; `None` when the oracle refuses.
    pub oracle_gap: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ParametrixResult {
    /// `b″ # (1 + s)`.
    pub symbol: SymbolExpr,
    pub neumann: NeumannParametrix,
    pub neumann_depth: usize,
    pub tau_threshold: f64,
    pub tau_threshold_per_theta: Vec<(f64, f64)>,
    pub residuals: Vec<ResidualRow>,
    pub tail: SmoothingKernel,
    pub report: EllipticityReport,
    pub k_max: usize,
}

impl ParametrixResult {
    pub fn order(&self) -> f64 {
        self.symbol.order()
    }

    /// Worst left/right residual and oracle gap over grid τ ≥ τ₀.
    pub fn worst_past_threshold(&self) -> (f64, f64, f64) {
        self.residuals.iter().filter(|r| r.tau >= self.tau_threshold).fold((0.0, 0.0, 0.0), |acc, r| {
            (
                acc.0.max(r.residual_left),
                acc.1.max(r.residual_right),
                acc.2.max(r.oracle_gap.unwrap_or(f64::INFINITY)),
            )
        })
    }

    pub fn summary(&self) -> ParametrixSummary {
        let (l, r, g) = self.worst_past_threshold();
        ParametrixSummary {
            order: self.order(),
            neumann_depth: self.neumann_depth,
            k_max: self.k_max,
            tau_threshold: self.tau_threshold,
            tau_threshold_per_theta: self.tau_threshold_per_theta.clone(),
            worst_residual_left: l,
            worst_residual_right: r,
            worst_oracle_gap: g,
            residuals: self.residuals.clone(),
            report: self.report.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParametrixSummary {
    pub order: f64,
    pub neumann_depth: usize,
    pub k_max: usize,
    pub tau_threshold: f64,
    pub tau_threshold_per_theta: Vec<(f64, f64)>,
    pub worst_residual_left: f64,
    pub worst_residual_right: f64,
    pub worst_oracle_gap: f64,
    pub residuals: Vec<ResidualRow>,
    pub report: EllipticityReport,
}

type Key = (u64, u64);

fn key(l: Lambda) -> Key {
    (l.tau.to_bits(), l.theta.to_bits())
}

/// `Op(a)(λ)` and `Op(b″)(λ)`, memoized per λ.
#[derive(Clone)]
struct PairCache {
    a: SymbolExpr,
    b: SymbolExpr,
    k_max: usize,
    memo: Arc<Mutex<HashMap<Key, Arc<(CMatrix, CMatrix)>>>>,
}

impl PairCache {
    fn get(&self, l: Lambda) -> Result<Arc<(CMatrix, CMatrix)>> {
        if let Some(hit) = self.memo.lock().expect("cache lock").get(&key(l)) {
            return Ok(hit.clone());
        }
        let a = quantize(&self.a, l, self.k_max)?.matrix;
        let b = quantize(&self.b, l, self.k_max)?.matrix;
        let v = Arc::new((a, b));
        self.memo.lock().expect("cache lock").insert(key(l), v.clone());
        Ok(v)
    }
}

/// Full construction: ellipticity check, excised inverse, Neumann series with the
/// limit-family correction, and the smoothing tail making `B` an exact inverse of
/// `Op(a)(λ)` on `|k| ≤ K` for `τ ≥ τ₀`.
pub fn parametrix(a: &SymbolExpr, cfg: &EllipticityConfig) -> Result<ParametrixResult> {
    let report = if a.principal().is_some() && a.angular().is_some() {
        check_refined(a, cfg)?
    } else {
        check_rough(a, a.order(), cfg)?
    };
    if !report.passes() {
        return Err(PsidoError::EllipticityFailed(Box::new(report)));
    }
    let neumann = neumann_parametrix(a, cfg.depth, cfg.excision_radius(), cfg.truncation)?;
    let k_max = cfg.k_max;
    let n = a.shape().0;
    let dim = (2 * k_max + 1) * n;
    let cache = PairCache {
        a: a.clone(),
        b: neumann.b_double_prime.clone(),
        k_max,
        memo: Arc::new(Mutex::new(HashMap::new())),
    };
    let grid = sample_lambda(&cfg.strip);
    // warm the cache in parallel
    grid.par_iter().map(|&l| cache.get(l).map(|_| ())).collect::<Result<Vec<()>>>()?;

    // Op(a) Op(b″) = 1 + r
    let rc = cache.clone();
    let r_family: LambdaFamily = Arc::new(move |l: Lambda| {
        let p = rc.get(l).ok()?;
        Some(&p.0 * &p.1 - CMatrix::identity(dim, dim))
    });
    let r = SmoothingKernel::new(r_family, grid.clone(), k_max, (n, n))?;
    let tail = invert_one_plus_smoothing(&r)?;
    let r_norms: HashMap<Key, f64> = r.sample_norms().iter().map(|(l, n)| (key(*l), *n)).collect();

    let s_sym = tail.s.clone().into_symbol();
    let b = &neumann.b_double_prime;
    let symbol = b.add(&SymbolExpr::leibniz(b, &s_sym, 0)?)?.with_name("parametrix");

    let band = k_max / 2;
    let residuals: Vec<ResidualRow> = grid
        .par_iter()
        .map(|&l| -> Result<ResidualRow> {
            let p = cache.get(l)?;
            let (am, bm) = (&p.0, &p.1);
            let s = tail.s.matrix(l)?;
            let full = bm + bm * &s;
            let id = CMatrix::identity(dim, dim);
            let residual_left = spectral_norm(&(&full * am - &id));
            let residual_right = spectral_norm(&(am * &full - &id));
            let neumann_residual = r_norms.get(&key(l)).copied().unwrap_or(f64::NAN);
            let a_op = TruncatedOperator::new(am.clone(), l, k_max, (n, n))?;
            let oracle_gap = match oracle_invert(&a_op, Regularize::None) {
                Ok((inv, _)) => {
                    let d = TruncatedOperator::new(full - inv.matrix, l, k_max, (n, n))?;
                    Some(spectral_norm(&d.band(band)))
                }
                Err(PsidoError::SingularToTolerance { .. }) => None,
                Err(e) => return Err(e),
            };
            Ok(ResidualRow { tau: l.tau, theta: l.theta, residual_left, residual_right, neumann_residual, oracle_gap })
        })
        .collect::<Result<_>>()?;

    Ok(ParametrixResult {
        symbol,
        neumann_depth: cfg.depth,
        tau_threshold: tail.threshold,
        tau_threshold_per_theta: tail.per_theta.clone(),
        residuals,
        tail: tail.s,
        report,
        k_max,
        neumann,
    })
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::jet::C64;
    use crate::core_model::strip::ParameterStrip;
    use crate::symbol::catalog;

    fn scalar(c: f64, n: usize) -> CMatrix {
        CMatrix::identity(n, n) * C64::new(c, 0.0)
    }

    fn strip() -> ParameterStrip {
        ParameterStrip::log_spaced(PI / 2.0, 1.5 * PI, 0.0, 2.0, 2, 3).unwrap()
    }

    #[test]
    fn zero_residual_gives_zero_tail() {
        let r = SmoothingKernel::zero(4, (1, 1), sample_lambda(&strip()));
        let t = invert_one_plus_smoothing(&r).unwrap();
        assert_eq!(t.threshold, 1.0);
        for l in sample_lambda(&strip()) {
            assert_eq!(spectral_norm(&t.s.matrix(l).unwrap()), 0.0);
        }
    }

    #[test]
    fn rank_one_inversion() {
        let k = 3;
        let n = 2 * k + 1;
        let u = CMatrix::from_fn(n, 1, |i, _| C64::new(1.0 / (1.0 + i as f64), 0.3));
        let v = CMatrix::from_fn(n, 1, |i, _| C64::new((i as f64).cos(), -0.2));
        let c = (v.adjoint() * &u)[(0, 0)];
        let uv = &u * v.adjoint();
        let uv2 = uv.clone();
        let fam: LambdaFamily = Arc::new(move |l: Lambda| Some(&uv2 * C64::new(1.0 / (1.0 + l.tau), 0.0)));
        let r = SmoothingKernel::new(fam, sample_lambda(&strip()), k, (1, 1)).unwrap();
        let t = invert_one_plus_smoothing(&r).unwrap();
        for l in sample_lambda(&strip()).into_iter().filter(|l| l.tau >= t.threshold) {
            let phi = 1.0 / (1.0 + l.tau);
            let want = &uv * (-phi / (C64::new(1.0, 0.0) + c * phi));
            assert!((t.s.matrix(l).unwrap() - want).norm() < 1e-13);
        }
        assert!(t.s.is_vanishing());
    }

    #[test]
    fn random_vanishing_family_inverts_exactly() {
        let k = 4;
        let n = 2 * k + 1;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let base = CMatrix::from_fn(n, n, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let fam: LambdaFamily = Arc::new(move |l: Lambda| Some(&base * C64::from_polar(3.0 / (1.0 + l.tau), l.theta)));
        let r = SmoothingKernel::new(fam, sample_lambda(&strip()), k, (1, 1)).unwrap();
        let t = invert_one_plus_smoothing(&r).unwrap();
        assert!(t.threshold > 1.0);
        for l in sample_lambda(&strip()).into_iter().filter(|l| l.tau >= t.threshold) {
            let rm = r.matrix(l).unwrap();
            let sm = t.s.matrix(l).unwrap();
            let id = CMatrix::identity(n, n);
            let prod = (&id + &rm) * (&id + &sm);
            let prod2 = (&id + &sm) * (&id + &rm);
            assert!((prod - &id).norm() < 1e-10);
            assert!((prod2 - &id).norm() < 1e-10);
        }
    }

    #[test]
    fn never_small_family_is_rejected() {
        let fam: LambdaFamily = Arc::new(|l: Lambda| Some(CMatrix::identity(3, 3) * C64::new(2.0 + 1.0 / (1.0 + l.tau), 0.0)));
        let r = SmoothingKernel::new(fam, sample_lambda(&strip()), 1, (1, 1)).unwrap();
        assert!(matches!(invert_one_plus_smoothing(&r), Err(PsidoError::NeverSmall(_))));
    }

    #[test]
    fn depth_is_bounded() {
        let a = SymbolExpr::identity(1);
        assert!(matches!(neumann_parametrix(&a, 7, 1.0, 3), Err(PsidoError::DepthTooLarge(7))));
    }

    #[test]
    fn constant_symbol_inverse_is_excised() {
        let a = SymbolExpr::constant("2", scalar(2.0, 1));
        let c = EllipticityConfig::new(strip(), 8);
        let report = check_rough(&a, 0.0, &c).unwrap();
        let b = excised_inverse(&a, &report).unwrap();
        for xi in [0.0, 0.5, 0.75, 1.0, 3.0] {
            let v = b.eval(0.0, xi, 2.0, PI).unwrap()[(0, 0)];
            let chi = crate::symbol::excision::chi(xi, 1.0);
            assert!((v - C64::new(chi / 2.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn multiplier_parametrix_is_pointwise_inverse_off_the_hole() {
        let a = catalog::resolvent_reduced();
        let np = neumann_parametrix(&a, 3, 1.0, 3).unwrap();
        for &(xi, tau, theta) in &[(1.0, 2.0, PI), (5.0, 10.0, 2.0), (-3.5, 0.5, 4.0)] {
            let av = a.eval(0.0, xi, tau, theta).unwrap()[(0, 0)];
            let bv = np.b_double_prime.eval(0.0, xi, tau, theta).unwrap()[(0, 0)];
            assert!((av * bv - 1.0).norm() < 1e-13, "{xi} {tau}");
        }
        // inside the hole only the limit-family correction and the series survive
        let av = a.eval(0.0, 0.2, 50.0, PI).unwrap()[(0, 0)];
        let bv = np.b_double_prime.eval(0.0, 0.2, 50.0, PI).unwrap()[(0, 0)];
        let lim = C64::from_polar(1.0, PI);
        assert!((bv - 1.0 / lim).norm() < 1e-12);
        assert!((av * bv - 1.0).norm() < 0.05);
    }

    #[test]
    fn identity_parametrix_is_identity() {
        let c = EllipticityConfig::new(strip(), 6);
        let p = parametrix(&SymbolExpr::identity(1), &c).unwrap();
        assert_eq!(p.tau_threshold, 1.0);
        let (l, r, g) = p.worst_past_threshold();
        assert!(l < 1e-14 && r < 1e-14 && g < 1e-14);
    }

    #[test]
    fn failed_report_is_embedded() {
        let strip = ParameterStrip::log_spaced(0.0, 1.0, 0.0, 1.0, 2, 2).unwrap();
        let c = EllipticityConfig::new(strip, 6);
        match parametrix(&catalog::resolvent_reduced(), &c) {
            Err(PsidoError::EllipticityFailed(r)) => assert!(!r.passes()),
            other => panic!("expected failure, got {:?}", other.map(|p| p.tau_threshold)),
        }
    }

    #[test]
    fn perturbed_resolvent_parametrix_is_exact_past_threshold() {
        let c = EllipticityConfig::new(strip(), 12);
        let a = catalog::resolvent_reduced_perturbed(0.1);
        let p = parametrix(&a, &c).unwrap();
        assert_eq!(p.order(), -a.order());
        let (l, r, g) = p.worst_past_threshold();
        assert!(l < 1e-8 && r < 1e-8 && g < 1e-8, "{l} {r} {g}");
    }
}
