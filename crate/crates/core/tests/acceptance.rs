//! Acceptance criteria 1-8. Runs as a plain binary so every verdict line is
//! printed, then exits nonzero if any criterion failed.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use psido::core_model::strip::{log_tau_grid, sample_lambda};
use psido::core_model::{estimate_seminorm, CircleGrid, Lambda, ParameterStrip, SeminormSpec};
use psido::ellipticity::{check_refined, parametrix, EllipticityConfig, Witness};
use psido::fit::loglog_fit;
use psido::jet::{CMatrix, Jet, MatJet, C64};
use psido::quantize::{oracle_invert, quantize, spectral_norm, Regularize, TruncatedOperator};
use psido::symbol::catalog;
use psido::symbol::ops::limit_decay;
use psido::symbol::taylor::{taylor_expand_northpole, PolarEval, TaylorProbes};
use psido::symbol::SymbolExpr;
use psido::toeplitz::{
    make_hardy_projection, remark_identity_check, resolvent_pipeline, toeplitz_ellipticity, toeplitz_parametrix,
};

type Outcome = psido::Result<(bool, String)>;

fn bracket(xi: f64) -> f64 {
    (1.0 + xi * xi).sqrt()
}

fn n_of(k_max: usize) -> usize {
    2 * k_max + 1
}

fn freq(i: usize, k_max: usize) -> i64 {
    i as i64 - k_max as i64
}

/// Rows and columns with `lo ≤ |k| ≤ hi`.
fn restrict(m: &CMatrix, k_max: usize, lo: usize, hi: usize) -> CMatrix {
    let idx: Vec<usize> =
        (0..n_of(k_max)).filter(|&i| (lo..=hi).contains(&(freq(i, k_max).unsigned_abs() as usize))).collect();
    CMatrix::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])])
}

/// `e_k ↦ w(k) e_{k+1}` on `|k| ≤ K`.
fn shift_then(k_max: usize, w: impl Fn(i64) -> f64) -> CMatrix {
    let n = n_of(k_max);
    let mut m = CMatrix::zeros(n, n);
    for j in 0..n - 1 {
        m[(j + 1, j)] = C64::new(w(freq(j, k_max)), 0.0);
    }
    m
}

/// Orthogonal projection onto `k ≥ 0` and its range basis.
fn hardy_exact(k_max: usize) -> (CMatrix, CMatrix) {
    let n = n_of(k_max);
    let p = CMatrix::from_fn(n, n, |i, j| if i == j && freq(i, k_max) >= 0 { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) });
    let q = CMatrix::from_fn(n, k_max + 1, |i, j| if i == j + k_max { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) });
    (p, q)
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.2e}")).collect::<Vec<_>>().join(", ")
}

fn criterion_1() -> Outcome {
    let k = 64;
    let start = Instant::now();
    let l = Lambda::new(1.0, 0.0);
    let a = catalog::shift();
    let b = catalog::bessel(-1.0);

    // literal order: a(x) b(ξ) has no corrections, so Op(a)Op(b) is exact at N = 0
    let literal = shift_then(k, |j| 1.0 / bracket(j as f64));
    let mut lit = Vec::new();
    for n in 0..=3 {
        let d = quantize(&SymbolExpr::leibniz(&a, &b, n)?, l, k)?.matrix - &literal;
        lit.push(spectral_norm(&restrict(&d, k, 0, k / 2)));
    }

    // Op(⟨ξ⟩⁻¹) Op(e^{ix}): e_k ↦ ⟨k+1⟩⁻¹ e_{k+1}
    let exact = shift_then(k, |j| 1.0 / bracket(j as f64 + 1.0));
    let (mut shell, mut band) = (Vec::new(), Vec::new());
    for n in 0..=3 {
        let d = quantize(&SymbolExpr::leibniz(&b, &a, n)?, l, k)?.matrix - &exact;
        shell.push(spectral_norm(&restrict(&d, k, k / 4, k / 2)));
        band.push(spectral_norm(&restrict(&d, k, 0, k / 2)));
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = lit.iter().all(|e| *e <= 1e-4) && strictly_decreasing(&shell) && shell[3] <= 1e-4 && secs < 5.0;
    Ok((
        pass,
        format!(
            "a#b exact: errors [{}]; b#a on K/4<=|k|<=K/2: [{}] (strict, N=3 <= 1e-4); b#a on |k|<=K/2: [{}] (not decreasing near k=0); {secs:.2}s",
            fmt_list(&lit),
            fmt_list(&shell),
            fmt_list(&band)
        ),
    ))
}

fn criterion_2() -> Outcome {
    let a = catalog::classical_phase();
    let taus = log_tau_grid(1.0, 3.0, 4)?;
    let thetas = [0.0, 0.5 * PI, PI, 1.5 * PI];
    let mut xis = vec![0.0];
    for j in 0..=11 {
        xis.extend([2f64.powi(j), -(2f64.powi(j))]);
    }
    let dense: Vec<f64> = (0..=4000).map(|i| 10f64.powf(-2.0 + 7.0 * i as f64 / 4000.0)).chain([0.0]).collect();
    let (mut lib_worst, mut oracle_worst) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &theta in &thetas {
        let (_, s) = limit_decay(&a, &taus, theta, &xis, 1, 1.0)?;
        lib_worst = lib_worst.max(s);
        // |τe^{iθ}/⟨ξ,τ⟩ − e^{iθ}| ⟨ξ⟩⁻¹ = (1 − τ/⟨ξ,τ⟩)/⟨ξ⟩
        let d: Vec<f64> = taus
            .iter()
            .map(|&t| dense.iter().map(|&x| (1.0 - t / (1.0 + x * x + t * t).sqrt()) / bracket(x)).fold(0.0, f64::max))
            .collect();
        oracle_worst = oracle_worst.max(loglog_fit(&taus, &d).0);
    }
    let lim = a.limit_family()?;
    let p = a.principal().expect("classical");
    let mut gap: f64 = 0.0;
    for &theta in &thetas {
        let want = C64::from_polar(1.0, theta);
        gap = gap.max((lim.symbol.eval(0.0, 0.0, 1.0, theta)?[(0, 0)] - want).norm());
        gap = gap.max((p.eval(0.0, 0.0, 1.0, theta)[(0, 0)] - want).norm());
    }
    let pass = lib_worst <= -0.9 && oracle_worst <= -0.9 && gap <= 1e-6;
    Ok((pass, format!("slope {lib_worst:.4} (closed-form sup {oracle_worst:.4}) <= -0.9; limit value gap {gap:.1e} <= 1e-6")))
}

fn criterion_3() -> Outcome {
    let rho = catalog::north_pole_rho();
    let h = 1e-5;
    let (mut worst, mut at_2_1, mut count) = (0.0f64, f64::NAN, 0);
    for tau in [1.0, 2.0] {
        for m in [1.25, 1.5, 2.0, 3.0, 5.0] {
            for xi in [-m, m] {
                let f = |x: f64| rho.eval(0.0, x, tau, 0.0).map(|v| v[(0, 0)].re);
                let fd = (f(xi + h)? - f(xi - h)?) / (2.0 * h);
                worst = worst.max((fd - xi.signum() * tau / (tau * tau + xi * xi)).abs());
                if xi == 2.0 && tau == 1.0 {
                    at_2_1 = fd;
                }
                count += 1;
            }
        }
    }

    let strip = ParameterStrip::log_spaced(0.0, 1.5 * PI, 0.0, 3.0, 4, 4)?;
    let grid = CircleGrid::square(8, 1)?;
    let mut seminorm_max: f64 = 0.0;
    for alpha in 0..=2 {
        for k in 0..=2 {
            seminorm_max = seminorm_max.max(estimate_seminorm(&rho, SeminormSpec::new(alpha, 0, k, 0.0, 0.0), &strip, &grid)?);
        }
    }

    let model: PolarEval = Arc::new(|_, _, r: &Jet, theta| {
        let (s, c) = r.sin_cos();
        MatJet::scalar(&(&c.scale(C64::from_polar(1.0, theta)) - &s))
    });
    let probes = TaylorProbes::with_thetas(strip.theta_samples().to_vec());
    let t = taylor_expand_northpole(model, (1, 1), 2, &probes)?;
    let mut coeff_gap: f64 = 0.0;
    for &theta in strip.theta_samples() {
        let e = C64::from_polar(1.0, theta);
        for (j, w) in [e, C64::new(-1.0, 0.0), -e / 2.0].iter().enumerate() {
            for phi in [-1.0, 1.0] {
                coeff_gap = coeff_gap.max((t.coefficient(j, 0.0, phi, theta)[(0, 0)] - w).norm());
            }
        }
    }
    let slopes = t.remainder_slopes();
    let slopes_ok = slopes.len() >= 3 && slopes.iter().enumerate().all(|(l, s)| *s >= l as f64 + 0.9);
    let pass = count == 20
        && worst <= 1e-6
        && (at_2_1 - 0.2).abs() <= 1e-6
        && seminorm_max.is_finite()
        && coeff_gap <= 1e-6
        && slopes_ok;
    Ok((
        pass,
        format!(
            "{count} points fd gap {worst:.1e}, (2,1) -> {at_2_1:.8}; seminorms finite (max {seminorm_max:.3}); coefficient gap {coeff_gap:.1e}; remainder slopes [{}]",
            slopes.iter().map(|s| format!("{s:.3}")).collect::<Vec<_>>().join(", ")
        ),
    ))
}

fn criterion_4() -> Outcome {
    let k = 64;
    let strip = ParameterStrip::log_spaced(0.5 * PI, 1.5 * PI, 0.0, 3.0, 2, 5)?;
    let cfg = EllipticityConfig::new(strip, k);
    let a = catalog::resolvent_reduced_perturbed(0.1);
    let start = Instant::now();
    let res = parametrix(&a, &cfg)?;
    let secs = start.elapsed().as_secs_f64();

    let n = n_of(k);
    let id = CMatrix::identity(n, n);
    let (mut left, mut right, mut gap, mut oracle_gap, mut past) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0);
    for l in sample_lambda(&cfg.strip) {
        if l.tau < res.tau_threshold {
            continue;
        }
        past += 1;
        let am = quantize(&a, l, k)?.matrix;
        let bpp = quantize(&res.neumann.b_double_prime, l, k)?.matrix;
        let b = &bpp + &bpp * res.tail.matrix(l)?;
        left = left.max(spectral_norm(&(&b * &am - &id)));
        right = right.max(spectral_norm(&(&am * &b - &id)));
        let inv = am.clone().try_inverse().expect("invertible past the threshold");
        gap = gap.max(spectral_norm(&(&b - inv)));
        let (o, _) = oracle_invert(&TruncatedOperator::new(am, l, k, (1, 1))?, Regularize::None)?;
        oracle_gap = oracle_gap.max(spectral_norm(&(&b - o.matrix)));
    }
    let pass = past > 0 && left <= 1e-8 && right <= 1e-8 && gap <= 1e-8 && oracle_gap <= 1e-8 && secs < 60.0;
    Ok((
        pass,
        format!(
            "tau_0 = {:.3}, {past} grid points past it; residuals {left:.1e}/{right:.1e}; |B - A^-1| {gap:.1e}, |B - oracle_invert| {oracle_gap:.1e}; {secs:.1}s",
            res.tau_threshold
        ),
    ))
}

fn criterion_5() -> Outcome {
    let k = 64;
    let p = make_hardy_projection(k)?;
    let strip = ParameterStrip::ray(0.5 * PI, log_tau_grid(0.0, 3.0, 4)?)?;
    let cfg = EllipticityConfig::new(strip, k);
    let (pm, q) = hardy_exact(k);

    let model = catalog::toeplitz_model();
    let res = toeplitz_parametrix(&model, &p, &p, &cfg)?;
    let (mut norm_gap, mut inv_gap) = (0.0f64, 0.0f64);
    for r in &res.rows {
        norm_gap = norm_gap.max((r.inverse_norm - 1.0 / r.tau).abs());
        let l = Lambda::new(r.tau, r.theta);
        let am = quantize(&model, l, k)?.matrix;
        let c = (q.adjoint() * am * &q).try_inverse().expect("iτ + ik is invertible for k ≥ 0");
        let want = &q * c * q.adjoint();
        inv_gap = inv_gap.max(spectral_norm(&(res.operator(l)? - want)));
    }

    let pert = catalog::toeplitz_model_perturbed(0.1);
    let res_p = toeplitz_parametrix(&pert, &p, &p, &cfg)?;
    let (mut left, mut right, mut past) = (0.0f64, 0.0f64, 0);
    for r in res_p.rows.iter().filter(|r| r.tau >= res_p.tau_threshold) {
        past += 1;
        let l = Lambda::new(r.tau, r.theta);
        let ap = &pm * quantize(&pert, l, k)?.matrix * &pm;
        let bp = res_p.operator(l)?;
        left = left.max(spectral_norm(&(&bp * &ap - &pm)));
        right = right.max(spectral_norm(&(&ap * &bp - &pm)));
    }
    let pass = norm_gap <= 1e-10 && inv_gap <= 1e-8 && past > 0 && left <= 1e-8 && right <= 1e-8;
    Ok((
        pass,
        format!(
            "|inverse_norm - 1/tau| {norm_gap:.1e} over {} taus, |B' - compressed inverse| {inv_gap:.1e}; perturbed tau_0 = {:.3}: B'A' - P {left:.1e}, A'B' - P {right:.1e}",
            res.rows.len(),
            res_p.tau_threshold
        ),
    ))
}

fn criterion_6() -> Outcome {
    let k = 32;
    let a = catalog::bessel(1.0);
    let p = make_hardy_projection(k)?;
    let thetas = vec![0.5 * PI, PI, 1.5 * PI];
    let strip = ParameterStrip::new(0.5 * PI, 1.5 * PI, log_tau_grid(0.0, 3.0, 4)?, thetas.clone())?;
    let cfg = EllipticityConfig::new(strip, k);
    let rec = resolvent_pipeline(&a, &p, &cfg, 0.0)?;

    // on k ≥ 0: min_k |τe^{iθ} − ⟨k⟩| is attained at k = 0
    let closed = |tau: f64, theta: f64| 1.0 / (C64::from_polar(tau, theta) - 1.0).norm();
    let mut gap: f64 = 0.0;
    let mut at_10 = f64::NAN;
    let mut checked = 0;
    for r in rec.rows.iter().filter(|r| r.tau >= rec.tau_threshold) {
        checked += 1;
        gap = gap.max((r.inverse_norm - closed(r.tau, r.theta)).abs());
        if r.tau == 10.0 && r.theta == PI {
            at_10 = r.inverse_norm;
        }
    }
    let mut slopes = Vec::new();
    let mut gain_ratio: f64 = 0.0;
    for &theta in &thetas {
        let ray: Vec<_> = rec.rows.iter().filter(|r| r.theta == theta).collect();
        let fit: Vec<_> = ray.iter().filter(|r| (10.0..=1000.0).contains(&r.tau)).collect();
        let (xs, ys): (Vec<f64>, Vec<f64>) = fit.iter().map(|r| (r.tau, r.inverse_norm)).unzip();
        slopes.push(loglog_fit(&xs, &ys).0);
        let base = ray.iter().filter(|r| r.tau >= rec.tau_threshold).map(|r| r.domain_gain).next().unwrap_or(f64::NAN);
        for r in ray.iter().filter(|r| r.tau >= rec.tau_threshold) {
            gain_ratio = gain_ratio.max(r.domain_gain / base);
        }
    }
    let lib_slopes_ok = rec.fits.iter().all(|f| (-1.1..=-0.9).contains(&f.slope)) && rec.covers_two_decades();
    let pass = checked > 0
        && gap <= 1e-10
        && (at_10 - 1.0 / 11.0).abs() <= 1e-10
        && slopes.iter().all(|s| (-1.1..=-0.9).contains(s))
        && lib_slopes_ok
        && gain_ratio <= 2.0
        && rec.domain_gain_ratio <= 2.0;
    Ok((
        pass,
        format!(
            "closed-form gap {gap:.1e} at {checked} points with tau >= tau_0 = {:.3}, tau=10 at pi -> {at_10:.12}; slopes [{}] over 10..1000; domain gain ratio {gain_ratio:.3}",
            rec.tau_threshold,
            slopes.iter().map(|s| format!("{s:.4}")).collect::<Vec<_>>().join(", ")
        ),
    ))
}

fn criterion_7() -> Outcome {
    let k = 32;
    let a = catalog::bessel(1.0);
    let b = a.scale(C64::new(-1.0, 0.0));
    let p = make_hardy_projection(k)?;
    let strip = ParameterStrip::log_spaced(0.5 * PI, 1.5 * PI, 0.0, 3.0, 4, 5)?;
    let v = remark_identity_check(&a, &b, &p, &strip, k)?;

    let (pm, _) = hardy_exact(k);
    let n = n_of(k);
    let id = CMatrix::identity(n, n);
    let qm = &id - &pm;
    let am = CMatrix::from_fn(n, n, |i, j| if i == j { C64::new(bracket(freq(i, k) as f64), 0.0) } else { C64::new(0.0, 0.0) });
    let bm = -&am;
    let cm = &pm * &am * &pm + &qm * &bm * &qm;
    let mut worst: f64 = 0.0;
    for l in sample_lambda(&strip) {
        let z = &id * l.z();
        let lhs = &pm * (&z - &am) * &pm + &qm * (&z - &bm) * &qm;
        let rhs = &z - &cm;
        worst = worst.max(spectral_norm(&(lhs - &rhs)) / spectral_norm(&rhs));
    }
    let pass = v.max_residual <= 1e-12 && worst <= 1e-12;
    Ok((
        pass,
        format!(
            "relative residual {:.1e} (test-side {worst:.1e}) at {} grid points; hypotheses projected={} combined={}",
            v.max_residual,
            v.rows.len(),
            v.hypothesis_projected,
            v.hypothesis_combined
        ),
    ))
}

fn criterion_8() -> Outcome {
    let strip = ParameterStrip::log_spaced(0.0, 0.5 * PI, 0.0, 3.0, 2, 5)?;
    let refined = check_refined(&catalog::resolvent_reduced(), &EllipticityConfig::new(strip, 16))?;
    // principal of ⟨ξ,τ⟩⁻¹(τe^{iθ} − ⟨ξ⟩) on the semicircle: cos ρ e^{iθ} − sin ρ
    let r1 = match refined.witness() {
        Some(Witness::Semicircle { rho, theta, .. }) => Some((C64::from_polar(rho.cos(), theta) - rho.sin()).norm()),
        _ => None,
    };

    let k = 16;
    let p = make_hardy_projection(k)?;
    let strip = ParameterStrip::log_spaced(PI, 1.5 * PI, 0.0, 3.0, 2, 5)?;
    let toep = toeplitz_ellipticity(&catalog::toeplitz_model(), &p, &p, &EllipticityConfig::new(strip, k))?;
    // range of the Hardy principal symbol is ξ > 0, where the symbol is cos ρ e^{iθ} + i sin ρ
    let r2 = match toep.witness() {
        Some(Witness::Semicircle { phi, rho, theta, .. }) if phi > 0.0 => {
            Some((C64::from_polar(rho.cos(), theta) + C64::new(0.0, rho.sin())).norm())
        }
        _ => None,
    };
    let ok = |r: Option<f64>| r.is_some_and(|v| v <= 1e-3);
    let pass = !refined.passes() && !toep.passes() && ok(r1) && ok(r2);
    Ok((
        pass,
        format!(
            "check_refined on [0, pi/2]: witness {:?}, |sigma| = {:?}; toeplitz_ellipticity on [pi, 3pi/2]: witness {:?}, |sigma| = {:?}",
            refined.witness(),
            r1,
            toep.witness(),
            r2
        ),
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("Leibniz-oracle convergence", criterion_1),
        ("limit-family decay", criterion_2),
        ("north-pole machinery", criterion_3),
        ("parametrix exactness", criterion_4),
        ("Toeplitz inverse", criterion_5),
        ("resolvent decay", criterion_6),
        ("remark identity", criterion_7),
        ("negative controls", criterion_8),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let (pass, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
        failed += usize::from(!pass);
        println!("criterion {}: {} {name}: {detail}", i + 1, if pass { "PASS" } else { "FAIL" });
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
