use std::fmt;
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::core_model::strip::{sample_lambda, Lambda};
use crate::ellipticity::{invert_one_plus_smoothing, neumann_parametrix, EllipticityConfig, EllipticityReport};
use crate::error::{PsidoError, Result};
use crate::jet::CMatrix;
use crate::quantize::{quantize, sobolev_opnorm, spectral_norm, LambdaFamily, SmoothingKernel, TruncatedOperator};
use crate::symbol::expr::SymbolExpr;

use super::basis::range_basis;
use super::checks::{reduce, toeplitz_ellipticity_reduced};
use super::projection::{tilde_conjugate, OrderReductionPair, ProjectionSymbol};

/// `P₁ Op(a) P₀` compressed to `range(P₀) → range(P₁)` at sample parameters.
#[derive(Debug, Clone)]
pub struct ToeplitzOperator {
    pub a: SymbolExpr,
    pub p0: ProjectionSymbol,
    pub p1: ProjectionSymbol,
    pub k_max: usize,
    pub compressed: Vec<(Lambda, CMatrix)>,
}

impl ToeplitzOperator {
    pub fn new(a: &SymbolExpr, p0: &ProjectionSymbol, p1: &ProjectionSymbol, lambdas: &[Lambda], k_max: usize) -> Result<Self> {
        let compressed = lambdas
            .par_iter()
            .map(|&l| -> Result<(Lambda, CMatrix)> {
                let m = quantize(a, l, k_max)?.matrix;
                let q0 = p0.operator(l, k_max)?.matrix;
                let q1 = p1.operator(l, k_max)?.matrix;
                let b0 = range_basis(&q0);
                let b1 = range_basis(&q1);
                Ok((l, b1.adjoint() * q1 * m * q0 * b0))
            })
            .collect::<Result<_>>()?;
        Ok(ToeplitzOperator { a: a.clone(), p0: p0.clone(), p1: p1.clone(), k_max, compressed })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToeplitzRow {
    pub tau: f64,
    pub theta: f64,
    /// `‖B′A′ − P₀‖`.
    pub residual_left: f64,
    /// `‖A′B′ − P₁‖`.
    pub residual_right: f64,
    /// `‖S P̃₁ R − P₁‖`.
    pub chain_residual: f64,
    /// `‖1 − A_ext Op(b″)‖` before the smoothing tail.
    pub neumann_residual: f64,
    /// `‖B′‖` on `H^s`.
    pub inverse_norm: f64,
    /// `‖B′‖_{H^s → H^{s+μ}}`.
    pub domain_gain: f64,
    /// `‖B_c − A_c⁻¹‖` between range bases; `None` when the compression is singular.
    pub oracle_gap: Option<f64>,
}

#[derive(Clone)]
pub struct ToeplitzParametrix {
    /// `b″` of the extended symbol `p̃₁ # ã # p₀ + (1 − p̃₁) # (1 − p₀)`.
    pub b_symbol: SymbolExpr,
    pub tail: SmoothingKernel,
    pub tau_threshold: f64,
    pub tau_threshold_per_theta: Vec<(f64, f64)>,
    pub rows: Vec<ToeplitzRow>,
    pub report: EllipticityReport,
    pub k_max: usize,
    pub order: f64,
    pub sobolev_s: f64,
    /// Residuals were measured on `|k| ≤ K/2` because a projection is not exact.
    pub interior_band: bool,
    inverse: OperatorFamily,
}

impl fmt::Debug for ToeplitzParametrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ToeplitzParametrix")
            .field("tau_threshold", &self.tau_threshold)
            .field("k_max", &self.k_max)
            .field("order", &self.order)
            .field("rows", &self.rows)
            .finish_non_exhaustive()
    }
}

impl ToeplitzParametrix {
    /// `B′(λ) = P₀ Op(b″)(1 + s) R P₁` on `|k| ≤ K`.
    pub fn operator(&self, lambda: Lambda) -> Result<CMatrix> {
        (self.inverse)(lambda)
    }

    pub fn past_threshold(&self) -> impl Iterator<Item = &ToeplitzRow> {
        self.rows.iter().filter(move |r| r.tau >= self.tau_threshold)
    }

    /// Worst left/right residual and oracle gap for τ ≥ τ₀.
    pub fn worst_past_threshold(&self) -> (f64, f64, f64) {
        self.past_threshold().fold((0.0, 0.0, 0.0), |acc, r| {
            (
                acc.0.max(r.residual_left),
                acc.1.max(r.residual_right),
                acc.2.max(r.oracle_gap.unwrap_or(f64::INFINITY)),
            )
        })
    }

    pub fn summary(&self) -> ToeplitzSummary {
        let (l, r, g) = self.worst_past_threshold();
        ToeplitzSummary {
            k_max: self.k_max,
            order: self.order,
            sobolev_s: self.sobolev_s,
            tau_threshold: self.tau_threshold,
            tau_threshold_per_theta: self.tau_threshold_per_theta.clone(),
            worst_residual_left: l,
            worst_residual_right: r,
            worst_oracle_gap: g,
            interior_band: self.interior_band,
            rows: self.rows.clone(),
            report: self.report.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToeplitzSummary {
    pub k_max: usize,
    pub order: f64,
    pub sobolev_s: f64,
    pub tau_threshold: f64,
    pub tau_threshold_per_theta: Vec<(f64, f64)>,
    pub worst_residual_left: f64,
    pub worst_residual_right: f64,
    pub worst_oracle_gap: f64,
    pub interior_band: bool,
    pub rows: Vec<ToeplitzRow>,
    pub report: EllipticityReport,
}

/// `A(λ)` on `|k| ≤ K`, before order reduction.
pub type OperatorFamily = Arc<dyn Fn(Lambda) -> Result<CMatrix> + Send + Sync>;

/// Inputs of the construction: the reduced symbol `ã = R # a` for the symbol
/// level and the unreduced operator for the matrix level.
#[derive(Clone)]
pub struct ToeplitzProblem {
    pub reduced: SymbolExpr,
    pub operator: OperatorFamily,
    pub order: f64,
    pub p0: ProjectionSymbol,
    pub p1: ProjectionSymbol,
    pub reduction: Option<OrderReductionPair>,
}

impl ToeplitzProblem {
    pub fn new(a: &SymbolExpr, p0: &ProjectionSymbol, p1: &ProjectionSymbol, cfg: &EllipticityConfig) -> Result<Self> {
        let (reduced, reduction) = reduce(a, cfg.truncation)?;
        let sym = a.clone();
        let k_max = cfg.k_max;
        Ok(ToeplitzProblem {
            reduced,
            operator: Arc::new(move |l| Ok(quantize(&sym, l, k_max)?.matrix)),
            order: a.order().max(0.0),
            p0: p0.clone(),
            p1: p1.clone(),
            reduction,
        })
    }
}

type Key = (u64, u64);

fn key(l: Lambda) -> Key {
    (l.tau.to_bits(), l.theta.to_bits())
}

/// Per-λ matrices of the construction.
struct Stage {
    a: CMatrix,
    p0: CMatrix,
    p1: CMatrix,
    r: CMatrix,
    s: CMatrix,
}

struct Builder {
    problem: ToeplitzProblem,
    b_symbol: SymbolExpr,
    k_max: usize,
    memo: Mutex<HashMap<Key, Arc<(CMatrix, CMatrix)>>>,
}

impl Builder {
    fn stage(&self, l: Lambda) -> Result<Stage> {
        let k = self.k_max;
        let pr = &self.problem;
        let a = (pr.operator)(l)?;
        let p0 = pr.p0.operator(l, k)?.matrix;
        let p1 = pr.p1.operator(l, k)?.matrix;
        let n = a.nrows();
        let (r, s) = match &pr.reduction {
            Some(rs) => rs.operators(l, k)?,
            None => (CMatrix::identity(n, n), CMatrix::identity(n, n)),
        };
        Ok(Stage { a, p0, p1, r, s })
    }

    /// The extended operator and `Op(b″)`.
    fn pair(&self, l: Lambda) -> Result<Arc<(CMatrix, CMatrix)>> {
        if let Some(p) = self.memo.lock().expect("cache lock").get(&key(l)) {
            return Ok(p.clone());
        }
        let st = self.stage(l)?;
        let n = st.a.nrows();
        let id = CMatrix::identity(n, n);
        let p1_tilde = &st.r * &st.p1 * &st.s;
        let ext = &p1_tilde * &st.r * &st.a * &st.p0 + (&id - &p1_tilde) * (&id - &st.p0);
        let b = quantize(&self.b_symbol, l, self.k_max)?.matrix;
        let v = Arc::new((ext, b));
        self.memo.lock().expect("cache lock").insert(key(l), v.clone());
        Ok(v)
    }
}

/// `P₀ B R P₁` with `B = b″(1 + s)` the exact inverse of the extended operator
/// `P̃₁ Ã P₀ + (1 − P̃₁)(1 − P₀)` for τ ≥ τ₀.
pub fn toeplitz_parametrix(
    a: &SymbolExpr,
    p0: &ProjectionSymbol,
    p1: &ProjectionSymbol,
    cfg: &EllipticityConfig,
) -> Result<ToeplitzParametrix> {
    solve(&ToeplitzProblem::new(a, p0, p1, cfg)?, cfg, 0.0)
}

pub fn solve(problem: &ToeplitzProblem, cfg: &EllipticityConfig, sobolev_s: f64) -> Result<ToeplitzParametrix> {
    let report = toeplitz_ellipticity_reduced(&problem.reduced, &problem.p0, &problem.p1, cfg)?;
    if !report.passes() {
        return Err(PsidoError::EllipticityFailed(Box::new(report)));
    }
    let n = problem.reduced.shape().0;
    let one = SymbolExpr::identity(n);
    let n_tr = cfg.truncation;
    let p1_tilde = match &problem.reduction {
        Some(rs) => tilde_conjugate(&problem.p1, rs, n_tr)?,
        None => problem.p1.clone(),
    };
    let p0s = &problem.p0.symbol;
    let p1s = &p1_tilde.symbol;
    let main = SymbolExpr::leibniz(p1s, &SymbolExpr::leibniz(&problem.reduced, p0s, n_tr)?, n_tr)?;
    let complement = SymbolExpr::leibniz(&one.sub(p1s)?, &one.sub(p0s)?, n_tr)?;
    let ext = main.add(&complement)?.with_name("extended");
    let neumann = neumann_parametrix(&ext, cfg.depth, cfg.excision_radius(), n_tr)?;

    let k_max = cfg.k_max;
    let dim = (2 * k_max + 1) * n;
    let builder = Arc::new(Builder {
        problem: problem.clone(),
        b_symbol: neumann.b_double_prime.clone(),
        k_max,
        memo: Mutex::new(HashMap::new()),
    });
    let grid = sample_lambda(&cfg.strip);
    grid.par_iter().map(|&l| builder.pair(l).map(|_| ())).collect::<Result<Vec<()>>>()?;

    let bc = builder.clone();
    let r_family: LambdaFamily = Arc::new(move |l: Lambda| {
        let p = bc.pair(l).ok()?;
        Some(&p.0 * &p.1 - CMatrix::identity(dim, dim))
    });
    let r = SmoothingKernel::new(r_family, grid.clone(), k_max, (n, n))?;
    let tail = invert_one_plus_smoothing(&r)?;
    let r_norms: HashMap<Key, f64> = r.sample_norms().iter().map(|(l, v)| (key(*l), *v)).collect();

    let (bi, si) = (builder.clone(), tail.s.clone());
    let inverse: OperatorFamily = Arc::new(move |l: Lambda| {
        let st = bi.stage(l)?;
        let b = &bi.pair(l)?.1;
        let full = b + b * si.matrix(l)?;
        Ok(&st.p0 * full * &st.r * &st.p1)
    });

    let exact = problem.p0.exact && problem.p1.exact;
    let band = if exact { k_max } else { k_max / 2 };
    let cut = |m: CMatrix, l: Lambda| -> Result<CMatrix> { Ok(TruncatedOperator::new(m, l, k_max, (n, n))?.band(band)) };
    let rows: Vec<ToeplitzRow> = grid
        .par_iter()
        .map(|&l| -> Result<ToeplitzRow> {
            let st = builder.stage(l)?;
            let a_prime = &st.p1 * &st.a * &st.p0;
            let bp = inverse(l)?;
            let residual_left = spectral_norm(&cut(&bp * &a_prime - &st.p0, l)?);
            let residual_right = spectral_norm(&cut(&a_prime * &bp - &st.p1, l)?);
            let chain_residual = spectral_norm(&cut(&st.s * (&st.r * &st.p1 * &st.s) * &st.r - &st.p1, l)?);
            let b_op = TruncatedOperator::new(bp.clone(), l, k_max, (n, n))?;
            let inverse_norm = sobolev_opnorm(&b_op, sobolev_s, sobolev_s);
            let domain_gain = sobolev_opnorm(&b_op, sobolev_s, sobolev_s + problem.order);
            let q0 = range_basis(&st.p0);
            let q1 = range_basis(&st.p1);
            let ac = q1.adjoint() * &a_prime * &q0;
            let bcm = q0.adjoint() * &bp * &q1;
            let oracle_gap = if ac.is_square() && !ac.is_empty() {
                ac.try_inverse().map(|inv| spectral_norm(&(bcm - inv)))
            } else {
                None
            };
            Ok(ToeplitzRow {
                tau: l.tau,
                theta: l.theta,
                residual_left,
                residual_right,
                chain_residual,
                neumann_residual: r_norms.get(&key(l)).copied().unwrap_or(f64::NAN),
                inverse_norm,
                domain_gain,
                oracle_gap,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ToeplitzParametrix {
        b_symbol: neumann.b_double_prime,
        tau_threshold: tail.threshold,
        tau_threshold_per_theta: tail.per_theta.clone(),
        tail: tail.s,
        rows,
        report,
        k_max,
        order: problem.order,
        sobolev_s,
        interior_band: !exact,
        inverse,
    })
}
