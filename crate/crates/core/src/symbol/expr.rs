//! Structured symbols over a closed generator set.
//!
//! Every node carries its order, shape, and principal data (homogeneous
//! principal symbol, angular symbol, limit-family). Those data propagate by
//! rule through sums, Leibniz products, adjoints and excised inverses and are
//! cross-checked numerically elsewhere.

use std::fmt;
use std::sync::{Arc, OnceLock};

use crate::error::{PsidoError, Result};
use crate::jet::{factorial, CMatrix, Jet, MatJet, C64, MAX_JET_LEN};
use crate::quantize::SmoothingKernel;
use crate::symbol::excision::chi_jet;
use crate::symbol::principal::{AngularSymbol, HomogComponent};
use crate::symbol::spectral::FieldCtx;
use crate::symbol::taylor::{pole_limit, TaylorData};

/// `(x, ξ-jet, τ, θ) ↦ matrix jet`.
type FieldMemo = std::collections::HashMap<(usize, usize), XField>;

pub type JetEval = Arc<dyn Fn(f64, &Jet, f64, f64) -> MatJet + Send + Sync>;

pub const MAX_TRUNCATION: usize = 6;
/// x-grid used for point evaluation of composite symbols.
pub const DEFAULT_NX: usize = 64;

#[derive(Clone)]
pub enum SymbolKind {
    /// Parameter-dependent classical symbol; `components[0]` is principal.
    ClassicalParam { components: Vec<HomogComponent>, symbol: JetEval },
    /// Parameter-independent classical symbol; components homogeneous in ξ.
    FixedSymbol { components: Vec<HomogComponent>, symbol: JetEval },
    TaylorHomogeneous { taylor: Arc<TaylorData>, excision: f64, symbol: JetEval },
    SmoothingKernel(Arc<SmoothingKernel>),
    Sum(Vec<(C64, SymbolExpr)>),
    LeibnizProduct { left: SymbolExpr, right: SymbolExpr, truncation: usize },
    Adjoint { inner: SymbolExpr, truncation: usize },
    ExcisedInverse { inner: SymbolExpr, excision: f64 },
}

/// Split of the order into a part measured in `⟨ξ⟩` and a part in `⟨ξ,τ⟩`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderProfile {
    pub fixed: f64,
    pub param: f64,
}

/// `τ → ∞` limit of a symbol: a τ-independent symbol of the same shape.
#[derive(Clone, Debug)]
pub struct LimitFamily {
    pub order: f64,
    pub is_zero: bool,
    pub symbol: SymbolExpr,
}

impl LimitFamily {
    pub fn zero(order: f64, shape: (usize, usize)) -> Self {
        LimitFamily { order, is_zero: true, symbol: SymbolExpr::zero(shape) }
    }

    pub fn eval(&self, x: f64, xi: f64, theta: f64) -> Result<CMatrix> {
        self.symbol.eval(x, xi, 1.0, theta)
    }
}

struct Node {
    name: String,
    order: f64,
    shape: (usize, usize),
    kind: SymbolKind,
    x_dependent: bool,
    tau_dependent: bool,
    classical: bool,
    profile: OrderProfile,
    principal: Option<HomogComponent>,
    angular: OnceLock<Option<AngularSymbol>>,
    limit: OnceLock<std::result::Result<LimitFamily, String>>,
}

#[derive(Clone)]
pub struct SymbolExpr(Arc<Node>);

impl fmt::Debug for SymbolExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SymbolExpr")
            .field("name", &self.0.name)
            .field("order", &self.0.order)
            .field("shape", &self.0.shape)
            .finish_non_exhaustive()
    }
}

/// Samples of a symbol over the x-grid at fixed `(ξ0, τ, θ)`.
#[derive(Clone, Debug)]
pub enum XField {
    Const(MatJet),
    Grid(Vec<MatJet>),
}

impl XField {
    pub fn at(&self, j: usize) -> &MatJet {
        match self {
            XField::Const(m) => m,
            XField::Grid(v) => &v[j],
        }
    }

    pub fn is_const(&self) -> bool {
        matches!(self, XField::Const(_))
    }

    fn map(&self, f: impl Fn(&MatJet) -> MatJet) -> XField {
        match self {
            XField::Const(m) => XField::Const(f(m)),
            XField::Grid(v) => XField::Grid(v.iter().map(f).collect()),
        }
    }

    fn into_grid(self, nx: usize) -> Vec<MatJet> {
        match self {
            XField::Const(m) => vec![m; nx],
            XField::Grid(v) => v,
        }
    }

    fn to_grid(&self, nx: usize) -> Vec<MatJet> {
        match self {
            XField::Const(m) => vec![m.clone(); nx],
            XField::Grid(v) => v.clone(),
        }
    }

    pub fn values(&self, nx: usize) -> Vec<CMatrix> {
        match self {
            XField::Const(m) => vec![m.value().clone(); nx],
            XField::Grid(v) => v.iter().map(|m| m.value().clone()).collect(),
        }
    }
}

fn merge(a: XField, b: XField, nx: usize, f: impl Fn(&MatJet, &MatJet) -> MatJet) -> XField {
    match (&a, &b) {
        (XField::Const(x), XField::Const(y)) => XField::Const(f(x, y)),
        _ => {
            let ga = a.to_grid(nx);
            let gb = b.to_grid(nx);
            XField::Grid(ga.iter().zip(&gb).map(|(x, y)| f(x, y)).collect())
        }
    }
}

impl SymbolExpr {
    fn from_node(node: Node) -> Self {
        SymbolExpr(Arc::new(node))
    }

    /// Parameter-dependent classical symbol with closed-form evaluator.
    #[allow(clippy::too_many_arguments)]
    pub fn classical(
        name: impl Into<String>,
        order: f64,
        shape: (usize, usize),
        x_dependent: bool,
        tau_dependent: bool,
        principal: HomogComponent,
        symbol: JetEval,
    ) -> Self {
        let principal_c = principal.clone();
        SymbolExpr::from_node(Node {
            name: name.into(),
            order,
            shape,
            kind: SymbolKind::ClassicalParam { components: vec![principal], symbol },
            x_dependent,
            tau_dependent,
            classical: true,
            profile: OrderProfile { fixed: 0.0, param: order },
            principal: Some(principal_c),
            angular: OnceLock::new(),
            limit: OnceLock::new(),
        })
    }

    /// Parameter-independent symbol of order `order`; `principal` ignores τ.
    pub fn fixed(
        name: impl Into<String>,
        order: f64,
        shape: (usize, usize),
        x_dependent: bool,
        principal: HomogComponent,
        symbol: JetEval,
    ) -> Self {
        let principal_c = principal.clone();
        SymbolExpr::from_node(Node {
            name: name.into(),
            order,
            shape,
            kind: SymbolKind::FixedSymbol { components: vec![principal], symbol },
            x_dependent,
            tau_dependent: false,
            classical: false,
            profile: OrderProfile { fixed: order, param: 0.0 },
            principal: Some(principal_c),
            angular: OnceLock::new(),
            limit: OnceLock::new(),
        })
    }

    /// A symbol known only through its evaluator. It carries no principal data,
    /// so its limit-family is not available by rule.
    pub fn raw(
        name: impl Into<String>,
        order: f64,
        shape: (usize, usize),
        x_dependent: bool,
        tau_dependent: bool,
        symbol: JetEval,
    ) -> Self {
        SymbolExpr::from_node(Node {
            name: name.into(),
            order,
            shape,
            kind: SymbolKind::ClassicalParam { components: Vec::new(), symbol },
            x_dependent,
            tau_dependent,
            classical: false,
            profile: OrderProfile { fixed: 0.0, param: order },
            principal: None,
            angular: OnceLock::new(),
            limit: OnceLock::new(),
        })
    }

    pub(crate) fn taylor_node(
        name: impl Into<String>,
        taylor: Arc<TaylorData>,
        excision: f64,
        x_dependent: bool,
        symbol: JetEval,
    ) -> Self {
        let shape = taylor.shape();
        let t = taylor.clone();
        let principal = HomogComponent::from_fn(0.0, move |x, xi, tau, theta| {
            let r = (xi * xi + tau * tau).sqrt();
            let rho = (xi.abs() / r).atan2(tau / r);
            let phi = if xi >= 0.0 { 1.0 } else { -1.0 };
            t.eval(x, phi, rho, theta)
        });
        SymbolExpr::from_node(Node {
            name: name.into(),
            order: 0.0,
            shape,
            kind: SymbolKind::TaylorHomogeneous { taylor, excision, symbol },
            x_dependent,
            tau_dependent: true,
            classical: false,
            profile: OrderProfile { fixed: 0.0, param: 0.0 },
            principal: Some(principal),
            angular: OnceLock::new(),
            limit: OnceLock::new(),
        })
    }

    pub fn smoothing(kernel: Arc<SmoothingKernel>) -> Self {
        let shape = kernel.shape();
        SymbolExpr::from_node(Node {
            name: "smoothing".into(),
            order: f64::NEG_INFINITY,
            shape,
            kind: SymbolKind::SmoothingKernel(kernel),
            x_dependent: true,
            tau_dependent: true,
            classical: false,
            profile: OrderProfile { fixed: f64::NEG_INFINITY, param: f64::NEG_INFINITY },
            principal: Some(HomogComponent::zero(shape.0, shape.1)),
            angular: OnceLock::new(),
            limit: OnceLock::new(),
        })
    }

    pub fn zero(shape: (usize, usize)) -> Self {
        SymbolExpr::from_node(Node {
            name: "0".into(),
            order: f64::NEG_INFINITY,
            shape,
            kind: SymbolKind::Sum(Vec::new()),
            x_dependent: false,
            tau_dependent: false,
            classical: true,
            profile: OrderProfile { fixed: f64::NEG_INFINITY, param: f64::NEG_INFINITY },
            principal: Some(HomogComponent::zero(shape.0, shape.1)),
            angular: OnceLock::new(),
            limit: OnceLock::new(),
        })
    }

    /// Constant matrix symbol (order 0, classical, τ-independent).
    pub fn constant(name: impl Into<String>, m: CMatrix) -> Self {
        let shape = m.shape();
        let mp = m.clone();
        let principal = HomogComponent::from_fn(0.0, move |_, _, _, _| mp.clone());
        SymbolExpr::classical(
            name,
            0.0,
            shape,
            false,
            false,
            principal,
            Arc::new(move |_, xi, _, _| MatJet::constant(m.clone(), xi.len())),
        )
    }

    pub fn identity(n: usize) -> Self {
        SymbolExpr::constant("1", CMatrix::identity(n, n))
    }

    /// Linear combination `Σ c_i a_i`.
    pub fn sum(terms: Vec<(C64, SymbolExpr)>) -> Result<Self> {
        let Some(first) = terms.first() else {
            return Err(PsidoError::ShapeMismatch("empty sum has no shape".into()));
        };
        let shape = first.1.shape();
        if let Some((_, bad)) = terms.iter().find(|(_, t)| t.shape() != shape) {
            return Err(PsidoError::ShapeMismatch(format!(
                "sum of {:?} and {:?}",
                shape,
                bad.shape()
            )));
        }
        let order = terms.iter().map(|(_, t)| t.order()).fold(f64::NEG_INFINITY, f64::max);
        let profile = OrderProfile {
            fixed: terms.iter().map(|(_, t)| t.0.profile.fixed).fold(f64::NEG_INFINITY, f64::max),
            param: terms.iter().map(|(_, t)| t.0.profile.param).fold(f64::NEG_INFINITY, f64::max),
        };
        let principal = sum_principal(&terms, shape);
        let name = terms
            .iter()
            .map(|(c, t)| {
                if *c == C64::new(1.0, 0.0) {
                    t.name().to_string()
                } else {
                    format!("({c})·{}", t.name())
                }
            })
            .collect::<Vec<_>>()
            .join(" + ");
        Ok(SymbolExpr::from_node(Node {
            name,
            order,
            shape,
            x_dependent: terms.iter().any(|(_, t)| t.is_x_dependent()),
            tau_dependent: terms.iter().any(|(_, t)| t.is_tau_dependent()),
            classical: terms.iter().all(|(_, t)| t.0.classical),
            profile,
            principal,
            kind: SymbolKind::Sum(terms),
            angular: OnceLock::new(),
            limit: OnceLock::new(),
        }))
    }

    pub fn add(&self, other: &SymbolExpr) -> Result<Self> {
        SymbolExpr::sum(vec![(C64::new(1.0, 0.0), self.clone()), (C64::new(1.0, 0.0), other.clone())])
    }

    pub fn sub(&self, other: &SymbolExpr) -> Result<Self> {
        SymbolExpr::sum(vec![(C64::new(1.0, 0.0), self.clone()), (C64::new(-1.0, 0.0), other.clone())])
    }

    pub fn scale(&self, c: C64) -> Self {
        SymbolExpr::sum(vec![(c, self.clone())]).expect("single-term sum")
    }

    /// Truncated Leibniz product `Σ_{α≤N} (1/α!) ∂^α_ξ a · D^α_x b`.
    pub fn leibniz(left: &SymbolExpr, right: &SymbolExpr, truncation: usize) -> Result<Self> {
        if truncation > MAX_TRUNCATION {
            return Err(PsidoError::TruncationTooDeep(truncation));
        }
        let (l1, l0) = left.shape();
        let (r1, r0) = right.shape();
        if l0 != r1 {
            return Err(PsidoError::ShapeMismatch(format!(
                "cannot compose {l1}x{l0} with {r1}x{r0}"
            )));
        }
        let principal = match (left.principal(), right.principal()) {
            (Some(a), Some(b)) => Some(product_principal(a, b, (l1, r0))),
            _ => None,
        };
        Ok(SymbolExpr::from_node(Node {
            name: format!("({})#({})", left.name(), right.name()),
            order: left.order() + right.order(),
            shape: (l1, r0),
            x_dependent: left.is_x_dependent() || right.is_x_dependent(),
            tau_dependent: left.is_tau_dependent() || right.is_tau_dependent(),
            classical: left.0.classical && right.0.classical,
            profile: OrderProfile {
                fixed: left.0.profile.fixed + right.0.profile.fixed,
                param: left.0.profile.param + right.0.profile.param,
            },
            principal,
            kind: SymbolKind::LeibnizProduct {
                left: left.clone(),
                right: right.clone(),
                truncation,
            },
            angular: OnceLock::new(),
            limit: OnceLock::new(),
        }))
    }

    /// Truncated formal adjoint `Σ_{α≤N} (1/α!) ∂^α_ξ D^α_x a*`.
    pub fn adjoint(inner: &SymbolExpr, truncation: usize) -> Result<Self> {
        if truncation > MAX_TRUNCATION {
            return Err(PsidoError::TruncationTooDeep(truncation));
        }
        let (n1, n0) = inner.shape();
        let principal = inner.principal().map(|p| {
            let p = p.clone();
            HomogComponent::from_fn(p.degree, move |x, xi, tau, theta| p.eval(x, xi, tau, theta).adjoint())
        });
        Ok(SymbolExpr::from_node(Node {
            name: format!("({})*", inner.name()),
            order: inner.order(),
            shape: (n0, n1),
            x_dependent: inner.is_x_dependent(),
            tau_dependent: inner.is_tau_dependent(),
            classical: inner.0.classical,
            profile: inner.0.profile,
            principal,
            kind: SymbolKind::Adjoint { inner: inner.clone(), truncation },
            angular: OnceLock::new(),
            limit: OnceLock::new(),
        }))
    }

    /// Pointwise `χ(ξ/c) a(x,ξ,λ)^{-1}`.
    pub fn excised_inverse(inner: &SymbolExpr, excision: f64) -> Result<Self> {
        let (n1, n0) = inner.shape();
        if n1 != n0 {
            return Err(PsidoError::ShapeMismatch(format!("cannot invert a {n1}x{n0} symbol")));
        }
        let principal = inner.principal().filter(|p| p.degree.is_finite()).map(|p| {
            let p = p.clone();
            HomogComponent::from_fn(-p.degree, move |x, xi, tau, theta| {
                p.eval(x, xi, tau, theta)
                    .try_inverse()
                    .unwrap_or_else(|| CMatrix::from_element(n1, n1, C64::new(f64::NAN, 0.0)))
            })
        });
        Ok(SymbolExpr::from_node(Node {
            name: format!("inv({})", inner.name()),
            order: -inner.order(),
            shape: (n1, n1),
            x_dependent: inner.is_x_dependent(),
            tau_dependent: inner.is_tau_dependent(),
            classical: false,
            profile: OrderProfile { fixed: -inner.0.profile.fixed, param: -inner.0.profile.param },
            principal,
            kind: SymbolKind::ExcisedInverse { inner: inner.clone(), excision },
            angular: OnceLock::new(),
            limit: OnceLock::new(),
        }))
    }

    pub fn with_name(&self, name: impl Into<String>) -> Self {
        let n = &self.0;
        SymbolExpr::from_node(Node {
            name: name.into(),
            order: n.order,
            shape: n.shape,
            kind: n.kind.clone(),
            x_dependent: n.x_dependent,
            tau_dependent: n.tau_dependent,
            classical: n.classical,
            profile: n.profile,
            principal: n.principal.clone(),
            angular: OnceLock::new(),
            limit: OnceLock::new(),
        })
    }

    pub fn name(&self) -> &str {
        &self.0.name
    }

    pub fn order(&self) -> f64 {
        self.0.order
    }

    /// `(N1, N0)`: values are `N1 × N0` matrices.
    pub fn shape(&self) -> (usize, usize) {
        self.0.shape
    }

    pub fn kind(&self) -> &SymbolKind {
        &self.0.kind
    }

    pub fn profile(&self) -> OrderProfile {
        self.0.profile
    }

    pub fn is_x_dependent(&self) -> bool {
        self.0.x_dependent
    }

    pub fn is_tau_dependent(&self) -> bool {
        self.0.tau_dependent
    }

    pub fn is_classical(&self) -> bool {
        self.0.classical
    }

    pub fn principal(&self) -> Option<&HomogComponent> {
        self.0.principal.as_ref()
    }

    pub fn ptr_eq(&self, other: &SymbolExpr) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }

    /// Weakly classical: order 0, degree-0 principal symbol, and a limit-family.
    pub fn is_weakly_classical(&self) -> bool {
        self.order() <= 0.0
            && self.principal().is_some_and(|p| p.degree <= 0.0)
            && self.limit_family().is_ok()
    }

    /// Angular symbol: `lim_{ρ→0}` of the principal symbol at `(sin ρ·φ, cos ρ)`.
    pub fn angular(&self) -> Option<AngularSymbol> {
        self.0.angular.get_or_init(|| self.compute_angular()).clone()
    }

    pub fn limit_family(&self) -> Result<LimitFamily> {
        self.0
            .limit
            .get_or_init(|| self.compute_limit())
            .clone()
            .map_err(PsidoError::NotInCalculus)
    }

    fn compute_angular(&self) -> Option<AngularSymbol> {
        let shape = self.shape();
        let rule = match &self.0.kind {
            SymbolKind::ClassicalParam { components, .. } => components.first().cloned().map(|p| {
                AngularSymbol::from_fn(move |x, _phi, theta| p.eval(x, 0.0, 1.0, theta))
            }),
            SymbolKind::FixedSymbol { components, .. } => {
                let p = components[0].clone();
                if p.degree == 0.0 {
                    Some(AngularSymbol::from_fn(move |x, phi, theta| p.eval(x, phi, 1.0, theta)))
                } else if p.degree > 0.0 {
                    Some(zero_angular(shape))
                } else {
                    None
                }
            }
            SymbolKind::TaylorHomogeneous { taylor, .. } => {
                let t = taylor.clone();
                Some(AngularSymbol::from_fn(move |x, phi, theta| t.coefficient(0, x, phi, theta)))
            }
            SymbolKind::SmoothingKernel(_) => Some(zero_angular(shape)),
            SymbolKind::Sum(terms) => {
                let top = self.principal().map(|p| p.degree);
                let mut parts = Vec::new();
                let mut ok = true;
                for (c, t) in terms {
                    let deg = t.principal().map(|p| p.degree);
                    if deg.is_some() && deg == top && top != Some(f64::NEG_INFINITY) {
                        match t.angular() {
                            Some(a) => parts.push((*c, a)),
                            None => ok = false,
                        }
                    }
                }
                ok.then(|| {
                    AngularSymbol::from_fn(move |x, phi, theta| {
                        parts.iter().fold(CMatrix::zeros(shape.0, shape.1), |acc, (c, a)| {
                            acc + a.eval(x, phi, theta) * *c
                        })
                    })
                })
            }
            SymbolKind::LeibnizProduct { left, right, .. } => {
                let lp = left.principal().map(|p| p.degree).unwrap_or(f64::NAN);
                let rp = right.principal().map(|p| p.degree).unwrap_or(f64::NAN);
                // a pole blow-up on one side cannot be cancelled by the rule
                if lp < 0.0 && !left.is_classical() || rp < 0.0 && !right.is_classical() {
                    None
                } else {
                    match (left.angular(), right.angular()) {
                        (Some(a), Some(b)) => Some(AngularSymbol::from_fn(move |x, phi, theta| {
                            a.eval(x, phi, theta) * b.eval(x, phi, theta)
                        })),
                        _ => None,
                    }
                }
            }
            SymbolKind::Adjoint { inner, .. } => inner.angular().map(|a| {
                AngularSymbol::from_fn(move |x, phi, theta| a.eval(x, phi, theta).adjoint())
            }),
            SymbolKind::ExcisedInverse { inner, .. } => inner.angular().map(|a| {
                AngularSymbol::from_fn(move |x, phi, theta| {
                    a.eval(x, phi, theta)
                        .try_inverse()
                        .unwrap_or_else(|| CMatrix::from_element(shape.0, shape.1, C64::new(f64::NAN, 0.0)))
                })
            }),
        };
        rule.or_else(|| {
            let p = self.principal()?.clone();
            if p.degree != 0.0 {
                return None;
            }
            Some(AngularSymbol::from_fn(move |x, phi, theta| {
                pole_limit(|rho| p.on_semicircle(x, phi, rho, theta))
            }))
        })
    }

    fn compute_limit(&self) -> std::result::Result<LimitFamily, String> {
        let shape = self.shape();
        let order = self.order();
        if self.principal().is_none() {
            return Err(format!("`{}` carries no structure from which a limit-family follows", self.name()));
        }
        if !self.is_tau_dependent() {
            return if order <= 0.0 || order == f64::NEG_INFINITY {
                Ok(LimitFamily { order, is_zero: false, symbol: self.clone() })
            } else {
                Err(format!(
                    "`{}` is a parameter-independent symbol of positive order {order} without order reduction",
                    self.name()
                ))
            };
        }
        if self.is_classical() {
            return classical_limit(self);
        }
        match &self.0.kind {
            SymbolKind::ClassicalParam { .. } => classical_limit(self),
            SymbolKind::FixedSymbol { .. } => unreachable!("fixed symbols are tau-independent"),
            SymbolKind::TaylorHomogeneous { taylor, excision, .. } => {
                if taylor.leading_vanishes() {
                    Ok(LimitFamily::zero(0.0, shape))
                } else {
                    Ok(LimitFamily { order: 0.0, is_zero: false, symbol: taylor.leading_fixed_symbol(*excision) })
                }
            }
            SymbolKind::SmoothingKernel(k) => {
                if k.is_vanishing() {
                    Ok(LimitFamily::zero(order, shape))
                } else {
                    Err("smoothing family does not vanish at infinity".into())
                }
            }
            SymbolKind::Sum(terms) => {
                let mut parts = Vec::new();
                for (c, t) in terms {
                    let l = t.limit_family().map_err(|e| e.to_string())?;
                    if !l.is_zero {
                        parts.push((*c, l.symbol));
                    }
                }
                if parts.is_empty() {
                    Ok(LimitFamily::zero(order, shape))
                } else {
                    let s = SymbolExpr::sum(parts).map_err(|e| e.to_string())?;
                    Ok(LimitFamily { order, is_zero: false, symbol: s })
                }
            }
            SymbolKind::LeibnizProduct { left, right, truncation } => {
                let prof = self.profile();
                if prof.param == 0.0 {
                    if let Some(l) = conjugation_limit(self, *truncation)? {
                        return Ok(l);
                    }
                }
                if prof.param < 0.0 {
                    if order <= 0.0 {
                        return Ok(LimitFamily::zero(order, shape));
                    }
                    return Err(format!(
                        "`{}` has fixed order {} not compensated by the parameter order {}",
                        self.name(),
                        prof.fixed,
                        prof.param
                    ));
                }
                let l = left.limit_family().map_err(|e| e.to_string())?;
                let r = right.limit_family().map_err(|e| e.to_string())?;
                if l.is_zero || r.is_zero {
                    return Ok(LimitFamily::zero(order, shape));
                }
                let s = SymbolExpr::leibniz(&l.symbol, &r.symbol, *truncation).map_err(|e| e.to_string())?;
                Ok(LimitFamily { order, is_zero: false, symbol: s })
            }
            SymbolKind::Adjoint { inner, truncation } => {
                let l = inner.limit_family().map_err(|e| e.to_string())?;
                if l.is_zero {
                    return Ok(LimitFamily::zero(order, shape));
                }
                let s = SymbolExpr::adjoint(&l.symbol, *truncation).map_err(|e| e.to_string())?;
                Ok(LimitFamily { order, is_zero: false, symbol: s })
            }
            SymbolKind::ExcisedInverse { inner, excision } => {
                let l = inner.limit_family().map_err(|e| e.to_string())?;
                if l.is_zero {
                    return Err(format!("limit-family of `{}` vanishes and cannot be inverted", inner.name()));
                }
                let s = SymbolExpr::excised_inverse(&l.symbol, *excision).map_err(|e| e.to_string())?;
                Ok(LimitFamily { order, is_zero: false, symbol: s })
            }
        }
    }

    /// Field samples over the x-grid of `ctx` at `(ξ0, τ, θ)`, as jets of length `ctx.len()`.
    pub fn field(&self, xi: f64, tau: f64, theta: f64, ctx: &FieldCtx) -> Result<XField> {
        self.field_in(xi, tau, theta, ctx, &mut FieldMemo::default())
    }

    /// Shared subtrees are evaluated once per `(node, jet length)`.
    fn field_in(&self, xi: f64, tau: f64, theta: f64, ctx: &FieldCtx, memo: &mut FieldMemo) -> Result<XField> {
        let key = (Arc::as_ptr(&self.0) as usize, ctx.len());
        if let Some(f) = memo.get(&key) {
            return Ok(f.clone());
        }
        let f = self.field_uncached(xi, tau, theta, ctx, memo)?;
        if Arc::strong_count(&self.0) > 1 {
            memo.insert(key, f.clone());
        }
        Ok(f)
    }

    fn field_uncached(&self, xi: f64, tau: f64, theta: f64, ctx: &FieldCtx, memo: &mut FieldMemo) -> Result<XField> {
        let len = ctx.len();
        if len > MAX_JET_LEN {
            return Err(PsidoError::TruncationTooDeep(len));
        }
        let nx = ctx.nx();
        match &self.0.kind {
            SymbolKind::ClassicalParam { symbol, .. }
            | SymbolKind::FixedSymbol { symbol, .. }
            | SymbolKind::TaylorHomogeneous { symbol, .. } => {
                let jet = Jet::variable(xi, len);
                if self.is_x_dependent() {
                    Ok(XField::Grid(ctx.xs().iter().map(|&x| symbol(x, &jet, tau, theta)).collect()))
                } else {
                    Ok(XField::Const(symbol(0.0, &jet, tau, theta)))
                }
            }
            SymbolKind::SmoothingKernel(k) => {
                if len > 1 {
                    return Err(PsidoError::NonEvaluable {
                        x: f64::NAN,
                        xi,
                        tau,
                        theta,
                        reason: "smoothing kernels carry no covariable derivatives".into(),
                    });
                }
                let vals = ctx
                    .xs()
                    .iter()
                    .map(|&x| k.symbol_at(x, xi, tau, theta))
                    .collect::<Result<Vec<_>>>()?;
                Ok(XField::Grid(vals.into_iter().map(|v| MatJet::constant(v, len)).collect()))
            }
            SymbolKind::Sum(terms) => {
                let mut acc = XField::Const(MatJet::zeros(self.shape().0, self.shape().1, len));
                for (c, t) in terms {
                    let f = t.field_in(xi, tau, theta, ctx, memo)?;
                    acc = match (acc, f) {
                        (XField::Const(mut a), XField::Const(b)) => {
                            a.add_assign_scaled(&b, *c);
                            XField::Const(a)
                        }
                        (a, b) => {
                            let mut g = a.into_grid(nx);
                            for (j, gj) in g.iter_mut().enumerate() {
                                gj.add_assign_scaled(b.at(j), *c);
                            }
                            XField::Grid(g)
                        }
                    };
                }
                Ok(acc)
            }
            SymbolKind::LeibnizProduct { left, right, truncation } => {
                let n = *truncation;
                let lf = left.field_in(xi, tau, theta, &ctx.with_len(len + n), memo)?;
                let rf = right.field_in(xi, tau, theta, ctx, memo)?;
                if rf.is_const() {
                    // D_x b = 0: only the α = 0 term survives
                    return Ok(merge(lf, rf, nx, |a, b| a.truncate(len).mul(b)));
                }
                let rg = rf.to_grid(nx);
                let drs: Vec<Vec<MatJet>> = (0..=n).map(|alpha| ctx.dx_power(&rg, alpha)).collect();
                Ok(XField::Grid(
                    (0..nx)
                        .map(|j| {
                            let rj: Vec<&MatJet> = drs.iter().map(|d| &d[j]).collect();
                            lf.at(j).leibniz_sum(&rj, len)
                        })
                        .collect(),
                ))
            }
            SymbolKind::Adjoint { inner, truncation } => {
                let n = *truncation;
                let f = inner.field_in(xi, tau, theta, &ctx.with_len(len + n), memo)?.map(MatJet::adjoint);
                if f.is_const() {
                    return Ok(f.map(|m| m.truncate(len)));
                }
                let g = f.to_grid(nx);
                let mut acc: Vec<MatJet> = Vec::new();
                for alpha in 0..=n {
                    let d = ctx.dx_power(&g, alpha);
                    let w = C64::new(1.0 / factorial(alpha), 0.0);
                    let terms: Vec<MatJet> =
                        d.iter().map(|m| m.deriv(alpha).truncate(len).scale(w)).collect();
                    if acc.is_empty() {
                        acc = terms;
                    } else {
                        acc = acc.iter().zip(&terms).map(|(a, b)| a.add(b)).collect();
                    }
                }
                Ok(XField::Grid(acc))
            }
            SymbolKind::ExcisedInverse { inner, excision } => {
                let chi = chi_jet(&Jet::variable(xi, len), *excision);
                let n = self.shape().0;
                if chi.coeffs().iter().all(|c| c.norm() == 0.0) {
                    return Ok(XField::Const(MatJet::zeros(n, n, len)));
                }
                let f = inner.field_in(xi, tau, theta, ctx, memo)?;
                let inv = |m: &MatJet| -> Result<MatJet> {
                    m.try_inverse().map(|i| i.scale_jet(&chi)).ok_or_else(|| PsidoError::NonEvaluable {
                        x: f64::NAN,
                        xi,
                        tau,
                        theta,
                        reason: format!("`{}` is singular outside the excision hole", inner.name()),
                    })
                };
                match f {
                    XField::Const(m) => Ok(XField::Const(inv(&m)?)),
                    XField::Grid(v) => Ok(XField::Grid(v.iter().map(inv).collect::<Result<_>>()?)),
                }
            }
        }
    }

    /// Point value `a(x, ξ, τ, θ)`.
    pub fn eval(&self, x: f64, xi: f64, tau: f64, theta: f64) -> Result<CMatrix> {
        match &self.0.kind {
            SymbolKind::ClassicalParam { symbol, .. }
            | SymbolKind::FixedSymbol { symbol, .. }
            | SymbolKind::TaylorHomogeneous { symbol, .. } => {
                Ok(symbol(x, &Jet::variable(xi, 1), tau, theta).value().clone())
            }
            SymbolKind::SmoothingKernel(k) => k.symbol_at(x, xi, tau, theta),
            _ => {
                let ctx = FieldCtx::new(DEFAULT_NX, 1);
                self.eval_with(&ctx, x, xi, tau, theta)
            }
        }
    }

    /// Point value using a caller-provided context (shares FFT plans across calls).
    pub fn eval_with(&self, ctx: &FieldCtx, x: f64, xi: f64, tau: f64, theta: f64) -> Result<CMatrix> {
        let ctx1 = ctx.with_len(1);
        match self.field(xi, tau, theta, &ctx1)? {
            XField::Const(m) => Ok(m.value().clone()),
            XField::Grid(v) => {
                let vals: Vec<CMatrix> = v.iter().map(|m| m.value().clone()).collect();
                if let Some(j) = ctx1.xs().iter().position(|&g| (g - x.rem_euclid(std::f64::consts::TAU)).abs() < 1e-14) {
                    return Ok(vals[j].clone());
                }
                Ok(ctx1.interpolate(&vals, x))
            }
        }
    }
}

fn zero_angular(shape: (usize, usize)) -> AngularSymbol {
    AngularSymbol::from_fn(move |_, _, _| CMatrix::zeros(shape.0, shape.1))
}

fn leibniz_factors(a: &SymbolExpr, out: &mut Vec<SymbolExpr>) {
    match a.kind() {
        SymbolKind::LeibnizProduct { left, right, .. } if !a.is_classical() => {
            leibniz_factors(left, out);
            leibniz_factors(right, out);
        }
        _ => out.push(a.clone()),
    }
}

/// `r₁ # p # r₀` with parameter orders summing to zero: every classical
/// parameter-dependent factor is replaced by its value at `(ξ, τ) = (0, 1)`.
fn conjugation_limit(a: &SymbolExpr, truncation: usize) -> std::result::Result<Option<LimitFamily>, String> {
    let mut factors = Vec::new();
    leibniz_factors(a, &mut factors);
    let weighted = |f: &SymbolExpr| f.profile().param != 0.0;
    if !factors.iter().any(weighted) {
        return Ok(None);
    }
    let mut limits = Vec::with_capacity(factors.len());
    for f in &factors {
        if weighted(f) {
            if !matches!(f.kind(), SymbolKind::ClassicalParam { .. }) {
                return Ok(None);
            }
            limits.push(north_pole_value(f)?);
        } else if !f.is_tau_dependent() {
            limits.push(f.clone());
        } else {
            let l = f.limit_family().map_err(|e| e.to_string())?;
            if l.is_zero {
                return Ok(Some(LimitFamily::zero(a.order(), a.shape())));
            }
            limits.push(l.symbol);
        }
    }
    let mut acc = limits[0].clone();
    for f in &limits[1..] {
        acc = SymbolExpr::leibniz(&acc, f, truncation).map_err(|e| e.to_string())?;
    }
    Ok(Some(LimitFamily { order: a.order(), is_zero: false, symbol: acc }))
}

fn north_pole_value(a: &SymbolExpr) -> std::result::Result<SymbolExpr, String> {
    let p = a.principal().ok_or_else(|| format!("`{}` has no principal component", a.name()))?.clone();
    let p2 = p.clone();
    Ok(SymbolExpr::fixed(
        format!("{}|(0,1)", a.name()),
        0.0,
        a.shape(),
        a.is_x_dependent(),
        HomogComponent::from_fn(0.0, move |x, _, _, theta| p2.eval(x, 0.0, 1.0, theta)),
        Arc::new(move |x, xi, _, theta| MatJet::constant(p.eval(x, 0.0, 1.0, theta), xi.len())),
    ))
}

fn classical_limit(a: &SymbolExpr) -> std::result::Result<LimitFamily, String> {
    let shape = a.shape();
    let order = a.order();
    if order < 0.0 {
        return Ok(LimitFamily::zero(order, shape));
    }
    if order > 0.0 {
        return Err(format!("`{}` is a parameter-dependent symbol of positive order {order}", a.name()));
    }
    let p = a
        .principal()
        .ok_or_else(|| "classical symbol without principal component".to_string())?
        .clone();
    let p2 = p.clone();
    let x_dep = a.is_x_dependent();
    let sym = SymbolExpr::fixed(
        format!("lim({})", a.name()),
        0.0,
        shape,
        x_dep,
        HomogComponent::from_fn(0.0, move |x, _, _, theta| p2.eval(x, 0.0, 1.0, theta)),
        Arc::new(move |x, xi, _, theta| MatJet::constant(p.eval(x, 0.0, 1.0, theta), xi.len())),
    );
    Ok(LimitFamily { order, is_zero: false, symbol: sym })
}

fn sum_principal(terms: &[(C64, SymbolExpr)], shape: (usize, usize)) -> Option<HomogComponent> {
    let mut comps = Vec::with_capacity(terms.len());
    for (c, t) in terms {
        comps.push((*c, t.principal()?.clone()));
    }
    let top = comps.iter().map(|(_, p)| p.degree).fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return Some(HomogComponent::zero(shape.0, shape.1));
    }
    let lead: Vec<(C64, HomogComponent)> = comps.into_iter().filter(|(_, p)| p.degree == top).collect();
    Some(HomogComponent::from_fn(top, move |x, xi, tau, theta| {
        lead.iter().fold(CMatrix::zeros(shape.0, shape.1), |acc, (c, p)| {
            acc + p.eval(x, xi, tau, theta) * *c
        })
    }))
}

fn product_principal(a: &HomogComponent, b: &HomogComponent, shape: (usize, usize)) -> HomogComponent {
    if a.is_zero_degree() || b.is_zero_degree() {
        return HomogComponent::zero(shape.0, shape.1);
    }
    let (a, b) = (a.clone(), b.clone());
    HomogComponent::from_fn(a.degree + b.degree, move |x, xi, tau, theta| {
        a.eval(x, xi, tau, theta) * b.eval(x, xi, tau, theta)
    })
}
