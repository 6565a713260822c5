use thiserror::Error;

use crate::ellipticity::EllipticityReport;

#[derive(Debug, Error)]
pub enum PsidoError {
    #[error("invalid parameter strip: {0}")]
    InvalidStrip(String),
    #[error("invalid circle grid: {0}")]
    InvalidGrid(String),
    #[error("symbol not evaluable at x={x}, xi={xi}, tau={tau}, theta={theta}: {reason}")]
    NonEvaluable { x: f64, xi: f64, tau: f64, theta: f64, reason: String },
    #[error("derivative order {0} exceeds the supported maximum of 4")]
    DerivativeOrderTooHigh(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("truncation order {0} exceeds the supported maximum of 6")]
    TruncationTooDeep(usize),
    #[error("invalid order gap in asymptotic sum: {0}")]
    OrderGapInvalid(String),
    #[error("symbol is not in the calculus: {0}")]
    NotInCalculus(String),
    #[error("Taylor expansion diverges at level {level}: fitted remainder slope {slope:.3}")]
    ExpansionDiverges { level: usize, slope: f64 },
    #[error("symbol carries no principal data")]
    NoPrincipalData,
    #[error("singular at x={x}, phi={phi}, rho={rho}, theta={theta}")]
    SingularAtPoint { x: f64, phi: f64, rho: f64, theta: f64 },
    #[error("leading Taylor coefficient is singular")]
    SingularLeadingCoefficient,
    #[error("parameter mismatch between operators: {0:?} vs {1:?}")]
    LambdaMismatch((f64, f64), (f64, f64)),
    #[error("matrix singular to tolerance: sigma_min/sigma_max = {ratio:e}")]
    SingularToTolerance { ratio: f64 },
    #[error("ellipticity report does not pass the required conditions")]
    ReportFailed,
    #[error("Neumann depth {0} exceeds the supported maximum of 6")]
    DepthTooLarge(usize),
    #[error("smoothing family never drops below norm 1/2 on the grid (min norm {0:.3e})")]
    NeverSmall(f64),
    #[error("ellipticity check failed")]
    EllipticityFailed(Box<EllipticityReport>),
    #[error("range ranks differ at x={x}, xi={xi}: {rank0} vs {rank1}")]
    RankMismatch { x: f64, xi: f64, rank0: usize, rank1: usize },
    #[error("spectral hypothesis fails at x={x}, phi={phi}: eigenvalue {eigenvalue} lies in the sector")]
    SpectralHypothesisFailed { x: f64, phi: f64, eigenvalue: String },
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("unknown catalog identifier `{0}`")]
    CatalogMiss(String),
    #[error("report output failed: {0}")]
    Output(String),
    #[error("{context}: {source}")]
    Context { context: String, source: Box<PsidoError> },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl PsidoError {
    pub fn context(self, context: impl Into<String>) -> Self {
        PsidoError::Context { context: context.into(), source: Box::new(self) }
    }
}

pub type Result<T> = std::result::Result<T, PsidoError>;
