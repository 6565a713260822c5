//! Projections, compressed operators `P₁ A P₀`, order reductions, and the
//! resolvent of `P A P`.

mod basis;
mod checks;
mod parametrix;
mod projection;
mod resolvent;

pub use basis::{orthonormality_residual, range_basis, PIVOT_TOL};
pub use checks::{compress, compressed_principal, reduce, toeplitz_ellipticity, toeplitz_ellipticity_reduced};
pub use parametrix::{
    solve, toeplitz_parametrix, OperatorFamily, ToeplitzOperator, ToeplitzParametrix, ToeplitzProblem, ToeplitzRow,
    ToeplitzSummary,
};
pub use projection::{
    make_hardy_projection, tilde_conjugate, tilde_operator, OrderReductionPair, ProjectionSymbol, RankSample,
};
pub use resolvent::{remark_identity_check, resolvent_pipeline, RemarkVerdict, ResolventRecord, ResolventRow, RayFit};
