//! Parameter-ellipticity verdicts and exact-past-threshold parametrices.

mod checks;
mod parametrix;
mod report;

pub use checks::{check_refined, check_rough, limit_family_verdict, sigma_min, EllipticityConfig};
pub use parametrix::{
    excised_inverse, invert_one_plus_smoothing, neumann_parametrix, parametrix, NeumannParametrix, NeumannTail,
    ParametrixResult, ParametrixSummary, ResidualRow, MAX_DEPTH,
};
pub use report::{EllipticityReport, Flavor, Verdict, Witness};
