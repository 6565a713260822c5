//! Grids, the parameter strip and seminorm estimators.

pub mod grid;
pub mod seminorm;
pub mod strip;

pub use grid::CircleGrid;
pub use seminorm::{estimate_seminorm, SeminormSpec};
pub use strip::{sample_lambda, Lambda, ParameterStrip};
