//! Symbol-level calculus.

pub mod catalog;
pub mod excision;
pub mod expr;
pub mod ops;
pub mod principal;
pub mod spectral;
pub mod taylor;

pub use expr::{LimitFamily, OrderProfile, SymbolExpr, SymbolKind};
pub use principal::{AngularSymbol, HomogComponent};
pub use taylor::TaylorData;
