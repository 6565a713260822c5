use std::fmt;
use std::sync::Arc;

use crate::jet::{CMatrix, C64};

/// `(x, ξ, τ, θ) ↦ matrix` without derivative information.
pub type PointEval = Arc<dyn Fn(f64, f64, f64, f64) -> CMatrix + Send + Sync>;
/// `(x, φ, θ) ↦ matrix` on the cosphere, `φ ∈ {−1, +1}`.
pub type CosphereEval = Arc<dyn Fn(f64, f64, f64) -> CMatrix + Send + Sync>;

/// A component homogeneous of a fixed degree in `(ξ, τ)`.
#[derive(Clone)]
pub struct HomogComponent {
    pub degree: f64,
    pub excision_radius: f64,
    eval: PointEval,
}

impl HomogComponent {
    pub fn new(degree: f64, eval: PointEval) -> Self {
        HomogComponent { degree, excision_radius: 1.0, eval }
    }

    pub fn from_fn(
        degree: f64,
        f: impl Fn(f64, f64, f64, f64) -> CMatrix + Send + Sync + 'static,
    ) -> Self {
        HomogComponent::new(degree, Arc::new(f))
    }

    pub fn zero(rows: usize, cols: usize) -> Self {
        HomogComponent::from_fn(f64::NEG_INFINITY, move |_, _, _, _| CMatrix::zeros(rows, cols))
    }

    pub fn is_zero_degree(&self) -> bool {
        self.degree == f64::NEG_INFINITY
    }

    pub fn eval(&self, x: f64, xi: f64, tau: f64, theta: f64) -> CMatrix {
        (self.eval)(x, xi, tau, theta)
    }

    pub fn evaluator(&self) -> PointEval {
        self.eval.clone()
    }

    /// Value at the point `(sin ρ · φ, cos ρ)` of the unit semicircle.
    pub fn on_semicircle(&self, x: f64, phi: f64, rho: f64, theta: f64) -> CMatrix {
        self.eval(x, rho.sin() * phi, rho.cos(), theta)
    }

    /// Largest relative deviation from `t^degree` scaling over the given probe points
    /// and factors.
    pub fn homogeneity_defect(&self, probes: &[(f64, f64, f64, f64)], factors: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for &(x, xi, tau, theta) in probes {
            let base = self.eval(x, xi, tau, theta);
            let scale_ref = base.norm().max(1e-300);
            for &t in factors {
                let scaled = self.eval(x, t * xi, t * tau, theta);
                let expect = &base * C64::new(t.powf(self.degree), 0.0);
                let err = (scaled - &expect).norm() / (scale_ref * t.powf(self.degree)).max(1e-300);
                worst = worst.max(err);
            }
        }
        worst
    }
}

impl fmt::Debug for HomogComponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HomogComponent")
            .field("degree", &self.degree)
            .field("excision_radius", &self.excision_radius)
            .finish_non_exhaustive()
    }
}

/// The leading Taylor coefficient at the north-pole, on the cosphere.
#[derive(Clone)]
pub struct AngularSymbol {
    eval: CosphereEval,
}

impl AngularSymbol {
    pub fn new(eval: CosphereEval) -> Self {
        AngularSymbol { eval }
    }

    pub fn from_fn(f: impl Fn(f64, f64, f64) -> CMatrix + Send + Sync + 'static) -> Self {
        AngularSymbol { eval: Arc::new(f) }
    }

    pub fn eval(&self, x: f64, phi: f64, theta: f64) -> CMatrix {
        (self.eval)(x, phi, theta)
    }

    pub fn evaluator(&self) -> CosphereEval {
        self.eval.clone()
    }
}

impl fmt::Debug for AngularSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("AngularSymbol")
    }
}
