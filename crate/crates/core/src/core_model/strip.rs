use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{PsidoError, Result};

/// A parameter value `λ = (τ, θ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lambda {
    pub tau: f64,
    pub theta: f64,
}

impl Lambda {
    pub fn new(tau: f64, theta: f64) -> Self {
        Lambda { tau, theta }
    }

    /// Image `z = τ e^{iθ}` in the sector.
    pub fn z(&self) -> Complex64 {
        Complex64::from_polar(self.tau, self.theta)
    }
}

/// The strip `Λ(a, b) = {(τ, θ) : τ ≥ 0, a ≤ θ ≤ b}` with its sample grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterStrip {
    theta_min: f64,
    theta_max: f64,
    tau_samples: Vec<f64>,
    theta_samples: Vec<f64>,
}

impl ParameterStrip {
    pub fn new(
        theta_min: f64,
        theta_max: f64,
        tau_samples: Vec<f64>,
        theta_samples: Vec<f64>,
    ) -> Result<Self> {
        if !(0.0..TAU).contains(&theta_min) || !(theta_min..TAU).contains(&theta_max) {
            return Err(PsidoError::InvalidStrip(format!(
                "need 0 <= theta_min <= theta_max < 2pi, got [{theta_min}, {theta_max}]"
            )));
        }
        if tau_samples.is_empty() {
            return Err(PsidoError::InvalidStrip("empty tau grid".into()));
        }
        if tau_samples[0] < 0.0 || tau_samples.windows(2).any(|w| w[1] <= w[0]) {
            return Err(PsidoError::InvalidStrip(
                "tau samples must be nonnegative and strictly increasing".into(),
            ));
        }
        if theta_samples.is_empty() {
            return Err(PsidoError::InvalidStrip("empty theta grid".into()));
        }
        let eps = 1e-12;
        if theta_samples.iter().any(|t| *t < theta_min - eps || *t > theta_max + eps) {
            return Err(PsidoError::InvalidStrip("theta sample outside [theta_min, theta_max]".into()));
        }
        Ok(ParameterStrip { theta_min, theta_max, tau_samples, theta_samples })
    }

    /// Log-spaced τ grid `10^lo ..= 10^hi` with `per_decade` steps per decade and
    /// `n_theta` equispaced angles.
    pub fn log_spaced(
        theta_min: f64,
        theta_max: f64,
        lo_exp: f64,
        hi_exp: f64,
        per_decade: usize,
        n_theta: usize,
    ) -> Result<Self> {
        ParameterStrip::new(
            theta_min,
            theta_max,
            log_tau_grid(lo_exp, hi_exp, per_decade)?,
            equispaced(theta_min, theta_max, n_theta),
        )
    }

    /// Default grids: τ log-spaced over `1..10³` (4 per decade), 9 angles.
    pub fn with_defaults(theta_min: f64, theta_max: f64) -> Result<Self> {
        ParameterStrip::log_spaced(theta_min, theta_max, 0.0, 3.0, 4, 9)
    }

    /// A single ray `θ = theta` with the given τ samples.
    pub fn ray(theta: f64, tau_samples: Vec<f64>) -> Result<Self> {
        let theta = theta.rem_euclid(TAU);
        ParameterStrip::new(theta, theta, tau_samples, vec![theta])
    }

    pub fn theta_min(&self) -> f64 {
        self.theta_min
    }

    pub fn theta_max(&self) -> f64 {
        self.theta_max
    }

    pub fn tau_samples(&self) -> &[f64] {
        &self.tau_samples
    }

    pub fn theta_samples(&self) -> &[f64] {
        &self.theta_samples
    }

    pub fn contains(&self, lambda: Lambda) -> bool {
        lambda.tau >= 0.0
            && lambda.theta >= self.theta_min - 1e-12
            && lambda.theta <= self.theta_max + 1e-12
    }

    /// Whether `z` lies in the sector `{τ e^{iθ} : τ ≥ 0, θ ∈ [a, b]}`.
    pub fn sector_contains(&self, z: Complex64, tol: f64) -> bool {
        if z.norm() <= tol {
            return true;
        }
        let arg = z.arg().rem_euclid(TAU);
        let dist = |t: f64| {
            let d = (arg - t).rem_euclid(TAU);
            d.min(TAU - d)
        };
        if arg >= self.theta_min - 1e-12 && arg <= self.theta_max + 1e-12 {
            return true;
        }
        let ang = dist(self.theta_min).min(dist(self.theta_max));
        z.norm() * ang.min(PI / 2.0).sin() <= tol
    }

    pub fn with_taus(&self, tau_samples: Vec<f64>) -> Result<Self> {
        ParameterStrip::new(self.theta_min, self.theta_max, tau_samples, self.theta_samples.clone())
    }

    pub fn with_thetas(&self, theta_samples: Vec<f64>) -> Result<Self> {
        ParameterStrip::new(self.theta_min, self.theta_max, self.tau_samples.clone(), theta_samples)
    }
}

pub fn log_tau_grid(lo_exp: f64, hi_exp: f64, per_decade: usize) -> Result<Vec<f64>> {
    if per_decade == 0 || hi_exp < lo_exp {
        return Err(PsidoError::InvalidStrip("bad log grid specification".into()));
    }
    let steps = ((hi_exp - lo_exp) * per_decade as f64).round() as usize;
    Ok((0..=steps)
        .map(|i| 10f64.powf(lo_exp + i as f64 / per_decade as f64))
        .collect())
}

pub fn equispaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 || hi == lo {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Cartesian product `τ × θ`, τ-major.
pub fn sample_lambda(strip: &ParameterStrip) -> Vec<Lambda> {
    strip
        .tau_samples
        .iter()
        .flat_map(|&tau| strip.theta_samples.iter().map(move |&theta| Lambda { tau, theta }))
        .collect()
}
