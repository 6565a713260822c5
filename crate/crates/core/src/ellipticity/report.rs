use serde::{Deserialize, Serialize};

use crate::core_model::strip::ParameterStrip;
use crate::quantize::Sigma3Certificate;

/// Where a condition was seen to fail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    /// A point `(x, ξ, τ, θ)` of the full symbol domain.
    Point { x: f64, xi: f64, tau: f64, theta: f64 },
    /// `(x, φ, ρ, θ)` on the unit semicircle, `(ξ, τ) = (φ sin ρ, cos ρ)`.
    Semicircle { x: f64, phi: f64, rho: f64, theta: f64 },
    /// `(x, φ, θ)` on the cosphere at the north-pole.
    Cosphere { x: f64, phi: f64, theta: f64 },
    /// The limit family at angle θ.
    Ray { theta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flavor {
    Rough,
    Refined,
    Toeplitz,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub condition: String,
    pub pass: bool,
    /// Measured sup of the weighted inverse; `None` on failure.
    pub constant: Option<f64>,
    /// Smallest singular value seen over the test points.
    pub min_singular: f64,
    pub witness: Option<Witness>,
    pub note: Option<String>,
}

impl Verdict {
    pub(crate) fn from_scan(condition: &str, tol: f64, scan: Scan) -> Verdict {
        let pass = scan.min_singular >= tol && scan.sup_inverse.is_finite();
        Verdict {
            condition: condition.to_string(),
            pass,
            constant: pass.then_some(scan.sup_inverse),
            min_singular: scan.min_singular,
            witness: (!pass).then_some(scan.argmin).flatten(),
            note: None,
        }
    }

    pub(crate) fn failed(condition: &str, witness: Witness, note: impl Into<String>) -> Verdict {
        Verdict {
            condition: condition.to_string(),
            pass: false,
            constant: None,
            min_singular: 0.0,
            witness: Some(witness),
            note: Some(note.into()),
        }
    }
}

/// Running minimum of singular values over a set of test points.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Scan {
    pub min_singular: f64,
    pub sup_inverse: f64,
    pub argmin: Option<Witness>,
}

impl Scan {
    pub fn empty() -> Self {
        Scan { min_singular: f64::INFINITY, sup_inverse: 0.0, argmin: None }
    }

    /// `weight` multiplies `1/σ_min` in the constant and divides `σ_min` when
    /// ranking witnesses.
    pub fn push(&mut self, sigma: f64, weight: f64, at: Witness) {
        let inv = if sigma > 0.0 { weight / sigma } else { f64::INFINITY };
        self.sup_inverse = self.sup_inverse.max(inv);
        if sigma < self.min_singular {
            self.min_singular = sigma;
            self.argmin = Some(at);
        }
    }

    pub fn merge(mut self, other: Scan) -> Scan {
        self.sup_inverse = self.sup_inverse.max(other.sup_inverse);
        if other.min_singular < self.min_singular {
            self.min_singular = other.min_singular;
            self.argmin = other.argmin;
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipticityReport {
    pub flavor: Flavor,
    pub verdicts: Vec<Verdict>,
    /// Worst certificate over the θ samples.
    pub sigma3_certificate: Option<Sigma3Certificate>,
    pub xi_cutoff: f64,
    pub strip: ParameterStrip,
}

impl EllipticityReport {
    pub fn passes(&self) -> bool {
        !self.verdicts.is_empty() && self.verdicts.iter().all(|v| v.pass)
    }

    pub fn verdict(&self, condition: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.condition == condition)
    }

    /// First failing witness, if any.
    pub fn witness(&self) -> Option<Witness> {
        self.verdicts.iter().filter(|v| !v.pass).find_map(|v| v.witness)
    }
}
