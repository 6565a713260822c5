use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::core_model::strip::{log_tau_grid, ParameterStrip};
use crate::error::{PsidoError, Result};
use crate::symbol::catalog::{self, CatalogParams};
use crate::symbol::SymbolExpr;
use crate::toeplitz::{make_hardy_projection, ProjectionSymbol};

pub const MAX_K: usize = 256;
pub const MAX_DECADES: f64 = 6.0;
pub const MAX_PER_DECADE: usize = 32;
pub const MAX_THETAS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Compose,
    Membership,
    Taylor,
    Ellipticity,
    Parametrix,
    Toeplitz,
    Resolvent,
    Sweep,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Experiment::Compose,
        Experiment::Membership,
        Experiment::Taylor,
        Experiment::Ellipticity,
        Experiment::Parametrix,
        Experiment::Toeplitz,
        Experiment::Resolvent,
        Experiment::Sweep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Compose => "compose",
            Experiment::Membership => "membership",
            Experiment::Taylor => "taylor",
            Experiment::Ellipticity => "ellipticity",
            Experiment::Parametrix => "parametrix",
            Experiment::Toeplitz => "toeplitz",
            Experiment::Resolvent => "resolvent",
            Experiment::Sweep => "sweep",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = PsidoError;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| PsidoError::ConfigInvalid(format!("unknown experiment {s:?}")))
    }
}

/// Expected outcome of an ellipticity check; negative controls expect failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expectation {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SymbolConfig {
    /// Catalog id of the main symbol; a leading `-` negates.
    pub a: String,
    /// Second factor (compose) or auxiliary operator (resolvent remark check).
    pub b: Option<String>,
    /// `hardy`, `identity`, `rotated`, or absent.
    pub projection: Option<String>,
    pub eps: f64,
    pub mu: f64,
    /// Angles in units of π.
    pub theta_min: f64,
    pub theta_max: f64,
    /// Sobolev index for the resolvent.
    pub s: f64,
    /// Largest Leibniz truncation for `compose`.
    pub max_order: usize,
    pub expect: Expectation,
}

impl Default for SymbolConfig {
    fn default() -> Self {
        SymbolConfig {
            a: "identity".into(),
            b: None,
            projection: None,
            eps: 0.1,
            mu: 1.0,
            theta_min: 0.5,
            theta_max: 1.5,
            s: 0.0,
            max_order: 3,
            expect: Expectation::Pass,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub k: usize,
    /// Quadrature points in x; absent means `max(2K+2, 64)`.
    pub n_x: Option<usize>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { k: 32, n_x: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StripConfig {
    pub tau_lo_exp: f64,
    pub tau_hi_exp: f64,
    pub per_decade: usize,
    pub n_theta: usize,
    /// Explicit τ samples; overrides the log grid.
    pub taus: Option<Vec<f64>>,
    /// Explicit angles in units of π; overrides `n_theta` and the θ-interval.
    pub thetas: Option<Vec<f64>>,
}

impl Default for StripConfig {
    fn default() -> Self {
        StripConfig { tau_lo_exp: 0.0, tau_hi_exp: 3.0, per_decade: 4, n_theta: 5, taus: None, thetas: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// File stem; defaults to the experiment name.
    pub stem: Option<String>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("out"), stem: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub residual: f64,
    pub closed_form: f64,
    pub identity: f64,
    pub compose: f64,
    pub limit_value: f64,
    pub witness: f64,
    pub slope_min: f64,
    pub slope_max: f64,
    pub gain_ratio: f64,
    pub drift_percent: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            residual: 1e-8,
            closed_form: 1e-10,
            identity: 1e-12,
            compose: 1e-4,
            limit_value: 1e-6,
            witness: 1e-3,
            slope_min: -1.1,
            slope_max: -0.9,
            gain_ratio: 2.0,
            drift_percent: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    /// Experiment repeated at K and 2K by `sweep`.
    pub sweep_target: Option<Experiment>,
    pub seed: u64,
    pub symbols: SymbolConfig,
    pub grid: GridConfig,
    pub strip: StripConfig,
    pub output: OutputConfig,
    pub tolerances: Tolerances,
}

/// Neutral defaults for keys a config file leaves out.
impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: Experiment::Compose,
            sweep_target: None,
            seed: 0,
            symbols: SymbolConfig::default(),
            grid: GridConfig::default(),
            strip: StripConfig::default(),
            output: OutputConfig::default(),
            tolerances: Tolerances::default(),
        }
    }
}

impl ExperimentConfig {
    /// Settings reproducing the corresponding acceptance check.
    pub fn preset(experiment: Experiment) -> Self {
        let mut c = ExperimentConfig { experiment, ..ExperimentConfig::default() };
        let s = &mut c.symbols;
        match experiment {
            Experiment::Compose => {
                s.a = "bessel-inv".into();
                s.b = Some("shift".into());
                c.grid.k = 64;
                c.strip.taus = Some(vec![1.0]);
                c.strip.thetas = Some(vec![0.0]);
                s.theta_min = 0.0;
                s.theta_max = 0.0;
            }
            Experiment::Membership => {
                s.a = "classical-phase".into();
                s.theta_min = 0.0;
                s.theta_max = 1.5;
                c.strip.tau_lo_exp = 1.0;
                c.strip.n_theta = 4;
                c.grid.k = 8;
            }
            Experiment::Taylor => {
                s.a = "north-pole-rho".into();
                s.theta_min = 0.0;
                s.theta_max = 1.5;
                c.strip.n_theta = 4;
                c.grid.k = 8;
            }
            Experiment::Ellipticity => {
                s.a = "toeplitz-model".into();
                s.projection = Some("hardy".into());
                s.theta_min = 1.0;
                s.theta_max = 1.5;
                s.expect = Expectation::Fail;
                c.grid.k = 16;
                c.strip.per_decade = 2;
            }
            Experiment::Parametrix => {
                s.a = "resolvent-reduced-perturbed".into();
                c.grid.k = 64;
                c.strip.per_decade = 2;
            }
            Experiment::Toeplitz => {
                s.a = "toeplitz-model".into();
                s.projection = Some("hardy".into());
                s.theta_min = 0.5;
                s.theta_max = 0.5;
                c.strip.n_theta = 1;
            }
            Experiment::Resolvent => {
                s.a = "bessel1".into();
                s.b = Some("-bessel1".into());
                s.projection = Some("hardy".into());
                c.strip.tau_lo_exp = 1.0;
                c.strip.thetas = Some(vec![0.5, 1.0, 1.5]);
            }
            Experiment::Sweep => {
                c.sweep_target = Some(Experiment::Toeplitz);
                s.a = "toeplitz-model".into();
                s.projection = Some("hardy".into());
                s.theta_min = 0.5;
                s.theta_max = 0.5;
                c.grid.k = 16;
                c.strip.n_theta = 1;
                c.strip.per_decade = 2;
            }
        }
        c
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| PsidoError::ConfigInvalid(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PsidoError::ConfigInvalid(format!("{}: {e}", path.display())))?;
        ExperimentConfig::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config is plain data")
    }

    pub fn stem(&self) -> String {
        self.output.stem.clone().unwrap_or_else(|| self.experiment.name().to_string())
    }

    /// Checks ranges and catalog ids without running anything.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PsidoError::ConfigInvalid(m));
        if self.grid.k == 0 || self.grid.k > MAX_K {
            return bad(format!("grid.k = {} outside 1..={MAX_K}", self.grid.k));
        }
        if let Some(n) = self.grid.n_x {
            if n < 2 * self.grid.k + 2 {
                return bad(format!("grid.n_x = {n} cannot resolve K = {}", self.grid.k));
            }
        }
        if self.experiment == Experiment::Sweep {
            match self.sweep_target {
                None => return bad("sweep needs sweep_target".into()),
                Some(Experiment::Sweep) => return bad("sweep cannot target itself".into()),
                Some(_) => {}
            }
            if 2 * self.grid.k > MAX_K {
                return bad(format!("sweep doubles K = {} past {MAX_K}", self.grid.k));
            }
        }
        self.taus()?;
        self.strip()?;
        if self.symbols.max_order > 8 {
            return bad(format!("symbols.max_order = {} above 8", self.symbols.max_order));
        }
        self.symbol_a()?;
        self.symbol_b()?;
        if let Some(p) = &self.symbols.projection {
            if !["hardy", "identity", "rotated"].contains(&p.as_str()) {
                return Err(PsidoError::CatalogMiss(p.clone()));
            }
        }
        Ok(())
    }

    pub fn taus(&self) -> Result<Vec<f64>> {
        let st = &self.strip;
        let taus = match &st.taus {
            Some(t) => t.clone(),
            None => {
                let span = st.tau_hi_exp - st.tau_lo_exp;
                if !(0.0..=MAX_DECADES).contains(&span) {
                    return Err(PsidoError::ConfigInvalid(format!(
                        "tau decades {span} outside 0..={MAX_DECADES}"
                    )));
                }
                if st.per_decade == 0 || st.per_decade > MAX_PER_DECADE {
                    return Err(PsidoError::ConfigInvalid(format!(
                        "strip.per_decade = {} outside 1..={MAX_PER_DECADE}",
                        st.per_decade
                    )));
                }
                log_tau_grid(st.tau_lo_exp, st.tau_hi_exp, st.per_decade)
                    .map_err(|e| PsidoError::ConfigInvalid(e.to_string()))?
            }
        };
        if taus.is_empty() {
            return Err(PsidoError::ConfigInvalid("empty tau grid".into()));
        }
        Ok(taus)
    }

    pub fn strip(&self) -> Result<ParameterStrip> {
        let (lo, hi) = (self.symbols.theta_min * PI, self.symbols.theta_max * PI);
        let thetas = match &self.strip.thetas {
            Some(t) => t.iter().map(|v| v * PI).collect::<Vec<_>>(),
            None => {
                let n = self.strip.n_theta;
                if n == 0 || n > MAX_THETAS {
                    return Err(PsidoError::ConfigInvalid(format!("strip.n_theta = {n} outside 1..={MAX_THETAS}")));
                }
                crate::core_model::strip::equispaced(lo, hi, n)
            }
        };
        if thetas.is_empty() {
            return Err(PsidoError::ConfigInvalid("empty theta grid".into()));
        }
        // explicit angles define the interval themselves
        let (lo, hi) = match &self.strip.thetas {
            Some(_) => (thetas.iter().copied().fold(f64::INFINITY, f64::min), thetas.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
            None => (lo, hi),
        };
        ParameterStrip::new(lo, hi, self.taus()?, thetas).map_err(|e| PsidoError::ConfigInvalid(e.to_string()))
    }

    fn params(&self) -> CatalogParams {
        CatalogParams { eps: self.symbols.eps, mu: self.symbols.mu }
    }

    pub fn symbol_a(&self) -> Result<SymbolExpr> {
        catalog::lookup(&self.symbols.a, self.params())
    }

    pub fn symbol_b(&self) -> Result<Option<SymbolExpr>> {
        self.symbols.b.as_deref().map(|id| catalog::lookup(id, self.params())).transpose()
    }

    pub fn projection(&self) -> Result<Option<ProjectionSymbol>> {
        Ok(match self.symbols.projection.as_deref() {
            None => None,
            Some("hardy") => Some(make_hardy_projection(self.grid.k)?),
            Some("identity") => Some(ProjectionSymbol::identity(self.symbol_a()?.shape().0)),
            Some("rotated") => Some(ProjectionSymbol::rotated()),
            Some(other) => return Err(PsidoError::CatalogMiss(other.to_string())),
        })
    }

    /// The same configuration at a different cutoff.
    pub fn with_k(&self, k: usize) -> Self {
        let mut c = self.clone();
        c.grid.k = k;
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for e in Experiment::ALL {
            ExperimentConfig::preset(e).validate().unwrap_or_else(|err| panic!("{e}: {err}"));
        }
    }

    #[test]
    fn toml_round_trip() {
        let c = ExperimentConfig::preset(Experiment::Resolvent);
        let back = ExperimentConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let c = ExperimentConfig::from_toml_str("experiment = \"toeplitz\"\n[grid]\nk = 8\n").unwrap();
        assert_eq!(c.experiment, Experiment::Toeplitz);
        assert_eq!(c.grid.k, 8);
        assert_eq!(c.grid.n_x, None);
    }

    #[test]
    fn empty_tau_grid_is_rejected() {
        let mut c = ExperimentConfig::preset(Experiment::Resolvent);
        c.strip.taus = Some(vec![]);
        assert!(matches!(c.validate(), Err(PsidoError::ConfigInvalid(_))));
        c.strip.taus = None;
        c.strip.per_decade = 0;
        assert!(matches!(c.validate(), Err(PsidoError::ConfigInvalid(_))));
    }

    #[test]
    fn unknown_ids_are_catalog_misses() {
        let mut c = ExperimentConfig::preset(Experiment::Toeplitz);
        c.symbols.a = "nope".into();
        assert!(matches!(c.validate(), Err(PsidoError::CatalogMiss(_))));
        let mut c = ExperimentConfig::preset(Experiment::Toeplitz);
        c.symbols.projection = Some("szego".into());
        assert!(matches!(c.validate(), Err(PsidoError::CatalogMiss(_))));
    }

    #[test]
    fn limits_are_enforced() {
        let mut c = ExperimentConfig::preset(Experiment::Toeplitz);
        c.grid.k = MAX_K + 1;
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::preset(Experiment::Toeplitz);
        c.strip.tau_hi_exp = 9.0;
        assert!(c.validate().is_err());
        assert!(ExperimentConfig::from_toml_str("bogus = 1").is_err());
    }
}
