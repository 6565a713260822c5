use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{PsidoError, Result};
use crate::harness::config::ExperimentConfig;

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Plot-ready rows; the first two columns are always `tau, theta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl Table {
    pub fn new(name: &str, extra: &[&str]) -> Self {
        let columns = ["tau", "theta"].iter().chain(extra).map(|c| c.to_string()).collect();
        Table { name: name.to_string(), columns, rows: Vec::new() }
    }

    pub fn push(&mut self, tau: f64, theta: f64, values: &[Option<f64>]) {
        assert_eq!(values.len() + 2, self.columns.len(), "row width for table {}", self.name);
        let mut row = vec![Some(tau), Some(theta)];
        row.extend(values.iter().map(|v| v.filter(|x| x.is_finite())));
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    /// Header row, `.` decimals in shortest round-trip form, empty cells for
    /// missing values.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| PsidoError::Output(e.to_string());
        out.write_record(&self.columns).map_err(io)?;
        for row in &self.rows {
            out.write_record(row.iter().map(|v| v.map(|x| format!("{x:?}")).unwrap_or_default())).map_err(io)?;
        }
        out.flush().map_err(|e| PsidoError::Output(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slope {
    pub name: String,
    pub theta: Option<f64>,
    pub value: f64,
}

/// One named pass/fail check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Invariant {
    pub name: String,
    pub pass: bool,
    pub measured: Option<f64>,
    pub bound: Option<f64>,
    pub detail: Option<String>,
}

impl Invariant {
    /// `measured ≤ bound`; NaN fails.
    pub fn at_most(name: &str, measured: f64, bound: f64) -> Self {
        Invariant { name: name.into(), pass: measured <= bound, measured: Some(measured), bound: Some(bound), detail: None }
    }

    pub fn flag(name: &str, pass: bool, detail: impl Into<String>) -> Self {
        Invariant { name: name.into(), pass, measured: None, bound: None, detail: Some(detail.into()) }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEnvelope {
    pub artifact_version: String,
    pub config: ExperimentConfig,
    pub results: serde_json::Value,
    /// Headline scalars; `sweep` compares these across K.
    pub metrics: BTreeMap<String, f64>,
    pub tables: Vec<Table>,
    pub slopes: Vec<Slope>,
    pub invariants: Vec<Invariant>,
    pub pass: bool,
    pub wall_clock_seconds: f64,
}

impl ReportEnvelope {
    pub fn new(config: ExperimentConfig) -> Self {
        ReportEnvelope {
            artifact_version: ARTIFACT_VERSION.to_string(),
            config,
            results: serde_json::Value::Null,
            metrics: BTreeMap::new(),
            tables: Vec::new(),
            slopes: Vec::new(),
            invariants: Vec::new(),
            pass: false,
            wall_clock_seconds: 0.0,
        }
    }

    pub fn check(&mut self, inv: Invariant) {
        self.invariants.push(inv);
    }

    /// Non-finite values are dropped.
    pub fn metric(&mut self, name: &str, value: f64) {
        if value.is_finite() {
            self.metrics.insert(name.to_string(), value);
        }
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn invariant(&self, name: &str) -> Option<&Invariant> {
        self.invariants.iter().find(|i| i.name == name)
    }

    /// Zero iff every named invariant passed.
    pub fn exit_code(&self) -> i32 {
        if self.pass { 0 } else { 1 }
    }

    pub fn invariants_pass(&self) -> bool {
        !self.invariants.is_empty() && self.invariants.iter().all(|i| i.pass)
    }

    pub(crate) fn finish(&mut self, seconds: f64) {
        self.pass = self.invariants_pass();
        self.wall_clock_seconds = seconds;
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| PsidoError::Output(e.to_string()))
    }

    /// JSON with the wall-clock field zeroed, for reproducibility comparisons.
    pub fn to_json_without_clock(&self) -> Result<String> {
        let mut c = self.clone();
        c.wall_clock_seconds = 0.0;
        c.to_json()
    }
}
