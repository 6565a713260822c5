//! Experiment configuration, orchestration and report files.

mod config;
mod experiments;
mod report;

use std::path::{Path, PathBuf};
use std::time::Instant;

pub use config::{
    Expectation, Experiment, ExperimentConfig, GridConfig, OutputConfig, StripConfig, SymbolConfig, Tolerances,
    MAX_DECADES, MAX_K, MAX_PER_DECADE, MAX_THETAS,
};
pub use experiments::multiplier_inverse_norm;
pub use report::{Invariant, ReportEnvelope, Slope, Table, ARTIFACT_VERSION};

use crate::error::{PsidoError, Result};

/// Validates and runs the configured experiment. No files are written.
pub fn run(config: &ExperimentConfig) -> Result<ReportEnvelope> {
    config.validate()?;
    let start = Instant::now();
    let mut env = ReportEnvelope::new(config.clone());
    experiments::dispatch(config, &mut env)?;
    env.finish(start.elapsed().as_secs_f64());
    Ok(env)
}

/// `config.sweep_target` at K and 2K, with drift percentages.
pub fn sweep(config: &ExperimentConfig) -> Result<ReportEnvelope> {
    let mut c = config.clone();
    if c.sweep_target.is_none() && c.experiment != Experiment::Sweep {
        c.sweep_target = Some(c.experiment);
    }
    c.experiment = Experiment::Sweep;
    run(&c)
}

/// `<stem>.json` plus one `<stem>_<table>.csv` per table.
pub fn write_outputs(env: &ReportEnvelope, dir: &Path) -> Result<Vec<PathBuf>> {
    let out = |e: std::io::Error| PsidoError::Output(format!("{}: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(out)?;
    let stem = env.config.stem();
    let json = dir.join(format!("{stem}.json"));
    std::fs::write(&json, env.to_json()?).map_err(out)?;
    let mut written = vec![json];
    for t in &env.tables {
        let path = dir.join(format!("{stem}_{}.csv", t.name));
        let f = std::fs::File::create(&path).map_err(out)?;
        t.write_csv(std::io::BufWriter::new(f))?;
        written.push(path);
    }
    Ok(written)
}

/// `run` followed by `write_outputs` into `config.output.dir`.
pub fn run_and_write(config: &ExperimentConfig) -> Result<(ReportEnvelope, Vec<PathBuf>)> {
    let env = if config.experiment == Experiment::Sweep { sweep(config)? } else { run(config)? };
    let files = write_outputs(&env, &config.output.dir)?;
    Ok((env, files))
}
