//! `psido <experiment>`: run one experiment, write its JSON report and CSV
//! tables, exit 0 iff every named invariant passed (1 otherwise, 2 on error).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use psido::harness::{self, Experiment, ExperimentConfig};
use psido::PsidoError;

#[derive(Parser)]
#[command(name = "psido", version, about = "Parameter-dependent ΨDO and Toeplitz experiments on the circle")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// TOML experiment file; without it the built-in preset is used.
    #[arg(long, global = true, env = "PSIDO_CONFIG")]
    config: Option<PathBuf>,
    /// Output directory for the report and tables.
    #[arg(long, global = true, env = "PSIDO_OUT")]
    out: Option<PathBuf>,
    #[arg(long, global = true, env = "PSIDO_SEED")]
    seed: Option<u64>,
    /// Frequency cutoff K.
    #[arg(long = "grid-K", global = true, env = "PSIDO_GRID_K")]
    grid_k: Option<usize>,
    /// Print the effective configuration as TOML and exit.
    #[arg(long, global = true)]
    print_config: bool,
    /// Only print the pass/fail summary.
    #[arg(long, short, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Clone)]
enum Command {
    /// Leibniz truncations against the composed truncated operators.
    Compose,
    /// Derivative-decay membership test and limit-family decay.
    Membership,
    /// North-pole expansion, homogeneous extension and its estimates.
    Taylor,
    /// Rough/refined or compressed ellipticity verdicts.
    Ellipticity,
    /// Parametrix with smoothing tail and residual table.
    Parametrix,
    /// Toeplitz parametrix of a compressed operator.
    Toeplitz,
    /// Resolvent of a compressed operator along rays.
    Resolvent,
    /// Repeat an experiment at K and 2K and report drift.
    Sweep {
        /// Experiment to repeat; defaults to the config's own.
        #[arg(long, env = "PSIDO_SWEEP_TARGET")]
        target: Option<String>,
    },
}

impl Command {
    fn experiment(&self) -> Experiment {
        match self {
            Command::Compose => Experiment::Compose,
            Command::Membership => Experiment::Membership,
            Command::Taylor => Experiment::Taylor,
            Command::Ellipticity => Experiment::Ellipticity,
            Command::Parametrix => Experiment::Parametrix,
            Command::Toeplitz => Experiment::Toeplitz,
            Command::Resolvent => Experiment::Resolvent,
            Command::Sweep { .. } => Experiment::Sweep,
        }
    }
}

fn effective_config(cli: &Cli) -> Result<ExperimentConfig, PsidoError> {
    let wanted = cli.command.experiment();
    let mut cfg = match &cli.common.config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None => ExperimentConfig::preset(wanted),
    };
    if wanted == Experiment::Sweep {
        if cfg.experiment != Experiment::Sweep && cfg.sweep_target.is_none() {
            cfg.sweep_target = Some(cfg.experiment);
        }
        if let Command::Sweep { target: Some(t) } = &cli.command {
            cfg.sweep_target = Some(t.parse()?);
        }
    }
    cfg.experiment = wanted;
    if let Some(dir) = &cli.common.out {
        cfg.output.dir = dir.clone();
    }
    if let Some(seed) = cli.common.seed {
        cfg.seed = seed;
    }
    if let Some(k) = cli.common.grid_k {
        cfg.grid.k = k;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match effective_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if cli.common.print_config {
        print!("{}", cfg.to_toml_string());
        return ExitCode::SUCCESS;
    }
    let (report, files) = match harness::run_and_write(&cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    for inv in &report.invariants {
        let tag = if inv.pass { "PASS" } else { "FAIL" };
        match (inv.measured, inv.bound) {
            (Some(m), Some(b)) => println!("{tag} {} measured={m:e} bound={b:e}", inv.name),
            _ => println!("{tag} {}", inv.name),
        }
    }
    if !cli.common.quiet {
        for f in &files {
            println!("wrote {}", f.display());
        }
        println!("{} in {:.2}s", cfg.experiment, report.wall_clock_seconds);
    }
    ExitCode::from(report.exit_code() as u8)
}
