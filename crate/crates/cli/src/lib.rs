//! Configuration-driven experiments: bound sweeps, figure reproductions,
//! sandwich validation and misspecification tables, written as CSV, SVG and
//! a run manifest.

pub mod config;
pub mod experiments;
pub mod plot;
pub mod table;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};

pub use config::{ExperimentConfig, Figure, Unit};
pub use experiments::{
    run_constrained_curve, run_curve, run_learner, run_misspec, run_validate, LearnerReport, ValidationReport,
};
pub use plot::{emit_plot, render_svg};
pub use table::{Cell, Flag, SweepResult};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("non-convergence: {0}")]
    NonConvergence(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] genbound::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::NonConvergence(_) | CliError::Core(genbound::Error::NonConvergence(_)) => 3,
            CliError::Config(_) | CliError::Io(_) | CliError::Core(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "genbound", version, about = "Generalization-gap bounds under train/test mismatch")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    pub unit: Option<Unit>,
    /// Also write an SVG chart.
    #[arg(long, global = true)]
    pub svg: bool,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Bound curves over a rate grid.
    Curve,
    /// Plain and auxiliary-constrained curves over a rate grid.
    Constrained,
    /// Exact sandwich and tail checks on enumerable instances.
    Validate,
    /// Excess-risk bounds of stable learners under misspecification.
    Misspec,
    /// Exact quantities of one learner on one scenario.
    Learner,
    /// Built-in figure settings.
    Reproduce {
        #[arg(value_enum)]
        figure: Figure,
    },
}

impl Command {
    /// Name used for config resolution; figures map to their sweep kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Command::Curve => "curve",
            Command::Constrained => "constrained",
            Command::Validate => "validate",
            Command::Misspec => "misspec",
            Command::Learner => "learner",
            Command::Reproduce { figure } if figure.is_constrained() => "constrained",
            Command::Reproduce { .. } => "curve",
        }
    }
}

/// Files written by one run.
#[derive(Debug, Clone, Default)]
pub struct RunOutputs {
    pub csv: Option<PathBuf>,
    pub svg: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub config: PathBuf,
    pub manifest: PathBuf,
}

/// Loads the config, applies command-line overrides and resolves defaults.
pub fn prepare_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => match cli.command {
            Command::Curve | Command::Constrained | Command::Learner => {
                return Err(CliError::Config(format!("{} needs --config", cli.command.kind())))
            }
            _ => ExperimentConfig::default(),
        },
    };
    if let Command::Reproduce { figure } = cli.command {
        cfg.scenario.preset = Some(figure.name().into());
        cfg.output.svg = Some(true);
    }
    if let Some(seed) = cli.seed {
        cfg.seed = Some(seed);
    }
    if let Some(unit) = cli.unit {
        cfg.output.unit = Some(unit);
    }
    if cli.svg {
        cfg.output.svg = Some(true);
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = Some(out.display().to_string());
    }
    cfg.resolve(cli.command.kind())
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

/// Runs one command end to end. Outputs are written even when the run ends
/// in a validation failure or a non-convergence error.
pub fn run(cli: &Cli) -> Result<RunOutputs, CliError> {
    let cfg = prepare_config(cli)?;
    let start = Instant::now();
    let dir = PathBuf::from(cfg.output.dir.clone().unwrap_or_else(|| "out".into()));
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    let name = cfg.name().to_string();
    let hash = cfg.hash();
    let unit = cfg.unit();
    let mut outputs = RunOutputs {
        config: dir.join(format!("{name}.config.toml")),
        manifest: dir.join(format!("{name}.manifest.txt")),
        ..Default::default()
    };
    write(&outputs.config, &cfg.to_toml())?;

    let rows;
    let mut verdict = Ok(());
    match cli.command.kind() {
        kind @ ("curve" | "constrained" | "misspec") => {
            let result = match kind {
                "curve" => run_curve(&cfg)?,
                "constrained" => run_constrained_curve(&cfg)?,
                _ => run_misspec(&cfg)?,
            };
            rows = result.x.len();
            let csv = dir.join(format!("{name}.csv"));
            write(&csv, &result.to_csv(unit, &hash))?;
            outputs.csv = Some(csv);
            if cfg.output.svg.unwrap_or(false) {
                let svg = dir.join(format!("{name}.svg"));
                emit_plot(&result, unit, &name, &svg)?;
                outputs.svg = Some(svg);
            }
            let bad = result.count_flag(Flag::NonConverged);
            if bad > 0 {
                verdict = Err(CliError::NonConvergence(format!("{bad} cells did not reach the solver tolerance")));
            }
        }
        "learner" => {
            let report = run_learner(&cfg)?;
            rows = report.rows.len();
            let csv = dir.join(format!("{name}.csv"));
            write(&csv, &report.to_csv(unit, &hash))?;
            outputs.csv = Some(csv);
        }
        _ => {
            let report = run_validate(&cfg)?;
            rows = report.lines.len();
            let path = dir.join(format!("{name}.report.txt"));
            write(&path, &report.to_text())?;
            outputs.report = Some(path);
            if !report.passed() {
                let names: Vec<String> = report
                    .failures()
                    .map(|l| format!("scenario {} {}: {}", l.scenario, l.learner, l.check.name))
                    .collect();
                verdict = Err(CliError::Validation(names.join("; ")));
            }
        }
    }
    let manifest = format!(
        "command = {}\nname = {name}\nconfig_hash = {hash}\ngenbound_version = {}\nrows = {rows}\nwall_time_s = {:.3}\n",
        cli.command.kind(),
        env!("CARGO_PKG_VERSION"),
        start.elapsed().as_secs_f64()
    );
    write(&outputs.manifest, &manifest)?;
    verdict.map(|_| outputs)
}
