//! `nullwave`: runs scenario configs through the laboratory and writes JSON
//! reports, CSV tables and binary field snapshots.
//!
//! Exit codes: 0 success, 2 a mathematical check failed, 1 any other error.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::commands::Ctx;
use crate::config::ScenarioConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}:{line}:{column}: parse error: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{}:{line}:{column}: schema error: {message}", path.display())]
    Schema {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("cannot read {}: {source}", path.display())]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write {}: {source}", path.display())]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
    #[error("assumption (A) violated (rerun with --allow-assumption-violation):\n  {}", .0.join("\n  "))]
    AssumptionA(Vec<String>),
    #[error("config has no `{0}` section")]
    Missing(&'static str),
    #[error("{0}")]
    Usage(String),
    #[error("{what}: {source}")]
    Context {
        what: &'static str,
        source: nullwave::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn context(what: &'static str, e: impl Into<nullwave::Error>) -> Self {
        CliError::Context {
            what,
            source: e.into(),
        }
    }
}

#[derive(Parser)]
#[command(name = "nullwave", version, about = "Null-form wave interaction laboratory")]
struct Cli {
    /// Scenario config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads for data-parallel loops.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Multiplies every tolerance except the convergence-order band.
    #[arg(long, global = true, default_value_t = 1.0)]
    tol_scale: f64,
    /// Runs dynamics even when the nonlinearity fails assumption (A).
    #[arg(long, global = true)]
    allow_assumption_violation: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Schema and cross-field checks only.
    Validate,
    /// Null-form decompositions of the configured forms.
    Decompose,
    /// Searches for a quadruple on which the interaction symbol is nonzero.
    Witness,
    /// P, A, B and rank over a batch of sampled quadruples.
    Interact,
    /// Conformal scaling of the interaction symbol.
    Conformal,
    /// Forward solve with field snapshots.
    Solve,
    /// Mixed differences against the fourth-order expansion.
    Expand {
        /// With a zero nonlinearity, check that every expansion term vanishes.
        #[arg(long)]
        zero_interaction_check: bool,
    },
    /// Traces geodesics and locates conjugate points.
    Geodesics,
    /// Light and earliest observation sets and their distinguishability.
    Obset,
    /// Grid-refinement study.
    Convergence,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Decompose => "decompose",
            Command::Witness => "witness",
            Command::Interact => "interact",
            Command::Conformal => "conformal",
            Command::Solve => "solve",
            Command::Expand { .. } => "expand",
            Command::Geodesics => "geodesics",
            Command::Obset => "obset",
            Command::Convergence => "convergence",
        }
    }

    /// Commands that evolve the nonlinear equation.
    fn runs_dynamics(self) -> bool {
        matches!(self, Command::Solve | Command::Expand { .. } | Command::Convergence)
    }
}

fn resolve(cli: &Cli) -> Result<(ScenarioConfig, PathBuf), CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Usage("--config is required".into()))?;
    if !(cli.tol_scale > 0.0) {
        return Err(CliError::Usage("--tol-scale must be positive".into()));
    }
    let mut cfg = config::load(path)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.tolerances = cfg.tolerances.scaled(cli.tol_scale);
    if let Command::Expand {
        zero_interaction_check: true,
    } = cli.command
    {
        cfg.expansion.zero_interaction_check = true;
    }
    let dir = cli
        .out_dir
        .clone()
        .or_else(|| cfg.output_dir.take())
        .unwrap_or_else(|| PathBuf::from("nullwave-out"));
    cfg.output_dir = None;
    Ok((cfg, dir))
}

fn run(cli: &Cli) -> Result<ExitCode, CliError> {
    let (cfg, dir) = resolve(cli)?;
    let v = config::validate(&cfg);
    for w in &v.warnings {
        eprintln!("warning: assumption (A) violated: {w}");
    }
    if !v.is_ok() {
        return Err(CliError::Invalid(v.errors));
    }
    if cli.command == Command::Validate {
        println!("ok: {}", cli.config.as_ref().expect("resolved").display());
        return Ok(ExitCode::SUCCESS);
    }
    let nonlinear = cfg.nonlinearity.as_ref().is_some_and(|n| !n.is_zero());
    if cli.command.runs_dynamics()
        && nonlinear
        && !v.warnings.is_empty()
        && !cli.allow_assumption_violation
    {
        return Err(CliError::AssumptionA(v.warnings));
    }
    if let Some(n) = cli.threads {
        nullwave::exec::init_threads(n);
    }
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Write {
        path: dir.clone(),
        source: e,
    })?;
    let ctx = Ctx {
        cfg: &cfg,
        dir: &dir,
        exec: cfg.solver.exec,
    };
    let outcome = match cli.command {
        Command::Validate => unreachable!("handled above"),
        Command::Decompose => commands::decompose(&ctx)?,
        Command::Witness => commands::witness(&ctx)?,
        Command::Interact => commands::interact(&ctx)?,
        Command::Conformal => commands::conformal(&ctx)?,
        Command::Solve => commands::solve(&ctx)?,
        Command::Expand { .. } => commands::expand(&ctx)?,
        Command::Geodesics => commands::geodesics(&ctx)?,
        Command::Obset => commands::obset(&ctx)?,
        Command::Convergence => commands::convergence(&ctx)?,
    };
    let path = report::write(&dir, cli.command.name(), &cfg, &v.warnings, &outcome)?;
    for c in outcome.checks.iter().filter(|c| !c.passed) {
        eprintln!("check failed: {} = {:e} (bound {:e})", c.name, c.value, c.bound);
    }
    println!("{}", path.display());
    Ok(if outcome.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
