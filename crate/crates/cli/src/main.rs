//! `tailstdf`: simulate samples, tabulate the empirical tail dependence
//! function, and run the deviation, bound, Rademacher and classification
//! experiments. Every run writes a manifest that replays it exactly.
//!
//! Exit status: 0 success, 2 usage or configuration error, 3 bad input data,
//! 4 violated precondition, 5 internal or I/O failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "tailstdf", version, about = "Empirical tail dependence experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML config, or a manifest from an earlier run.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Output directory.
    #[arg(long, global = true, env = "TAILSTDF_OUT")]
    out: Option<PathBuf>,

    /// Override a config field, e.g. `--set k_schedule=[50,100]`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a sample and write it as CSV.
    Simulate,
    /// Tabulate l_n on the 1/k lattice (or a grid) of [0, T]^d.
    Estimate {
        /// Input CSV.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long = "T", value_name = "T")]
        t_region: Option<f64>,
        /// `exact` or `grid(STEP)`.
        #[arg(long)]
        grid: Option<String>,
    },
    /// Uniform estimation error across a schedule of k.
    Converge,
    /// Evaluate a closed-form deviation bound.
    Bound {
        /// theorem1, remark1, remark2, theorem2 or compare.
        #[arg(long)]
        kind: Option<String>,
    },
    /// Relative Rademacher averages and the class complexity.
    Rademacher,
    /// Conditional-risk deviations of a finite labeler family.
    Classify,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Estimate { .. } => "estimate",
            Command::Converge => "converge",
            Command::Bound { .. } => "bound",
            Command::Rademacher => "rademacher",
            Command::Classify => "classify",
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Lib(tailstdf::Error),
    Internal(String),
}

impl From<tailstdf::Error> for CliError {
    fn from(e: tailstdf::Error) -> Self {
        CliError::Lib(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Lib(e) if matches!(e, tailstdf::Error::Config(_)) => 2,
            CliError::Lib(e) if e.is_data() => 3,
            CliError::Lib(e) if e.is_precondition() => 4,
            CliError::Lib(_) | CliError::Internal(_) => 5,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) | CliError::Internal(m) => m.clone(),
            CliError::Lib(e) => e.to_string(),
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(CliError::Usage("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| CliError::Internal(format!("cannot start worker pool: {e}")))?;
    }
    let name = cli.command.name();
    let mut map = config::load(cli.config.as_deref(), name)?;
    if let Some(seed) = cli.seed {
        map.insert("seed".into(), seed.into());
    }
    match &cli.command {
        Command::Estimate { data, k, t_region, grid } => {
            if let Some(p) = data {
                map.insert("data".into(), p.display().to_string().into());
            }
            if let Some(k) = k {
                map.insert("k".into(), (*k).into());
            }
            if let Some(t) = t_region {
                map.insert("T".into(), (*t).into());
            }
            if let Some(g) = grid {
                map.insert("grid".into(), g.clone().into());
            }
        }
        Command::Bound { kind: Some(kind) } => {
            map.insert("kind".into(), kind.clone().into());
        }
        _ => {}
    }
    for raw in &cli.set {
        let (key, value) = config::parse_assignment(raw)?;
        map.insert(key, value);
    }
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out).map_err(|e| CliError::Internal(format!("cannot create {}: {e}", out.display())))?;
    commands::dispatch(name, map, &out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tailstdf: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
