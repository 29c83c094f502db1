//! `trainsens`: command-line front end for pilot-overhead optimization,
//! paired training-sequence design, and radar range checks.
//!
//! Exit codes: 0 on success, 1 on a domain or I/O error, 2 on a usage error.
//! Diagnostics go to stderr as `trainsens: error[<code>]: <message>`.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use trainsens_core::Error as CoreError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Domain(#[from] CoreError),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    fn code(&self) -> &'static str {
        match self {
            Self::Usage(_) => "usage",
            Self::Io(_) => "io",
            Self::Domain(e) => match e {
                CoreError::Domain(_) => "domain",
                CoreError::InvalidScenario(_) => "invalid_scenario",
                CoreError::Evaluation(_) => "evaluation",
                CoreError::Dimension(_) => "dimension",
                CoreError::Singular(_) => "singular",
                CoreError::Infeasible(_) => "infeasible",
                CoreError::MaxIterations(_) => "max_iterations",
                CoreError::AllInfeasible => "all_infeasible",
                CoreError::Parse(_) => "parse",
            },
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Pretty,
}

#[derive(Debug, Parser)]
#[command(name = "trainsens", version, about = "Pilot overhead and joint radar/communication training design")]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand.
#[derive(Debug, Default, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct CommonArgs {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Random seed (default: $TRAINSENS_SEED, else 0).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: one per core).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output file, or output directory for comsens-design.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Output style for tables printed by the command.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Optimal pilot fraction for one scenario.
    PilotOpt(commands::PilotOptArgs),
    /// Optimal pilot fraction across a one-parameter grid, as CSV.
    PilotSweep(commands::PilotSweepArgs),
    /// Design a paired downlink/uplink training set.
    ComsensDesign(commands::DesignArgs),
    /// Correlation report for stored training sequences.
    ComsensVerify(commands::VerifyArgs),
    /// Maximum sensing range of the joint protocol.
    RadarRange(commands::RadarArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Self::PilotOpt(_) => "pilot-opt",
            Self::PilotSweep(_) => "pilot-sweep",
            Self::ComsensDesign(_) => "comsens-design",
            Self::ComsensVerify(_) => "comsens-verify",
            Self::RadarRange(_) => "radar-range",
        }
    }
}

const SECTIONS: [&str; 5] = ["pilot-opt", "pilot-sweep", "comsens-design", "comsens-verify", "radar-range"];

fn run(cli: Cli) -> Result<(), CliError> {
    let name = cli.command.name();
    let file = match &cli.common.config {
        Some(path) => Some(config::load_file(path)?),
        None => None,
    };
    let (file_common, file_section) = match &file {
        Some(table) => {
            let common: toml::Table = table
                .iter()
                .filter(|(k, _)| !SECTIONS.contains(&k.as_str()))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect();
            (Some(toml::Value::Table(common)), table.get(name).cloned())
        }
        None => (None, None),
    };
    let mut common = config::merge(file_common.as_ref(), &cli.common, "top level")?;
    common.config = cli.common.config.clone();
    let seed = config::resolve_seed(cli.common.seed, common.seed)?;
    common.seed = Some(seed);

    if let Some(n) = common.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Io(format!("cannot start thread pool: {e}")))?;
    }

    let section = file_section.as_ref();
    match cli.command {
        Command::PilotOpt(a) => commands::pilot_opt(config::merge(section, &a, name)?, &common),
        Command::PilotSweep(a) => commands::pilot_sweep(config::merge(section, &a, name)?, &common),
        Command::ComsensDesign(a) => commands::comsens_design(config::merge(section, &a, name)?, &common),
        Command::ComsensVerify(a) => commands::comsens_verify(config::merge(section, &a, name)?, &common),
        Command::RadarRange(a) => commands::radar_range(config::merge(section, &a, name)?, &common),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        // Help and version exit 0; malformed arguments exit 2.
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("trainsens: error[{}]: {e}", e.code());
            ExitCode::from(e.exit_code())
        }
    }
}
