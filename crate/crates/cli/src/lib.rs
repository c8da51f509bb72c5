//! Command-line front end: config-driven runs, λ sweeps between adjacent
//! checkpoints, geometry probes, and dataset dumps.
//!
//! Exit codes: 0 success, 1 other I/O failure, 2 config or usage error,
//! 3 missing or unreadable artifact, 4 numeric failure. Errors are printed
//! to stderr as a single JSON object.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use checkpoint::Role;
use commands::{ProbeKind, ProbeOptions};
use config::ExperimentConfig;
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "ilora",
    version,
    about = "Dual-memory adapter continual-learning experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MemoryArg {
    Working,
    LongTerm,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ProbeArg {
    Wd,
    Cka,
    Landscape,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Pretrain the backbone, train the strategy over the stream, write artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config seed.
        #[arg(long, conflicts_with = "seeds")]
        seed: Option<u64>,
        /// Overrides the config output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Runs every seed of `a..b` (or `a..=b`) concurrently into `out/seed_{s}`.
        #[arg(long)]
        seeds: Option<String>,
    },
    /// Accuracy along the line between the checkpoints of tasks t and t+1.
    SweepLambda {
        run_dir: PathBuf,
        #[arg(long)]
        transition: usize,
        /// Evenly spaced points over [0, 1].
        #[arg(long, default_value_t = 21, conflicts_with = "grid")]
        points: usize,
        /// Explicit comma-separated grid; must start at 0 and end at 1.
        #[arg(long)]
        grid: Option<String>,
        /// Which memory to interpolate; defaults to the deployed one.
        #[arg(long, value_enum)]
        memory: Option<MemoryArg>,
    },
    /// Weight distance, CKA, or embedding-landscape probes of a run.
    Probe {
        run_dir: PathBuf,
        #[arg(long, value_enum)]
        kind: ProbeArg,
        /// Landscape only: task whose minima span the plane.
        #[arg(long)]
        transition: Option<usize>,
        /// Landscape only: points per axis.
        #[arg(long, default_value_t = 21)]
        points: usize,
        #[arg(long, default_value_t = -0.5, allow_negative_numbers = true)]
        from: f64,
        #[arg(long, default_value_t = 1.5, allow_negative_numbers = true)]
        to: f64,
    },
    /// Write the generated stream as CSV.
    Dataset {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: &Path, seed: Option<u64>) -> CliResult<ExperimentConfig> {
    let mut config = ExperimentConfig::load(path)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    Ok(config)
}

/// Runs a parsed command and returns the JSON summary printed on success.
pub fn execute(command: Command) -> CliResult<serde_json::Value> {
    match command {
        Command::Run {
            config,
            seed,
            out,
            seeds,
        } => {
            let config = load_config(&config, seed)?;
            let out = out.or_else(|| config.output_dir.clone()).ok_or_else(|| {
                CliError::Config("no output directory: pass --out or set output_dir".into())
            })?;
            let outcomes = match seeds {
                Some(spec) => {
                    commands::cmd_run_seeds(&config, &out, commands::parse_seed_range(&spec)?)?
                }
                None => vec![commands::cmd_run(&config, &out)?],
            };
            let runs: Vec<_> = outcomes
                .iter()
                .map(|o| {
                    json!({
                        "dir": o.dir.display().to_string(),
                        "seed": o.record.seed,
                        "acc": o.metrics.acc.last(),
                        "bwt": o.metrics.bwt.last(),
                    })
                })
                .collect();
            Ok(json!({ "runs": runs }))
        }
        Command::SweepLambda {
            run_dir,
            transition,
            points,
            grid,
            memory,
        } => {
            let grid = match grid {
                Some(spec) => commands::parse_grid(&spec)?,
                None => commands::linspace(0.0, 1.0, points)?,
            };
            let role = memory.map(|m| match m {
                MemoryArg::Working => Role::Working,
                MemoryArg::LongTerm => Role::LongTerm,
            });
            let sweep = commands::cmd_sweep_lambda(&run_dir, transition, &grid, role)?;
            let peaks = sweep.interior_peaks();
            Ok(json!({
                "file": commands::sweep_file(&run_dir, transition).display().to_string(),
                "interior_peak": !peaks.is_empty(),
            }))
        }
        Command::Probe {
            run_dir,
            kind,
            transition,
            points,
            from,
            to,
        } => {
            let kind = match kind {
                ProbeArg::Wd => ProbeKind::Wd,
                ProbeArg::Cka => ProbeKind::Cka,
                ProbeArg::Landscape => ProbeKind::Landscape,
            };
            let opts = ProbeOptions {
                transition,
                grid: commands::linspace(from, to, points)?,
            };
            let path = commands::cmd_probe(&run_dir, kind, &opts)?;
            Ok(json!({ "file": path.display().to_string() }))
        }
        Command::Dataset { config, seed, out } => {
            let config = load_config(&config, seed)?;
            let rows = commands::cmd_dataset(&config, &out)?;
            Ok(json!({ "file": out.display().to_string(), "rows": rows }))
        }
    }
}

/// Parses `args` (including the program name), runs, reports, and returns
/// the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let err = CliError::Config(e.to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return err.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(err) => {
            eprintln!("{}", err.to_json());
            err.exit_code()
        }
    }
}
