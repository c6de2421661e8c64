//! `higflow`: train, evaluate and analyse hierarchical graph flow models.
//!
//! Settings come from built-in defaults, then an optional `--config` file of
//! `key = value` lines, then trailing `--key=value` overrides.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use higflow::config::{DataSource, RunConfig};
use higflow::run::{self, SweepAxis};
use higflow::{Error, Result};

#[derive(Parser)]
#[command(name = "higflow", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Settings {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides such as `--depth=3` or `lr=1e-3`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Settings {
    fn load(&self) -> Result<RunConfig> {
        let pairs = self
            .overrides
            .iter()
            .map(|raw| {
                let body = raw.strip_prefix("--").unwrap_or(raw);
                body.split_once('=')
                    .map(|(k, v)| (k.replace('-', "_"), v.to_string()))
                    .ok_or_else(|| Error::config(body, "override must look like --key=value"))
            })
            .collect::<Result<Vec<_>>>()?;
        RunConfig::load(self.config.as_deref(), &pairs)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train with early stopping and write a run directory.
    Train(Settings),
    /// Test-split metrics of a checkpoint, as JSON.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        settings: Settings,
    },
    /// Randomized checks of the smoothness and expressiveness results.
    Analyze(Settings),
    /// One training run per axis value, consolidated into sweep.csv.
    Sweep {
        /// depth, transition_depth or horizon.
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<usize>,
        #[command(flatten)]
        settings: Settings,
    },
    /// Write the seeded coupled-sinusoid series as CSV.
    GenSynthetic {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        settings: Settings,
    },
}

fn json<T: serde::Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::State(e.to_string()))
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(s) => {
            let report = run::cmd_train(&s.load()?)?;
            println!("{}", json(&report)?);
        }
        Command::Eval { checkpoint, settings } => {
            let metrics = run::cmd_eval(&settings.load()?, &checkpoint)?;
            println!("{}", json(&metrics)?);
        }
        Command::Analyze(s) => {
            let report = run::cmd_analyze(&s.load()?)?;
            print!("{}", run::verdict_lines(&report.verdicts));
        }
        Command::Sweep { axis, values, settings } => {
            let cfg = settings.load()?;
            let axis: SweepAxis = axis.parse()?;
            run::cmd_sweep(&cfg, axis, &values)?;
            let path = cfg.resolve_output_dir("sweep").join(run::SWEEP_FILE);
            println!("{}", path.display());
        }
        Command::GenSynthetic { out, settings } => {
            let cfg = settings.load()?;
            let DataSource::Synthetic(spec) = &cfg.data else {
                return Err(Error::config("data", "gen-synthetic takes synthetic_* settings only"));
            };
            run::cmd_gen_synthetic(spec, &out)?;
            println!("{}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {line}", e.kind());
            ExitCode::FAILURE
        }
    }
}
