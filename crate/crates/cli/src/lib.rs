//! The `beamseq` pipeline: `gen` -> `train` -> `eval` / `sweep` -> `validate`,
//! with every stage reading and writing files in one run directory.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use artifacts::RunDir;
pub use config::RunConfig;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "beamseq", version, about = "Predict a target RSU's beams from a source base station's past CSI")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override the configuration's seed.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Run directory for all artifacts.
    #[arg(long, global = true, value_name = "DIR", default_value = "run")]
    pub out: PathBuf,
    /// Use the small built-in toy configuration.
    #[arg(long, global = true)]
    pub toy: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Generate the scene, channel grid and datasets.
    Gen,
    /// Train the sequence predictor(s) and the snapshot baseline.
    Train {
        /// Continue from the saved training state if present.
        #[arg(long)]
        resume: bool,
    },
    /// Loss CDFs and the comparison summary.
    Eval,
    /// Mean spectral efficiency against prediction delay.
    Sweep,
    /// Re-check all invariants on the saved artifacts.
    Validate,
}

impl Cli {
    pub fn resolve_config(&self) -> Result<RunConfig, CliError> {
        let base = match (&self.config, self.toy) {
            (Some(_), true) => return Err(CliError::Usage("--toy and --config are mutually exclusive".into())),
            (Some(path), false) => RunConfig::load(path)?,
            (None, true) => RunConfig::toy(),
            (None, false) => RunConfig::default(),
        };
        base.finalize(self.seed)
    }
}

pub fn run(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let config = cli.resolve_config()?;
    let run = RunDir::new(&cli.out);
    match cli.command {
        Command::Gen => commands::gen(&config, &run, out),
        Command::Train { resume } => commands::train(&config, &run, resume, out),
        Command::Eval => commands::eval(&config, &run, out, err),
        Command::Sweep => commands::sweep(&config, &run, out, err),
        Command::Validate => commands::validate(&config, &run, out),
    }
}
