//! Command-line front end for the barknet library. The heavy lifting lives
//! in [`commands`]; this module is argument parsing, config merging, and the
//! exit-code contract: 0 success, 1 usage error, 2 bad data or config,
//! 3 ran fine but produced nothing (e.g. no fragments above the gate).

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use commands::{cmd_evaluate, cmd_features, cmd_predict, cmd_synth, cmd_train};
use config::{Overrides, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "barknet", version, about = "Dog bark emotion classifier")]
pub struct Cli {
    /// JSON config file; flags override its values
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Emit machine-readable JSON instead of text
    #[arg(long, global = true)]
    pub json: bool,

    #[command(flatten)]
    pub overrides: Overrides,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a labelled synthetic dataset of WAV files
    Synth {
        /// Directory for the WAVs and manifest.csv
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Train on a manifest and save the best checkpoint
    Train {
        /// CSV manifest: path,label per line
        manifest: PathBuf,
        /// Checkpoint output path (epoch log lands at <PATH>.log)
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
    /// Report test-split metrics for a checkpoint
    Evaluate {
        manifest: PathBuf,
        checkpoint: PathBuf,
    },
    /// Classify one clip fragment-by-fragment plus a majority vote
    Predict { checkpoint: PathBuf, wav: PathBuf },
    /// Print the MFCC matrix of a clip
    Features { wav: PathBuf },
}

/// Parse args, run the chosen command, and translate failures to exit codes.
/// Output goes to `out`, diagnostics to `err` (stdout/stderr in `main`).
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    0
                }
                _ => {
                    let _ = write!(err, "{e}");
                    1
                }
            };
        }
    };

    let mut cfg = match &cli.config {
        Some(path) => match RunConfig::load(path) {
            Ok(cfg) => cfg,
            Err(msg) => {
                let _ = writeln!(err, "error: {msg}");
                return 2;
            }
        },
        None => RunConfig::default(),
    };
    if let Err(msg) = cli.overrides.apply(&mut cfg).and_then(|()| cfg.validate()) {
        let _ = writeln!(err, "error: {msg}");
        return 2;
    }

    let result = match &cli.command {
        Command::Synth { out: dir } => cmd_synth(&cfg, dir, out),
        Command::Train {
            manifest,
            out: ckpt,
        } => cmd_train(&cfg, manifest, ckpt, cli.json, out),
        Command::Evaluate {
            manifest,
            checkpoint,
        } => cmd_evaluate(&cfg, manifest, checkpoint, cli.json, out),
        Command::Predict { checkpoint, wav } => cmd_predict(&cfg, checkpoint, wav, cli.json, out),
        Command::Features { wav } => cmd_features(&cfg, wav, cli.json, out),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
