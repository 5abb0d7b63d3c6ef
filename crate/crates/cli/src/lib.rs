//! Command-line front end: split construction, two-stage training,
//! evaluation, the loss-component ablation grid and static reports.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod draw;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use checkpoint::Checkpoint;
pub use commands::{AblationRow, AblationTable, RunPaths};
pub use config::RunConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "cfl", version, about = "Open-set semi-supervised shape detection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct ConfigArgs {
    /// Flat key = value configuration file; defaults apply when omitted.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Override a configuration key (repeatable), e.g. `--set lambda=1`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StageArg {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Test,
    UnlabeledDiagnostic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NetArg {
    Teacher,
    Student,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render the labeled, unlabeled and test splits to `<output_dir>/data`.
    MakeSplits {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Replace an existing data directory.
        #[arg(long)]
        force: bool,
    },
    /// Train stage 1, stage 2 or both.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_enum, default_value = "both")]
        stage: StageArg,
        /// Continue stage 1 from the last periodic checkpoint.
        #[arg(long)]
        resume: bool,
    },
    /// Evaluate a checkpoint and write metrics plus annotated images.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Defaults to `<output_dir>/checkpoints/latest.ckpt`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        #[arg(long, value_enum, default_value = "teacher")]
        net: NetArg,
    },
    /// Train the enable_fc x enable_uc grid plus the label-only baseline.
    Ablate {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Render loss curves and the ablation table to PNG.
    Report {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

/// Parse `args` (including the program name) and run the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                commands::CommandError::Usage(_) => EXIT_USAGE,
                commands::CommandError::Runtime(_) => EXIT_RUNTIME,
            }
        }
    }
}
