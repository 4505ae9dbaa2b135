//! `bitseg`: compact label encodings for large multi-class segmentation.
//!
//! Single binary, file-based pipelines: build codebooks, encode and decode
//! label volumes, corrupt bits, optimize class-to-codeword assignments, and
//! run the synthetic training benchmark. Every file-producing invocation
//! writes a manifest; `bitseg rerun --manifest <path>` replays it bit-exactly.
//!
//! Exit codes: 0 success, 1 usage or validation error, 2 runtime failure.

mod manifest;
mod runner;
mod spec;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bitseg::error::Error;

use crate::manifest::Manifest;
use crate::spec::CommandSpec;

#[derive(Parser)]
#[command(name = "bitseg", version, about = "Compact label encodings for large multi-class segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build or inspect class-to-codeword assignments
    Codebook {
        #[command(subcommand)]
        action: CodebookAction,
    },
    /// Encode a label volume into crisp bit channels
    Encode {
        /// Input label volume
        #[arg(long)]
        labels: PathBuf,
        /// Codebook file
        #[arg(long)]
        codebook: PathBuf,
        /// Output bit volume (stored as a crisp probability volume)
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode a probability or bit volume back to labels
    Decode {
        /// Input probability volume
        #[arg(long)]
        probs: PathBuf,
        /// Codebook file
        #[arg(long)]
        codebook: PathBuf,
        /// Decoding mode: hard (threshold + lookup) or soft (nearest codeword)
        #[arg(long, default_value = "hard")]
        mode: String,
        /// Output label volume
        #[arg(long)]
        out: PathBuf,
    },
    /// Flip bits of a crisp volume independently with a given probability
    Corrupt {
        /// Input bit volume (crisp probability volume)
        #[arg(long)]
        bits: PathBuf,
        /// Per-bit flip probability in [0, 1]
        #[arg(long)]
        flip_prob: f64,
        #[arg(long)]
        seed: u64,
        /// Output bit volume
        #[arg(long)]
        out: PathBuf,
    },
    /// Optimize a codeword assignment from label-volume adjacency statistics
    Assign {
        /// Directory of .lvol label volumes
        #[arg(long)]
        labels_dir: PathBuf,
        /// Encoding scheme: vanilla or hamming74
        #[arg(long, default_value = "vanilla")]
        scheme: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Local-search pass budget
        #[arg(long, default_value_t = 100)]
        iters: usize,
        /// Seeds in the optimized-versus-random cost report
        #[arg(long, default_value_t = 20)]
        report_seeds: u64,
        /// Output codebook file
        #[arg(long)]
        out: PathBuf,
        /// Cost report CSV (defaults to <out>.report.csv)
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Train the toy model described by a run configuration
    Train {
        /// Run configuration (TOML)
        #[arg(long)]
        config: PathBuf,
        /// Output directory for model.json and metrics.csv
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Evaluate a trained model: DSC, boundary, and structure-size reports
    Eval {
        /// Run configuration (TOML); regenerates the dataset
        #[arg(long)]
        config: PathBuf,
        /// Trained model file
        #[arg(long)]
        model: PathBuf,
        /// Second model to compare against (writes dsc_difference.csv)
        #[arg(long)]
        compare: Option<PathBuf>,
        /// Decoding mode: hard or soft
        #[arg(long, default_value = "hard")]
        mode: String,
        /// Dataset split: train or val
        #[arg(long, default_value = "val")]
        split: String,
        /// Output directory for the report CSVs
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Finite-difference validation of all losses and heads
    Gradcheck {
        #[arg(long, default_value_t = 17)]
        seed: u64,
    },
    /// Re-execute a command from its manifest
    Rerun {
        /// Manifest written by a previous invocation
        #[arg(long)]
        manifest: PathBuf,
    },
}

#[derive(Subcommand)]
enum CodebookAction {
    /// Build a seeded random codebook
    Build(BuildArgs),
    /// Print a summary of a codebook file
    Inspect {
        /// Codebook file
        #[arg(long = "in")]
        input: PathBuf,
    },
}

#[derive(Args)]
struct BuildArgs {
    /// Number of classes (background is class 0)
    #[arg(long)]
    classes: usize,
    /// Encoding scheme: vanilla or hamming74
    #[arg(long, default_value = "vanilla")]
    scheme: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Class emitted for data words outside the book
    #[arg(long, default_value_t = 0)]
    background: u16,
    /// Output codebook file
    #[arg(long)]
    out: PathBuf,
}

fn to_spec(command: Command) -> Result<CommandSpec, Error> {
    Ok(match command {
        Command::Codebook { action } => match action {
            CodebookAction::Build(args) => CommandSpec::CodebookBuild {
                classes: args.classes,
                scheme: args.scheme,
                seed: args.seed,
                background: args.background,
                out: args.out,
            },
            CodebookAction::Inspect { input } => CommandSpec::CodebookInspect { input },
        },
        Command::Encode {
            labels,
            codebook,
            out,
        } => CommandSpec::Encode {
            labels,
            codebook,
            out,
        },
        Command::Decode {
            probs,
            codebook,
            mode,
            out,
        } => CommandSpec::Decode {
            probs,
            codebook,
            mode,
            out,
        },
        Command::Corrupt {
            bits,
            flip_prob,
            seed,
            out,
        } => CommandSpec::Corrupt {
            bits,
            flip_prob,
            seed,
            out,
        },
        Command::Assign {
            labels_dir,
            scheme,
            seed,
            iters,
            report_seeds,
            out,
            report,
        } => {
            let report = report.unwrap_or_else(|| {
                let mut name = out.as_os_str().to_os_string();
                name.push(".report.csv");
                PathBuf::from(name)
            });
            CommandSpec::Assign {
                labels_dir,
                scheme,
                seed,
                iters,
                report_seeds,
                out,
                report,
            }
        }
        Command::Train { config, out_dir } => CommandSpec::Train { config, out_dir },
        Command::Eval {
            config,
            model,
            compare,
            mode,
            split,
            out_dir,
        } => CommandSpec::Eval {
            config,
            model,
            compare,
            mode,
            split,
            out_dir,
        },
        Command::Gradcheck { seed } => CommandSpec::Gradcheck { seed },
        Command::Rerun { manifest } => {
            let loaded = Manifest::load(&manifest)?;
            loaded.spec
        }
    })
}

/// 1 for usage/validation problems, 2 for runtime failures.
fn exit_code_for(error: &Error) -> u8 {
    match error {
        Error::InvalidArgument(_)
        | Error::ChannelMismatch { .. }
        | Error::DimMismatch(_)
        | Error::Parse { .. } => 1,
        Error::Io { .. } | Error::Diverged { .. } => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version requests are successes; everything else is a
            // usage error (exit 1).
            let _ = err.print();
            return match err.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(1),
            };
        }
    };
    let spec = match to_spec(cli.command) {
        Ok(spec) => spec,
        Err(err) => {
            eprintln!("error: {err}");
            return ExitCode::from(exit_code_for(&err));
        }
    };
    match runner::execute(spec) {
        Ok(output) => {
            for line in &output.messages {
                println!("{line}");
            }
            ExitCode::from(output.exit_code as u8)
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
