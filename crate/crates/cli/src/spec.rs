//! Fully resolved command descriptions.
//!
//! Every subcommand is normalized into a [`CommandSpec`] before execution;
//! the manifest stores the spec verbatim, which is what makes `rerun`
//! trivial and bit-exact.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum CommandSpec {
    CodebookBuild {
        classes: usize,
        scheme: String,
        seed: u64,
        background: u16,
        out: PathBuf,
    },
    CodebookInspect {
        input: PathBuf,
    },
    Encode {
        labels: PathBuf,
        codebook: PathBuf,
        out: PathBuf,
    },
    Decode {
        probs: PathBuf,
        codebook: PathBuf,
        mode: String,
        out: PathBuf,
    },
    Corrupt {
        bits: PathBuf,
        flip_prob: f64,
        seed: u64,
        out: PathBuf,
    },
    Assign {
        labels_dir: PathBuf,
        scheme: String,
        seed: u64,
        iters: usize,
        /// Seeds compared in the optimized-versus-random report.
        report_seeds: u64,
        out: PathBuf,
        report: PathBuf,
    },
    Train {
        config: PathBuf,
        out_dir: PathBuf,
    },
    Eval {
        config: PathBuf,
        model: PathBuf,
        compare: Option<PathBuf>,
        mode: String,
        split: String,
        out_dir: PathBuf,
    },
    Gradcheck {
        seed: u64,
    },
}

impl CommandSpec {
    pub fn seeds(&self) -> Vec<u64> {
        match self {
            CommandSpec::CodebookBuild { seed, .. }
            | CommandSpec::Corrupt { seed, .. }
            | CommandSpec::Gradcheck { seed }
            | CommandSpec::Assign { seed, .. } => vec![*seed],
            _ => Vec::new(),
        }
    }

    pub fn inputs(&self) -> Vec<PathBuf> {
        match self {
            CommandSpec::CodebookBuild { .. } | CommandSpec::Gradcheck { .. } => Vec::new(),
            CommandSpec::CodebookInspect { input } => vec![input.clone()],
            CommandSpec::Encode {
                labels, codebook, ..
            } => vec![labels.clone(), codebook.clone()],
            CommandSpec::Decode {
                probs, codebook, ..
            } => vec![probs.clone(), codebook.clone()],
            CommandSpec::Corrupt { bits, .. } => vec![bits.clone()],
            CommandSpec::Assign { labels_dir, .. } => vec![labels_dir.clone()],
            CommandSpec::Train { config, .. } => vec![config.clone()],
            CommandSpec::Eval {
                config,
                model,
                compare,
                ..
            } => {
                let mut inputs = vec![config.clone(), model.clone()];
                if let Some(other) = compare {
                    inputs.push(other.clone());
                }
                inputs
            }
        }
    }
}
