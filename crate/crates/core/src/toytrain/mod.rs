//! Desk-scale differentiable segmentation harness: synthetic data, a small
//! fixed network with interchangeable output heads, and the training and
//! evaluation loops used to compare encodings end to end.

pub mod model;
pub mod synth;
pub mod train;

pub use model::{tree_bank_sizes, ForwardPass, HeadKind, ModelConfig, ToyModel};
pub use synth::{generate_synthetic, ImageFeatures, SynthConfig, SyntheticDataset};
pub use train::{
    evaluate, gradcheck_suite, log_to_csv, predict_labels, train, CodebookSettings, DecodeMode,
    EpochRow, EvalReport, GradCheckOutcome, LossSettings, ModelSettings, OptimizerSettings,
    RunConfig, Split, TrainOutcome, TrainedModel,
};
