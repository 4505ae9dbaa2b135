//! Training and evaluation of the toy segmentation model.
//!
//! Supervision per head: one-hot uses multi-class Dice plus cross-entropy;
//! binary, hamming, and tree heads use per-channel binary Dice plus binary
//! cross-entropy on the encoded target bits (tree with teacher forcing).
//! Optimization is plain mini-batch gradient descent with a fixed step size.
//! Everything is seed-deterministic: two runs with identical configs produce
//! identical parameter vectors and metrics logs.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::codebook::{Codebook, Scheme};
use crate::decode::{encode_labels, hard_decode, soft_decode};
use crate::error::{Error, Result};
use crate::loss::{
    binary_dice_ce_loss, cross_entropy_loss, dice_loss, inverse_frequency_bit_weights,
    BitWeights, LossValue,
};
use crate::metrics::{
    boundary_error_fraction, dsc_report, dsc_vs_structure_size, DscReport, SizeRow,
};
use crate::toytrain::model::{HeadKind, ModelConfig, ToyModel};
use crate::toytrain::synth::{ImageFeatures, SynthConfig, SyntheticDataset};
use crate::volume::{Dims, LabelVolume, ProbVolume};

const RUN_CONFIG_FORMAT_VERSION: u32 = 1;
const MODEL_FORMAT_VERSION: u32 = 1;

fn default_format_version() -> u32 {
    RUN_CONFIG_FORMAT_VERSION
}

fn default_dice_smoothing() -> f64 {
    crate::loss::DICE_SMOOTHING
}

/// Complete description of a training run; serialized as TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default = "default_format_version")]
    pub format_version: u32,
    pub dataset: SynthConfig,
    pub model: ModelSettings,
    pub codebook: CodebookSettings,
    pub loss: LossSettings,
    pub optimizer: OptimizerSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSettings {
    pub head: HeadKind,
    pub hidden_width: usize,
    pub init_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodebookSettings {
    /// Seed for the random codebook built when no path is given.
    pub seed: u64,
    /// Optional path to a saved codebook file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossSettings {
    /// Use inverse-foreground-frequency weights in the binary CE term.
    #[serde(default)]
    pub weighted_bits: bool,
    #[serde(default = "default_dice_smoothing")]
    pub dice_smoothing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSettings {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub shuffle_seed: u64,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.format_version != RUN_CONFIG_FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported run config format version {}",
                self.format_version
            )));
        }
        self.dataset.validate()?;
        if self.model.hidden_width == 0 {
            return Err(Error::invalid("hidden width must be positive"));
        }
        if self.optimizer.learning_rate <= 0.0 {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.optimizer.epochs == 0 || self.optimizer.batch_size == 0 {
            return Err(Error::invalid("epochs and batch size must be positive"));
        }
        if self.loss.dice_smoothing <= 0.0 {
            return Err(Error::invalid("dice smoothing must be positive"));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: RunConfig =
            toml::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
        config.validate().map_err(|e| Error::parse(path, e.to_string()))?;
        Ok(config)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self).map_err(|e| Error::parse(path, e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Encoding scheme implied by the head.
    pub fn scheme(&self) -> Scheme {
        match self.model.head {
            HeadKind::Hamming => Scheme::Hamming74,
            _ => Scheme::Vanilla,
        }
    }

    /// Load the configured codebook or build the seeded random one, checking
    /// that its scheme and class count match the run.
    pub fn resolve_codebook(&self) -> Result<Codebook> {
        let book = match &self.codebook.path {
            Some(path) => Codebook::load(path)?,
            None => Codebook::random(
                self.dataset.n_classes,
                self.scheme(),
                self.codebook.seed,
            )?,
        };
        if book.n_classes() != self.dataset.n_classes {
            return Err(Error::invalid(format!(
                "codebook has {} classes but the dataset has {}",
                book.n_classes(),
                self.dataset.n_classes
            )));
        }
        if book.scheme() != self.scheme() {
            return Err(Error::invalid(format!(
                "head '{}' needs a {} codebook, got {}",
                self.model.head.name(),
                self.scheme().name(),
                book.scheme().name()
            )));
        }
        Ok(book)
    }

    /// Architecture derived from the dataset, head, and codebook.
    pub fn model_config(&self, codebook: &Codebook) -> ModelConfig {
        let out_channels = match self.model.head {
            HeadKind::OneHot => self.dataset.n_classes,
            HeadKind::Binary | HeadKind::Hamming => codebook.n_encoded_bits(),
            HeadKind::Tree => codebook.n_data_bits(),
        };
        ModelConfig {
            in_channels: self.dataset.n_classes,
            hidden_width: self.model.hidden_width,
            n_classes: self.dataset.n_classes,
            out_channels,
            head: self.model.head,
        }
    }
}

/// A trained model bundled with the codebook it was supervised against.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub model: ToyModel,
    pub codebook: Codebook,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    config: ModelConfig,
    codebook: Codebook,
    params: Vec<f64>,
}

impl TrainedModel {
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            config: self.model.config.clone(),
            codebook: self.codebook.clone(),
            params: self.model.params.clone(),
        };
        let json =
            serde_json::to_string(&file).map_err(|e| Error::parse(path, e.to_string()))?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ModelFile = serde_json::from_str(&text)
            .map_err(|e| Error::parse(path, format!("line {}: {e}", e.line())))?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::parse(
                path,
                format!("unsupported model format version {}", file.format_version),
            ));
        }
        file.config.validate().map_err(|e| Error::parse(path, e.to_string()))?;
        let layout_len = ToyModel::new(file.config.clone(), 0)?.n_params();
        if file.params.len() != layout_len {
            return Err(Error::parse(
                path,
                format!(
                    "parameter vector has {} entries, architecture needs {layout_len}",
                    file.params.len()
                ),
            ));
        }
        Ok(TrainedModel {
            model: ToyModel {
                config: file.config,
                params: file.params,
            },
            codebook: file.codebook,
        })
    }
}

/// One line of the training metrics log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRow {
    pub epoch: usize,
    pub loss: f64,
    pub mean_dsc: f64,
    pub boundary_error_fraction: f64,
    /// Cohort per-class mean DSC, parallel to class ids 0..n_classes.
    pub per_class_dsc: Vec<Option<f64>>,
}

/// Metrics log CSV: epoch, loss, mean DSC, per-class DSC columns, boundary
/// error fraction.
pub fn log_to_csv(rows: &[EpochRow], n_classes: usize) -> String {
    let mut out = String::from("epoch,loss,mean_dsc");
    for c in 0..n_classes {
        out.push_str(&format!(",dsc_class_{c}"));
    }
    out.push_str(",boundary_error_fraction\n");
    for row in rows {
        out.push_str(&format!("{},{},{}", row.epoch, row.loss, row.mean_dsc));
        for value in &row.per_class_dsc {
            match value {
                Some(dsc) => out.push_str(&format!(",{dsc}")),
                None => out.push(','),
            }
        }
        out.push_str(&format!(",{}\n", row.boundary_error_fraction));
    }
    out
}

pub struct TrainOutcome {
    pub trained: TrainedModel,
    pub log: Vec<EpochRow>,
}

/// Supervision targets for one image.
enum Targets {
    OneHot { one_hot: Vec<f64> },
    Bits { bits: Vec<u8> },
}

fn build_targets(
    head: HeadKind,
    labels: &LabelVolume,
    codebook: &Codebook,
    n_classes: usize,
) -> Result<Targets> {
    match head {
        HeadKind::OneHot => {
            let n_px = labels.dims.n_voxels();
            let mut one_hot = vec![0.0; n_classes * n_px];
            for (p, &label) in labels.labels.iter().enumerate() {
                if label as usize >= n_classes {
                    return Err(Error::invalid(format!(
                        "label {label} out of range for {n_classes} classes"
                    )));
                }
                one_hot[label as usize * n_px + p] = 1.0;
            }
            Ok(Targets::OneHot { one_hot })
        }
        _ => {
            let encoded = encode_labels(labels, codebook)?;
            Ok(Targets::Bits { bits: encoded.bits })
        }
    }
}

fn image_loss(
    head: HeadKind,
    probs: &[f64],
    targets: &Targets,
    labels: &LabelVolume,
    n_px: usize,
    bit_weights: Option<&BitWeights>,
    smoothing: f64,
) -> Result<LossValue> {
    match (head, targets) {
        (HeadKind::OneHot, Targets::OneHot { one_hot }) => {
            let n_classes = one_hot.len() / n_px;
            let dice = dice_loss(probs, one_hot, n_classes, n_px, smoothing)?;
            let ce = cross_entropy_loss(probs, &labels.labels, n_classes, None)?;
            let grad = dice
                .grad
                .iter()
                .zip(ce.grad.iter())
                .map(|(a, b)| a + b)
                .collect();
            Ok(LossValue {
                value: dice.value + ce.value,
                grad,
            })
        }
        (_, Targets::Bits { bits }) => {
            let n_channels = bits.len() / n_px;
            binary_dice_ce_loss(probs, bits, n_channels, n_px, bit_weights, smoothing)
        }
        _ => unreachable!("targets are built per head"),
    }
}

/// Mini-batch gradient descent; deterministic for fixed seeds.
///
/// Per-epoch metrics are evaluated on the validation split (training split
/// when there is none) with hard decoding.
pub fn train(
    run: &RunConfig,
    dataset: &SyntheticDataset,
    codebook: &Codebook,
) -> Result<TrainOutcome> {
    run.validate()?;
    if dataset.images.is_empty() {
        return Err(Error::invalid("dataset is empty"));
    }
    let head = run.model.head;
    let config = run.model_config(codebook);
    let mut model = ToyModel::new(config, run.model.init_seed)?;
    let n_classes = run.dataset.n_classes;

    let train_indices: Vec<usize> = dataset.train_range().collect();
    let targets: Vec<Targets> = train_indices
        .iter()
        .map(|&i| build_targets(head, &dataset.labels[i], codebook, n_classes))
        .collect::<Result<_>>()?;

    // Inverse-frequency bit weights from the training split, when requested.
    let bit_weights: Option<BitWeights> = if run.loss.weighted_bits && head != HeadKind::OneHot {
        let n_channels = model.config.out_channels;
        let mut all_bits = Vec::new();
        let mut total_px = 0usize;
        for target in &targets {
            if let Targets::Bits { bits } = target {
                total_px += bits.len() / n_channels;
            }
        }
        all_bits.resize(n_channels * total_px, 0u8);
        let mut cursor = 0usize;
        for target in &targets {
            if let Targets::Bits { bits } = target {
                let n_px = bits.len() / n_channels;
                for c in 0..n_channels {
                    all_bits[c * total_px + cursor..c * total_px + cursor + n_px]
                        .copy_from_slice(&bits[c * n_px..(c + 1) * n_px]);
                }
                cursor += n_px;
            }
        }
        Some(inverse_frequency_bit_weights(&all_bits, n_channels, total_px)?)
    } else {
        None
    };

    let mut shuffle_rng = rand_chacha::ChaCha8Rng::seed_from_u64(run.optimizer.shuffle_seed);
    let mut order = train_indices.clone();
    let mut log = Vec::with_capacity(run.optimizer.epochs);
    let mut grad_accum = vec![0.0f64; model.n_params()];

    for epoch in 0..run.optimizer.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(run.optimizer.batch_size) {
            grad_accum.fill(0.0);
            for &idx in batch {
                let image = &dataset.images[idx];
                let slot = train_indices.iter().position(|&i| i == idx).expect("train index");
                let target = &targets[slot];
                let teacher = match (head, target) {
                    (HeadKind::Tree, Targets::Bits { bits }) => Some(bits.as_slice()),
                    _ => None,
                };
                let pass = model.forward_train(image, teacher)?;
                let loss = image_loss(
                    head,
                    &pass.probs,
                    target,
                    &dataset.labels[idx],
                    image.n_pixels(),
                    bit_weights.as_ref(),
                    run.loss.dice_smoothing,
                )?;
                if !loss.value.is_finite() {
                    return Err(Error::Diverged { epoch });
                }
                loss_sum += loss.value;
                let grad = model.backward(image, &pass, &loss.grad)?;
                for (acc, g) in grad_accum.iter_mut().zip(grad.iter()) {
                    *acc += g;
                }
            }
            let step = run.optimizer.learning_rate / batch.len() as f64;
            for (param, acc) in model.params.iter_mut().zip(grad_accum.iter()) {
                *param -= step * acc;
            }
        }
        let epoch_loss = loss_sum / train_indices.len() as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }

        let trained = TrainedModel {
            model: model.clone(),
            codebook: codebook.clone(),
        };
        let eval_split = if run.dataset.n_val > 0 {
            Split::Validation
        } else {
            Split::Train
        };
        let report = evaluate(&trained, dataset, eval_split, DecodeMode::Hard)?;
        log.push(EpochRow {
            epoch,
            loss: epoch_loss,
            mean_dsc: report.dsc.cohort_mean,
            boundary_error_fraction: report.mean_boundary_error_fraction,
            per_class_dsc: per_class_means(&report.dsc),
        });
    }

    Ok(TrainOutcome {
        trained: TrainedModel {
            model,
            codebook: codebook.clone(),
        },
        log,
    })
}

/// Cohort per-class mean DSC (mean over cases where the class was present).
fn per_class_means(report: &DscReport) -> Vec<Option<f64>> {
    (0..report.classes.len())
        .map(|slot| {
            let values: Vec<f64> = report
                .per_case_per_class
                .iter()
                .filter_map(|row| row[slot])
                .collect();
            (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMode {
    Hard,
    Soft,
}

impl std::str::FromStr for DecodeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hard" => Ok(DecodeMode::Hard),
            "soft" => Ok(DecodeMode::Soft),
            other => Err(Error::invalid(format!(
                "unknown decode mode '{other}' (expected 'hard' or 'soft')"
            ))),
        }
    }
}

/// Decoded predictions plus Table-1-style aggregation and boundary report.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub dsc: DscReport,
    pub per_case_boundary: Vec<f64>,
    pub mean_boundary_error_fraction: f64,
    pub size_rows: Vec<SizeRow>,
    pub predictions: Vec<LabelVolume>,
}

/// Predict a label volume for one image.
///
/// The one-hot head decodes by per-pixel argmax; binary heads decode through
/// the codebook in the requested mode.
pub fn predict_labels(
    trained: &TrainedModel,
    image: &ImageFeatures,
    mode: DecodeMode,
) -> Result<LabelVolume> {
    let pass = trained.model.forward_infer(image)?;
    let n_px = image.n_pixels();
    let dims = Dims::new(image.width, image.height, 1)?;
    match trained.model.config.head {
        HeadKind::OneHot => {
            let n_out = trained.model.config.out_channels;
            let labels = (0..n_px)
                .map(|p| {
                    let mut best = (f64::NEG_INFINITY, 0u16);
                    for o in 0..n_out {
                        let prob = pass.probs[o * n_px + p];
                        if prob > best.0 {
                            best = (prob, o as u16);
                        }
                    }
                    best.1
                })
                .collect();
            LabelVolume::new(dims, labels)
        }
        _ => {
            let values: Vec<f32> = pass.probs.iter().map(|&p| p as f32).collect();
            let probs = ProbVolume::new(dims, trained.model.config.out_channels, values)?;
            match mode {
                DecodeMode::Hard => hard_decode(&probs, &trained.codebook),
                DecodeMode::Soft => soft_decode(&probs, &trained.codebook),
            }
        }
    }
}

/// Decode every image of the split and aggregate DSC, boundary, and
/// structure-size statistics.
pub fn evaluate(
    trained: &TrainedModel,
    dataset: &SyntheticDataset,
    split: Split,
    mode: DecodeMode,
) -> Result<EvalReport> {
    let range = match split {
        Split::Train => dataset.train_range(),
        Split::Validation => dataset.val_range(),
    };
    if range.is_empty() {
        return Err(Error::invalid("requested split is empty"));
    }
    let mut predictions = Vec::with_capacity(range.len());
    let mut truths = Vec::with_capacity(range.len());
    for idx in range {
        predictions.push(predict_labels(trained, &dataset.images[idx], mode)?);
        truths.push(dataset.labels[idx].clone());
    }
    let dsc = dsc_report(&predictions, &truths, dataset.config.n_classes, true)?;
    let mut per_case_boundary = Vec::with_capacity(predictions.len());
    for (pred, truth) in predictions.iter().zip(truths.iter()) {
        // Single-class truths carry no boundary; skip them.
        let first = truth.labels[0];
        if truth.labels.iter().all(|&l| l == first) {
            continue;
        }
        per_case_boundary.push(boundary_error_fraction(pred, truth)?);
    }
    let mean_boundary = if per_case_boundary.is_empty() {
        0.0
    } else {
        per_case_boundary.iter().sum::<f64>() / per_case_boundary.len() as f64
    };
    let size_rows = dsc_vs_structure_size(&dsc, &truths)?;
    Ok(EvalReport {
        dsc,
        per_case_boundary,
        mean_boundary_error_fraction: mean_boundary,
        size_rows,
        predictions,
    })
}

/// One named finite-difference comparison.
#[derive(Debug, Clone)]
pub struct GradCheckOutcome {
    pub name: String,
    pub max_error: f64,
    pub tolerance: f64,
}

impl GradCheckOutcome {
    pub fn passed(&self) -> bool {
        self.max_error < self.tolerance
    }
}

/// Finite-difference validation of every loss and every head's end-to-end
/// training objective on a tiny seeded fixture.
///
/// Losses are checked at relative error 1e-6, end-to-end parameter gradients
/// at 1e-5 (with a 1e-3 denominator floor; see [`crate::gradcheck`]).
pub fn gradcheck_suite(seed: u64) -> Result<Vec<GradCheckOutcome>> {
    use crate::gradcheck::{central_difference, max_relative_error, max_relative_error_floored};
    use rand::Rng;

    let mut outcomes = Vec::new();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);

    // Loss-level checks on random batches.
    let n_classes = 3;
    let n_voxels = 6;
    let labels: Vec<u16> = (0..n_voxels).map(|_| rng.random_range(0..3) as u16).collect();
    let mut one_hot = vec![0.0; n_classes * n_voxels];
    for (i, &label) in labels.iter().enumerate() {
        one_hot[label as usize * n_voxels + i] = 1.0;
    }
    let pred: Vec<f64> = (0..n_classes * n_voxels)
        .map(|_| rng.random_range(0.05..0.95))
        .collect();

    let analytic = dice_loss(&pred, &one_hot, n_classes, n_voxels, 1e-5)?;
    let numeric = central_difference(&pred, 1e-6, |p| {
        dice_loss(p, &one_hot, n_classes, n_voxels, 1e-5).unwrap().value
    });
    outcomes.push(GradCheckOutcome {
        name: "dice_loss".into(),
        max_error: max_relative_error(&analytic.grad, &numeric),
        tolerance: 1e-6,
    });

    let weights = vec![0.5, 2.0, 1.25];
    let analytic = cross_entropy_loss(&pred, &labels, n_classes, Some(&weights))?;
    let numeric = central_difference(&pred, 1e-6, |p| {
        cross_entropy_loss(p, &labels, n_classes, Some(&weights)).unwrap().value
    });
    outcomes.push(GradCheckOutcome {
        name: "weighted_cross_entropy".into(),
        max_error: max_relative_error(&analytic.grad, &numeric),
        tolerance: 1e-6,
    });

    let n_bits = 7;
    let bit_targets: Vec<u8> = (0..n_bits * n_voxels).map(|_| rng.random_range(0..2)).collect();
    let bit_pred: Vec<f64> = (0..n_bits * n_voxels)
        .map(|_| rng.random_range(0.05..0.95))
        .collect();
    let bit_weights = inverse_frequency_bit_weights(&bit_targets, n_bits, n_voxels)?;
    let analytic =
        binary_dice_ce_loss(&bit_pred, &bit_targets, n_bits, n_voxels, Some(&bit_weights), 1e-5)?;
    let numeric = central_difference(&bit_pred, 1e-6, |p| {
        binary_dice_ce_loss(p, &bit_targets, n_bits, n_voxels, Some(&bit_weights), 1e-5)
            .unwrap()
            .value
    });
    outcomes.push(GradCheckOutcome {
        name: "binary_dice_ce".into(),
        max_error: max_relative_error(&analytic.grad, &numeric),
        tolerance: 1e-6,
    });

    // End-to-end checks: a 4x4 image, every head.
    let synth = SynthConfig {
        n_classes: 5,
        width: 4,
        height: 4,
        n_train: 1,
        n_val: 0,
        noise_sigma: 0.3,
        blur_passes: 1,
        seed: seed ^ 0x9e37_79b9,
    };
    let data = crate::toytrain::synth::generate_synthetic(&synth)?;
    let image = &data.images[0];
    let labels = &data.labels[0];
    let n_px = image.n_pixels();

    for head in [HeadKind::OneHot, HeadKind::Binary, HeadKind::Hamming, HeadKind::Tree] {
        let scheme = match head {
            HeadKind::Hamming => Scheme::Hamming74,
            _ => Scheme::Vanilla,
        };
        let codebook = Codebook::random(synth.n_classes, scheme, 3)?;
        let out_channels = match head {
            HeadKind::OneHot => synth.n_classes,
            HeadKind::Binary | HeadKind::Hamming => codebook.n_encoded_bits(),
            HeadKind::Tree => codebook.n_data_bits(),
        };
        let config = ModelConfig {
            in_channels: synth.n_classes,
            hidden_width: 4,
            n_classes: synth.n_classes,
            out_channels,
            head,
        };
        let model = ToyModel::new(config.clone(), seed ^ 0x51ed)?;
        let targets = build_targets(head, labels, &codebook, synth.n_classes)?;
        let teacher: Option<Vec<u8>> = match (&targets, head) {
            (Targets::Bits { bits }, HeadKind::Tree) => Some(bits.clone()),
            _ => None,
        };

        let objective = |params: &[f64]| -> f64 {
            let probe = ToyModel {
                config: config.clone(),
                params: params.to_vec(),
            };
            let pass = probe.forward_train(image, teacher.as_deref()).unwrap();
            image_loss(head, &pass.probs, &targets, labels, n_px, None, 1e-5)
                .unwrap()
                .value
        };

        let pass = model.forward_train(image, teacher.as_deref())?;
        let loss = image_loss(head, &pass.probs, &targets, labels, n_px, None, 1e-5)?;
        let analytic = model.backward(image, &pass, &loss.grad)?;
        let numeric = central_difference(&model.params, 1e-6, objective);
        outcomes.push(GradCheckOutcome {
            name: format!("end_to_end_{}", head.name()),
            max_error: max_relative_error_floored(&analytic, &numeric, 1e-3),
            tolerance: 1e-5,
        });
    }

    Ok(outcomes)
}
