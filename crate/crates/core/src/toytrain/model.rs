//! A small fixed-architecture differentiable network with pluggable output
//! heads.
//!
//! Trunk: a pointwise linear layer followed by a 3x3 convolution, both with
//! tanh activations. Heads map the per-pixel feature vector (with an appended
//! constant 1 for the bias) to output probabilities:
//!
//! - one-hot: one channel per class, softmax
//! - binary / hamming: one sigmoid channel per encoded bit
//! - tree: one sigmoid channel per data bit, where channel `k` selects one of
//!   `2^k` weight vectors indexed by the preceding bits — ground-truth bits
//!   under teacher forcing, thresholded predictions sequentially at inference
//!
//! Backpropagation is hand-derived and validated against central finite
//! differences.

use rand::Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::toytrain::synth::ImageFeatures;

/// Output head variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    OneHot,
    Binary,
    Hamming,
    Tree,
}

impl HeadKind {
    pub fn name(&self) -> &'static str {
        match self {
            HeadKind::OneHot => "onehot",
            HeadKind::Binary => "binary",
            HeadKind::Hamming => "hamming",
            HeadKind::Tree => "tree",
        }
    }
}

impl std::str::FromStr for HeadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "onehot" => Ok(HeadKind::OneHot),
            "binary" => Ok(HeadKind::Binary),
            "hamming" => Ok(HeadKind::Hamming),
            "tree" => Ok(HeadKind::Tree),
            other => Err(Error::invalid(format!(
                "unknown head '{other}' (expected onehot, binary, hamming, or tree)"
            ))),
        }
    }
}

/// Architecture hyperparameters; the parameter count is a pure function of
/// these.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub in_channels: usize,
    pub hidden_width: usize,
    pub n_classes: usize,
    pub out_channels: usize,
    pub head: HeadKind,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.hidden_width == 0 || self.out_channels == 0 {
            return Err(Error::invalid("model dimensions must be positive"));
        }
        if self.n_classes < 2 {
            return Err(Error::invalid("model needs at least 2 classes"));
        }
        if self.head == HeadKind::Tree && self.out_channels > 16 {
            return Err(Error::invalid(
                "tree head is limited to 16 output bits (weight banks grow as 2^k)",
            ));
        }
        Ok(())
    }

    /// Feature dimension entering the head (the hidden width).
    pub fn feature_dim(&self) -> usize {
        self.hidden_width
    }
}

/// Offsets of each parameter block inside the flat parameter vector.
#[derive(Debug, Clone, Copy)]
struct ParamLayout {
    w1: usize,
    b1: usize,
    k2: usize,
    b2: usize,
    head: usize,
    total: usize,
}

impl ParamLayout {
    fn new(config: &ModelConfig) -> Self {
        let h = config.hidden_width;
        let w1 = 0;
        let b1 = w1 + h * config.in_channels;
        let k2 = b1 + h;
        let b2 = k2 + h * h * 9;
        let head = b2 + h;
        let total = head + head_param_count(config);
        ParamLayout {
            w1,
            b1,
            k2,
            b2,
            head,
            total,
        }
    }
}

fn head_param_count(config: &ModelConfig) -> usize {
    let stride = config.feature_dim() + 1;
    match config.head {
        HeadKind::Tree => ((1usize << config.out_channels) - 1) * stride,
        _ => config.out_channels * stride,
    }
}

/// Weight-bank sizes of the tree head: `(1, 2, 4, ..., 2^(k-1))`.
pub fn tree_bank_sizes(n_bits: usize) -> Vec<usize> {
    (0..n_bits).map(|k| 1usize << k).collect()
}

/// Offset of weight vector `index` in channel `k`'s bank, relative to the
/// head block, in units of f64.
fn tree_vector_offset(k: usize, index: usize, stride: usize) -> usize {
    (((1usize << k) - 1) + index) * stride
}

/// The network: configuration plus a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    pub config: ModelConfig,
    pub params: Vec<f64>,
}

/// Activations cached by a forward pass for the matching backward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// Head probabilities, `out_channels * n_px` channel-major.
    pub probs: Vec<f64>,
    a1: Vec<f64>,
    a2: Vec<f64>,
    /// Tree head only: selected bank index per channel and pixel.
    tree_selected: Vec<u32>,
    width: usize,
    height: usize,
}

impl ForwardPass {
    /// Bank index used for channel `k` at pixel `p` (tree head only).
    pub fn tree_selected(&self, k: usize, p: usize) -> u32 {
        self.tree_selected[k * (self.width * self.height) + p]
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl ToyModel {
    /// Seeded initialization: uniform weights scaled by fan-in, zero biases.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let layout = ParamLayout::new(&config);
        let mut params = vec![0.0; layout.total];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |range: std::ops::Range<usize>, scale: f64, params: &mut Vec<f64>| {
            for slot in &mut params[range] {
                *slot = rng.random_range(-scale..scale);
            }
        };
        let h = config.hidden_width;
        let w1_scale = 1.0 / (config.in_channels as f64).sqrt();
        fill(layout.w1..layout.b1, w1_scale, &mut params);
        let k2_scale = 1.0 / (9.0 * h as f64).sqrt();
        fill(layout.k2..layout.b2, k2_scale, &mut params);
        let head_scale = 1.0 / ((config.feature_dim() + 1) as f64).sqrt();
        fill(layout.head..layout.total, head_scale, &mut params);
        Ok(ToyModel { config, params })
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    fn layout(&self) -> ParamLayout {
        ParamLayout::new(&self.config)
    }

    fn check_image(&self, image: &ImageFeatures) -> Result<()> {
        if image.n_channels != self.config.in_channels {
            return Err(Error::ChannelMismatch {
                expected: self.config.in_channels,
                actual: image.n_channels,
            });
        }
        if image.n_pixels() == 0 {
            return Err(Error::invalid("image has no pixels"));
        }
        Ok(())
    }

    /// Training-mode forward pass. The tree head requires ground-truth
    /// teacher bits (`out_channels * n_px`, channel-major); other heads
    /// ignore `teacher_bits`.
    pub fn forward_train(
        &self,
        image: &ImageFeatures,
        teacher_bits: Option<&[u8]>,
    ) -> Result<ForwardPass> {
        self.check_image(image)?;
        if self.config.head == HeadKind::Tree {
            let teacher = teacher_bits.ok_or_else(|| {
                Error::invalid("tree head requires teacher bits in training mode")
            })?;
            let expected = self.config.out_channels * image.n_pixels();
            if teacher.len() != expected {
                return Err(Error::DimMismatch(format!(
                    "teacher bits: expected {expected} entries, got {}",
                    teacher.len()
                )));
            }
            self.run_forward(image, Some(teacher))
        } else {
            self.run_forward(image, None)
        }
    }

    /// Inference-mode forward pass; the tree head thresholds each channel at
    /// 0.5 and conditions the next on the result.
    pub fn forward_infer(&self, image: &ImageFeatures) -> Result<ForwardPass> {
        self.check_image(image)?;
        self.run_forward(image, None)
    }

    fn run_forward(&self, image: &ImageFeatures, teacher: Option<&[u8]>) -> Result<ForwardPass> {
        let config = &self.config;
        let layout = self.layout();
        let (w, h_px) = (image.width, image.height);
        let n_px = w * h_px;
        let hidden = config.hidden_width;
        let params = &self.params;

        // Pointwise layer + tanh.
        let mut a1 = vec![0.0f64; hidden * n_px];
        for hu in 0..hidden {
            let row = &params[layout.w1 + hu * config.in_channels..][..config.in_channels];
            let bias = params[layout.b1 + hu];
            let out = &mut a1[hu * n_px..(hu + 1) * n_px];
            out.fill(bias);
            for (c, &weight) in row.iter().enumerate() {
                let input = image.channel(c);
                for (slot, &x) in out.iter_mut().zip(input.iter()) {
                    *slot += weight * x;
                }
            }
            for slot in out.iter_mut() {
                *slot = slot.tanh();
            }
        }

        // 3x3 convolution + tanh, zero padding.
        let mut a2 = vec![0.0f64; hidden * n_px];
        for f in 0..hidden {
            let out = &mut a2[f * n_px..(f + 1) * n_px];
            out.fill(params[layout.b2 + f]);
            for g in 0..hidden {
                let kernel = &params[layout.k2 + (f * hidden + g) * 9..][..9];
                let input = &a1[g * n_px..(g + 1) * n_px];
                for (j, &kv) in kernel.iter().enumerate() {
                    let (dy, dx) = ((j / 3) as i64 - 1, (j % 3) as i64 - 1);
                    for y in 0..h_px as i64 {
                        let ny = y + dy;
                        if ny < 0 || ny >= h_px as i64 {
                            continue;
                        }
                        for x in 0..w as i64 {
                            let nx = x + dx;
                            if nx < 0 || nx >= w as i64 {
                                continue;
                            }
                            out[(y as usize) * w + x as usize] +=
                                kv * input[(ny as usize) * w + nx as usize];
                        }
                    }
                }
            }
            for slot in out.iter_mut() {
                *slot = slot.tanh();
            }
        }

        // Head.
        let n_out = config.out_channels;
        let feat_dim = config.feature_dim();
        let head = &params[layout.head..];
        let stride = feat_dim + 1;
        let mut probs = vec![0.0f64; n_out * n_px];
        let mut tree_selected = Vec::new();

        let dense_logit = |vector: &[f64], p: usize| -> f64 {
            let mut z = vector[feat_dim]; // bias via appended constant 1
            for d in 0..feat_dim {
                z += vector[d] * a2[d * n_px + p];
            }
            z
        };

        match config.head {
            HeadKind::OneHot => {
                let mut logits = vec![0.0f64; n_out];
                for p in 0..n_px {
                    for (o, slot) in logits.iter_mut().enumerate() {
                        *slot = dense_logit(&head[o * stride..][..stride], p);
                    }
                    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let mut total = 0.0;
                    for &z in logits.iter() {
                        total += (z - max).exp();
                    }
                    for (o, &z) in logits.iter().enumerate() {
                        probs[o * n_px + p] = (z - max).exp() / total;
                    }
                }
            }
            HeadKind::Binary | HeadKind::Hamming => {
                for o in 0..n_out {
                    let vector = &head[o * stride..][..stride];
                    let out = &mut probs[o * n_px..(o + 1) * n_px];
                    for (p, slot) in out.iter_mut().enumerate() {
                        *slot = sigmoid(dense_logit(vector, p));
                    }
                }
            }
            HeadKind::Tree => {
                tree_selected = vec![0u32; n_out * n_px];
                // Prefix index per pixel, built channel by channel.
                let mut prefix = vec![0u32; n_px];
                for k in 0..n_out {
                    for p in 0..n_px {
                        let index = prefix[p] as usize;
                        tree_selected[k * n_px + p] = prefix[p];
                        let vector = &head[tree_vector_offset(k, index, stride)..][..stride];
                        probs[k * n_px + p] = sigmoid(dense_logit(vector, p));
                    }
                    // Condition the next channel on teacher bits when given,
                    // otherwise on the thresholded prediction.
                    for p in 0..n_px {
                        let bit = match teacher {
                            Some(bits) => bits[k * n_px + p] as u32,
                            None => u32::from(probs[k * n_px + p] >= 0.5),
                        };
                        prefix[p] |= bit << k;
                    }
                }
            }
        }

        Ok(ForwardPass {
            probs,
            a1,
            a2,
            tree_selected,
            width: w,
            height: h_px,
        })
    }

    /// Gradient of a scalar loss with respect to every parameter, given the
    /// loss gradient with respect to the head probabilities.
    ///
    /// For the tree head this follows the teacher-forced selection recorded
    /// in the pass: only the selected weight vectors receive gradient.
    pub fn backward(
        &self,
        image: &ImageFeatures,
        pass: &ForwardPass,
        dprobs: &[f64],
    ) -> Result<Vec<f64>> {
        let config = &self.config;
        let layout = self.layout();
        let (w, h_px) = (pass.width, pass.height);
        let n_px = w * h_px;
        let n_out = config.out_channels;
        if dprobs.len() != n_out * n_px {
            return Err(Error::DimMismatch(format!(
                "probability gradient: expected {} values, got {}",
                n_out * n_px,
                dprobs.len()
            )));
        }
        let hidden = config.hidden_width;
        let feat_dim = config.feature_dim();
        let stride = feat_dim + 1;
        let params = &self.params;
        let head = &params[layout.head..];
        let mut grad = vec![0.0f64; params.len()];

        // Head probabilities -> logits.
        let mut dlogits = vec![0.0f64; n_out * n_px];
        match config.head {
            HeadKind::OneHot => {
                for p in 0..n_px {
                    let mut weighted = 0.0;
                    for o in 0..n_out {
                        weighted += dprobs[o * n_px + p] * pass.probs[o * n_px + p];
                    }
                    for o in 0..n_out {
                        let prob = pass.probs[o * n_px + p];
                        dlogits[o * n_px + p] = prob * (dprobs[o * n_px + p] - weighted);
                    }
                }
            }
            _ => {
                for (slot, (&dp, &prob)) in dlogits
                    .iter_mut()
                    .zip(dprobs.iter().zip(pass.probs.iter()))
                {
                    *slot = dp * prob * (1.0 - prob);
                }
            }
        }

        // Logits -> head weights and features.
        let mut dfeat = vec![0.0f64; hidden * n_px];
        {
            let ghead = &mut grad[layout.head..];
            for k in 0..n_out {
                for p in 0..n_px {
                    let dz = dlogits[k * n_px + p];
                    if dz == 0.0 {
                        continue;
                    }
                    let offset = match config.head {
                        HeadKind::Tree => {
                            tree_vector_offset(k, pass.tree_selected(k, p) as usize, stride)
                        }
                        _ => k * stride,
                    };
                    let vector = &head[offset..][..stride];
                    let gvec = &mut ghead[offset..][..stride];
                    for d in 0..feat_dim {
                        gvec[d] += dz * pass.a2[d * n_px + p];
                        dfeat[d * n_px + p] += dz * vector[d];
                    }
                    gvec[feat_dim] += dz; // bias slot
                }
            }
        }

        // tanh of the conv layer.
        let mut dz2 = dfeat;
        for (slot, &a) in dz2.iter_mut().zip(pass.a2.iter()) {
            *slot *= 1.0 - a * a;
        }

        // Convolution backward.
        let mut da1 = vec![0.0f64; hidden * n_px];
        for f in 0..hidden {
            let dz2_f = &dz2[f * n_px..(f + 1) * n_px];
            grad[layout.b2 + f] += dz2_f.iter().sum::<f64>();
            for g in 0..hidden {
                let kernel = &params[layout.k2 + (f * hidden + g) * 9..][..9];
                let gkernel_base = layout.k2 + (f * hidden + g) * 9;
                let a1_g = &pass.a1[g * n_px..(g + 1) * n_px];
                let da1_g = &mut da1[g * n_px..(g + 1) * n_px];
                for j in 0..9 {
                    let (dy, dx) = ((j / 3) as i64 - 1, (j % 3) as i64 - 1);
                    let mut gk = 0.0;
                    for y in 0..h_px as i64 {
                        let ny = y + dy;
                        if ny < 0 || ny >= h_px as i64 {
                            continue;
                        }
                        for x in 0..w as i64 {
                            let nx = x + dx;
                            if nx < 0 || nx >= w as i64 {
                                continue;
                            }
                            let dz = dz2_f[(y as usize) * w + x as usize];
                            let src = (ny as usize) * w + nx as usize;
                            gk += dz * a1_g[src];
                            da1_g[src] += dz * kernel[j];
                        }
                    }
                    grad[gkernel_base + j] += gk;
                }
            }
        }

        // tanh of the pointwise layer.
        let mut dz1 = da1;
        for (slot, &a) in dz1.iter_mut().zip(pass.a1.iter()) {
            *slot *= 1.0 - a * a;
        }

        // Pointwise backward.
        for hu in 0..hidden {
            let dz1_h = &dz1[hu * n_px..(hu + 1) * n_px];
            grad[layout.b1 + hu] += dz1_h.iter().sum::<f64>();
            for c in 0..config.in_channels {
                let input = image.channel(c);
                let mut gw = 0.0;
                for (dz, &x) in dz1_h.iter().zip(input.iter()) {
                    gw += dz * x;
                }
                grad[layout.w1 + hu * config.in_channels + c] += gw;
            }
        }

        Ok(grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toytrain::synth::{generate_synthetic, SynthConfig};

    fn tiny_image(seed: u64) -> ImageFeatures {
        let config = SynthConfig {
            n_classes: 5,
            width: 4,
            height: 4,
            n_train: 1,
            n_val: 0,
            noise_sigma: 0.3,
            blur_passes: 1,
            seed,
        };
        generate_synthetic(&config).unwrap().images.remove(0)
    }

    fn model(head: HeadKind, out_channels: usize) -> ToyModel {
        ToyModel::new(
            ModelConfig {
                in_channels: 5,
                hidden_width: 4,
                n_classes: 5,
                out_channels,
                head,
            },
            9,
        )
        .unwrap()
    }

    #[test]
    fn forward_is_deterministic() {
        let image = tiny_image(1);
        let m = model(HeadKind::Binary, 3);
        let a = m.forward_infer(&image).unwrap();
        let b = m.forward_infer(&image).unwrap();
        assert_eq!(a.probs, b.probs);
    }

    #[test]
    fn one_hot_probabilities_sum_to_one() {
        let image = tiny_image(2);
        let m = model(HeadKind::OneHot, 5);
        let pass = m.forward_infer(&image).unwrap();
        let n_px = image.n_pixels();
        for p in 0..n_px {
            let total: f64 = (0..5).map(|o| pass.probs[o * n_px + p]).sum();
            assert!((total - 1.0).abs() < 1e-6, "pixel {p}: {total}");
        }
    }

    #[test]
    fn tree_banks_follow_powers_of_two() {
        assert_eq!(tree_bank_sizes(3), vec![1, 2, 4]);
        let m = model(HeadKind::Tree, 3);
        let dense = model(HeadKind::Binary, 3);
        let stride = m.config.feature_dim() + 1;
        // 1 + 2 + 4 = 7 vectors versus 3 for the dense head.
        assert_eq!(
            m.n_params() - dense.n_params(),
            (7 - 3) * stride
        );
    }

    #[test]
    fn tree_channel_two_selects_by_first_two_bits() {
        let image = tiny_image(3);
        let m = model(HeadKind::Tree, 3);
        let n_px = image.n_pixels();
        let mut teacher = vec![0u8; 3 * n_px];
        for p in 0..n_px {
            teacher[p] = (p % 2) as u8; // b0
            teacher[n_px + p] = ((p / 2) % 2) as u8; // b1
        }
        let pass = m.forward_train(&image, Some(&teacher)).unwrap();
        for p in 0..n_px {
            assert_eq!(pass.tree_selected(0, p), 0);
            assert_eq!(pass.tree_selected(1, p), teacher[p] as u32);
            let expected = teacher[p] as u32 | (teacher[n_px + p] as u32) << 1;
            assert_eq!(pass.tree_selected(2, p), expected);
        }
    }

    #[test]
    fn tree_training_requires_teacher_bits() {
        let image = tiny_image(4);
        let m = model(HeadKind::Tree, 3);
        assert!(m.forward_train(&image, None).is_err());
        assert!(m.forward_infer(&image).is_ok());
    }

    #[test]
    fn image_channel_mismatch_is_rejected() {
        let image = tiny_image(5);
        let m = ToyModel::new(
            ModelConfig {
                in_channels: 7,
                hidden_width: 4,
                n_classes: 5,
                out_channels: 3,
                head: HeadKind::Binary,
            },
            1,
        )
        .unwrap();
        assert!(matches!(
            m.forward_infer(&image),
            Err(Error::ChannelMismatch { .. })
        ));
    }

    // Finite-difference check of the full backward pass through a scalar
    // objective; per-head end-to-end checks live in the train module.
    #[test]
    fn backward_matches_finite_differences_on_sum_of_squares() {
        use crate::gradcheck::{central_difference, max_relative_error_floored};
        let image = tiny_image(6);
        for (head, out) in [
            (HeadKind::OneHot, 5),
            (HeadKind::Binary, 3),
            (HeadKind::Hamming, 7),
            (HeadKind::Tree, 3),
        ] {
            let m = model(head, out);
            let n_px = image.n_pixels();
            let teacher: Vec<u8> = (0..out * n_px).map(|i| (i % 2) as u8).collect();
            let teacher_opt = (head == HeadKind::Tree).then_some(teacher.as_slice());

            // Objective: 0.5 * sum p^2, so dL/dp = p.
            let pass = m.forward_train(&image, teacher_opt).unwrap();
            let analytic = m.backward(&image, &pass, &pass.probs).unwrap();

            let numeric = central_difference(&m.params, 1e-6, |params| {
                let probe = ToyModel {
                    config: m.config.clone(),
                    params: params.to_vec(),
                };
                let pass = probe.forward_train(&image, teacher_opt).unwrap();
                0.5 * pass.probs.iter().map(|p| p * p).sum::<f64>()
            });
            let err = max_relative_error_floored(&analytic, &numeric, 1e-3);
            assert!(err < 1e-5, "{}: max relative error {err}", head.name());
        }
    }
}
