//! Differentiable loss functions with analytic gradients.
//!
//! All losses take probabilities (not logits) in channel-major layout
//! (`pred[c * n_voxels + i]` is channel `c` at voxel `i`) and return the
//! scalar value together with the gradient with respect to every prediction.
//! Reductions run in fixed voxel order so results are bit-reproducible.
//!
//! Gradients are validated against central finite differences in the test
//! suite; the smoothing and clamping constants below keep the formulas finite
//! for empty classes and saturated probabilities.

use crate::error::{Error, Result};

/// Default smoothing added to the Dice numerator and denominator.
pub const DICE_SMOOTHING: f64 = 1e-5;

/// Probabilities are clamped to `[CLAMP, 1 - CLAMP]` before any logarithm.
pub const CLAMP: f64 = 1e-7;

/// Scalar loss plus gradient with respect to the predictions, same layout.
#[derive(Debug, Clone)]
pub struct LossValue {
    pub value: f64,
    pub grad: Vec<f64>,
}

fn check_len(what: &str, len: usize, expected: usize) -> Result<()> {
    if len != expected {
        return Err(Error::DimMismatch(format!(
            "{what}: expected {expected} values, got {len}"
        )));
    }
    Ok(())
}

/// Multi-class Dice loss over per-class probability maps.
///
/// `predictions` and `targets` are `n_channels * n_voxels` channel-major;
/// targets are one-hot indicator values. Smoothing is added to both the
/// numerator and denominator of every per-class Dice term.
pub fn dice_loss(
    predictions: &[f64],
    targets: &[f64],
    n_channels: usize,
    n_voxels: usize,
    smoothing: f64,
) -> Result<LossValue> {
    if n_channels == 0 || n_voxels == 0 {
        return Err(Error::invalid("dice loss needs at least one channel and voxel"));
    }
    if smoothing <= 0.0 {
        return Err(Error::invalid("dice smoothing must be positive"));
    }
    check_len("dice predictions", predictions.len(), n_channels * n_voxels)?;
    check_len("dice targets", targets.len(), n_channels * n_voxels)?;

    let mut value = 0.0;
    let mut grad = vec![0.0; predictions.len()];
    let class_scale = 1.0 / n_channels as f64;
    for c in 0..n_channels {
        let pred = &predictions[c * n_voxels..(c + 1) * n_voxels];
        let target = &targets[c * n_voxels..(c + 1) * n_voxels];
        let mut overlap = 0.0;
        let mut pred_sum = 0.0;
        let mut target_sum = 0.0;
        for (p, g) in pred.iter().zip(target.iter()) {
            overlap += p * g;
            pred_sum += p;
            target_sum += g;
        }
        let numerator = 2.0 * overlap + smoothing;
        let denominator = pred_sum + target_sum + smoothing;
        value += class_scale * (1.0 - numerator / denominator);
        let grad_c = &mut grad[c * n_voxels..(c + 1) * n_voxels];
        for (slot, &g) in grad_c.iter_mut().zip(target.iter()) {
            // d/dp of -(2*overlap + s)/(sums + s)
            *slot = class_scale * (numerator - 2.0 * g * denominator) / (denominator * denominator);
        }
    }
    Ok(LossValue { value, grad })
}

/// Weighted, weight-normalized cross-entropy against ordinal target labels.
///
/// `predictions` is `n_channels * n_voxels` channel-major; the loss reads the
/// probability of the true class at each voxel. `class_weights`, when given,
/// holds one strictly positive weight per class; the total is normalized by
/// the summed weight of the targets, so uniform weight scaling cancels.
pub fn cross_entropy_loss(
    predictions: &[f64],
    target_labels: &[u16],
    n_channels: usize,
    class_weights: Option<&[f64]>,
) -> Result<LossValue> {
    let n_voxels = target_labels.len();
    if n_channels == 0 || n_voxels == 0 {
        return Err(Error::invalid(
            "cross-entropy needs at least one channel and voxel",
        ));
    }
    check_len("cross-entropy predictions", predictions.len(), n_channels * n_voxels)?;
    if let Some(weights) = class_weights {
        check_len("class weights", weights.len(), n_channels)?;
        if weights.iter().any(|&w| w <= 0.0) {
            return Err(Error::invalid("class weights must be strictly positive"));
        }
    }
    let weight_of = |class: usize| class_weights.map_or(1.0, |w| w[class]);

    let mut weight_total = 0.0;
    for &label in target_labels {
        if label as usize >= n_channels {
            return Err(Error::invalid(format!(
                "target label {label} out of range for {n_channels} channels"
            )));
        }
        weight_total += weight_of(label as usize);
    }

    let mut value = 0.0;
    let mut grad = vec![0.0; predictions.len()];
    for (i, &label) in target_labels.iter().enumerate() {
        let class = label as usize;
        let p = predictions[class * n_voxels + i].clamp(CLAMP, 1.0 - CLAMP);
        let w = weight_of(class);
        value -= w * p.ln();
        // Zero gradient outside the clamp range (flat region).
        if predictions[class * n_voxels + i] > CLAMP
            && predictions[class * n_voxels + i] < 1.0 - CLAMP
        {
            grad[class * n_voxels + i] = -w / (p * weight_total);
        }
    }
    Ok(LossValue {
        value: value / weight_total,
        grad,
    })
}

/// Per-bit weights for the weighted binary cross-entropy variant: one
/// `(weight_for_0, weight_for_1)` pair per output channel.
pub type BitWeights = Vec<(f64, f64)>;

/// Inverse-foreground-frequency weights computed from encoded training bits.
///
/// Channel `k` gets weight pair `(n / n_zero, n / n_one)`, clamped away from
/// division by zero when a channel is constant.
pub fn inverse_frequency_bit_weights(
    bit_targets: &[u8],
    n_channels: usize,
    n_voxels: usize,
) -> Result<BitWeights> {
    check_len("bit targets", bit_targets.len(), n_channels * n_voxels)?;
    let mut weights = Vec::with_capacity(n_channels);
    for c in 0..n_channels {
        let ones: usize = bit_targets[c * n_voxels..(c + 1) * n_voxels]
            .iter()
            .map(|&b| b as usize)
            .sum();
        let zeros = n_voxels - ones;
        let n = n_voxels as f64;
        weights.push((n / (zeros.max(1) as f64), n / (ones.max(1) as f64)));
    }
    Ok(weights)
}

/// Sum of two-class Dice and binary cross-entropy per output channel,
/// averaged over channels.
///
/// Each channel is supervised as its own binary segmentation task over the
/// foreground map `p` and background map `1 - p`. `per_bit_weights` switches
/// the CE term to its weighted variant.
pub fn binary_dice_ce_loss(
    bit_predictions: &[f64],
    bit_targets: &[u8],
    n_channels: usize,
    n_voxels: usize,
    per_bit_weights: Option<&BitWeights>,
    smoothing: f64,
) -> Result<LossValue> {
    if n_channels == 0 || n_voxels == 0 {
        return Err(Error::invalid(
            "binary dice+ce needs at least one channel and voxel",
        ));
    }
    if smoothing <= 0.0 {
        return Err(Error::invalid("dice smoothing must be positive"));
    }
    check_len("bit predictions", bit_predictions.len(), n_channels * n_voxels)?;
    check_len("bit targets", bit_targets.len(), n_channels * n_voxels)?;
    if let Some(weights) = per_bit_weights {
        check_len("per-bit weights", weights.len(), n_channels)?;
        if weights.iter().any(|&(w0, w1)| w0 <= 0.0 || w1 <= 0.0) {
            return Err(Error::invalid("per-bit weights must be strictly positive"));
        }
    }

    let mut value = 0.0;
    let mut grad = vec![0.0; bit_predictions.len()];
    let channel_scale = 1.0 / n_channels as f64;
    for c in 0..n_channels {
        let pred = &bit_predictions[c * n_voxels..(c + 1) * n_voxels];
        let target = &bit_targets[c * n_voxels..(c + 1) * n_voxels];
        let grad_c = &mut grad[c * n_voxels..(c + 1) * n_voxels];

        // Two-class Dice over {foreground p, background 1-p}.
        let mut overlap_fg = 0.0;
        let mut pred_sum = 0.0;
        let mut ones = 0.0;
        for (p, &g) in pred.iter().zip(target.iter()) {
            if g == 1 {
                overlap_fg += p;
                ones += 1.0;
            }
            pred_sum += p;
        }
        let n = n_voxels as f64;
        let overlap_bg = (n - ones) - (pred_sum - overlap_fg);
        let num_fg = 2.0 * overlap_fg + smoothing;
        let den_fg = pred_sum + ones + smoothing;
        let num_bg = 2.0 * overlap_bg + smoothing;
        let den_bg = (n - pred_sum) + (n - ones) + smoothing;
        let dice = 0.5 * ((1.0 - num_fg / den_fg) + (1.0 - num_bg / den_bg));

        // Binary CE with per-class weights on this channel.
        let (w0, w1) = per_bit_weights.map_or((1.0, 1.0), |w| w[c]);
        let weight_total = target
            .iter()
            .map(|&g| if g == 1 { w1 } else { w0 })
            .sum::<f64>();
        let mut ce = 0.0;
        for (i, (&p_raw, &g)) in pred.iter().zip(target.iter()).enumerate() {
            let p = p_raw.clamp(CLAMP, 1.0 - CLAMP);
            let in_range = p_raw > CLAMP && p_raw < 1.0 - CLAMP;
            // Dice gradient: foreground term uses dA=2g, dB=1; background term
            // mirrors it with dA=2(1-g), dB=-1.
            let g_f = g as f64;
            let d_fg = (num_fg - 2.0 * g_f * den_fg) / (den_fg * den_fg);
            let d_bg = (2.0 * (1.0 - g_f) * den_bg - num_bg) / (den_bg * den_bg);
            let mut slot = 0.5 * (d_fg + d_bg);
            if g == 1 {
                ce -= w1 * p.ln();
                if in_range {
                    slot += -w1 / (p * weight_total);
                }
            } else {
                ce -= w0 * (1.0 - p).ln();
                if in_range {
                    slot += w0 / ((1.0 - p) * weight_total);
                }
            }
            grad_c[i] = channel_scale * slot;
        }
        value += channel_scale * (dice + ce / weight_total);
    }
    Ok(LossValue { value, grad })
}
