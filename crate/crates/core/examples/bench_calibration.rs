// Scratch calibration for the standard benchmark config: trains the one-hot,
// binary, and tree heads on one candidate config and prints the directional
// findings (boundary fractions, tercile DSC differences, DSC ordering).

use std::time::Instant;

use bitseg::toytrain::synth::SynthConfig;
use bitseg::toytrain::*;

fn run_head(base: &RunConfig, head: HeadKind) -> (f64, f64, Vec<(u16, f64, f64)>) {
    let mut run = base.clone();
    run.model.head = head;
    let dataset = generate_synthetic(&run.dataset).unwrap();
    let codebook = run.resolve_codebook().unwrap();
    let started = Instant::now();
    let outcome = train(&run, &dataset, &codebook).unwrap();
    let report = evaluate(&outcome.trained, &dataset, Split::Validation, DecodeMode::Hard).unwrap();
    let per_class: Vec<(u16, f64, f64)> = report
        .size_rows
        .iter()
        .map(|r| (r.class, r.mean_voxels, r.mean_dsc))
        .collect();
    // Error census over the validation split: split misclassified pixels
    // into boundary-adjacent and interior.
    let mut errors = 0usize;
    let mut near_boundary = 0usize;
    for (pred, idx) in report.predictions.iter().zip(dataset.val_range()) {
        let truth = &dataset.labels[idx];
        let dims = truth.dims;
        for y in 0..dims.y {
            for x in 0..dims.x {
                let i = dims.index(x, y, 0);
                if pred.labels[i] == truth.labels[i] {
                    continue;
                }
                errors += 1;
                let here = truth.labels[i];
                let mut near = false;
                if x > 0 && truth.labels[dims.index(x - 1, y, 0)] != here {
                    near = true;
                }
                if x + 1 < dims.x && truth.labels[dims.index(x + 1, y, 0)] != here {
                    near = true;
                }
                if y > 0 && truth.labels[dims.index(x, y - 1, 0)] != here {
                    near = true;
                }
                if y + 1 < dims.y && truth.labels[dims.index(x, y + 1, 0)] != here {
                    near = true;
                }
                near_boundary += near as usize;
            }
        }
    }
    println!(
        "  {:>7}: mean_dsc {:.4} boundary {:.4} errors {errors} (interior {}) final_loss {:.4} [{:.1}s]",
        head.name(),
        report.dsc.cohort_mean,
        report.mean_boundary_error_fraction,
        errors - near_boundary,
        outcome.log.last().unwrap().loss,
        started.elapsed().as_secs_f64()
    );
    (
        report.dsc.cohort_mean,
        report.mean_boundary_error_fraction,
        per_class,
    )
}

fn tercile_differences(onehot: &[(u16, f64, f64)], binary: &[(u16, f64, f64)]) -> Vec<f64> {
    // Rows are sorted by mean volume ascending; pair by class id.
    let diffs: Vec<f64> = onehot
        .iter()
        .filter_map(|&(class, _, dsc_a)| {
            binary
                .iter()
                .find(|&&(c, _, _)| c == class)
                .map(|&(_, _, dsc_b)| dsc_a - dsc_b)
        })
        .collect();
    let n = diffs.len();
    let third = n / 3;
    let bounds = [0, third, 2 * third, n];
    (0..3)
        .map(|t| {
            let slice = &diffs[bounds[t]..bounds[t + 1]];
            slice.iter().sum::<f64>() / slice.len() as f64
        })
        .collect()
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let sigma: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0.45);
    let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(40);
    let lr: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0.8);
    let n_classes: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(24);
    let hidden: usize = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(24);
    let blur: usize = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(1);
    let side: usize = args.get(7).and_then(|s| s.parse().ok()).unwrap_or(48);
    let n_train: usize = args.get(8).and_then(|s| s.parse().ok()).unwrap_or(16);

    let base = RunConfig {
        format_version: 1,
        dataset: SynthConfig {
            n_classes,
            width: side,
            height: side,
            n_train,
            n_val: 8,
            noise_sigma: sigma,
            blur_passes: blur,
            seed: 11,
        },
        model: ModelSettings {
            head: HeadKind::OneHot,
            hidden_width: hidden,
            init_seed: 3,
        },
        codebook: CodebookSettings { seed: 5, path: None },
        loss: LossSettings {
            weighted_bits: false,
            dice_smoothing: 1e-5,
        },
        optimizer: OptimizerSettings {
            learning_rate: lr,
            epochs,
            batch_size: 4,
            shuffle_seed: 17,
        },
    };
    println!(
        "config: sigma {sigma} epochs {epochs} lr {lr} classes {n_classes} hidden {hidden} blur {blur} side {side} n_train {n_train}"
    );
    let total = Instant::now();
    let (dsc_onehot, boundary_onehot, rows_onehot) = run_head(&base, HeadKind::OneHot);
    let (dsc_binary, boundary_binary, rows_binary) = run_head(&base, HeadKind::Binary);
    let (dsc_tree, _, _) = run_head(&base, HeadKind::Tree);

    let terciles = tercile_differences(&rows_onehot, &rows_binary);
    println!("  tercile mean DSC differences (onehot - binary), small->large:");
    println!(
        "    smallest {:.4}  middle {:.4}  largest {:.4}",
        terciles[0], terciles[1], terciles[2]
    );
    let a = boundary_binary >= boundary_onehot;
    let b = terciles[0] >= terciles[1] && terciles[0] >= terciles[2];
    let c = dsc_onehot >= dsc_binary && dsc_tree < dsc_binary && dsc_tree < dsc_onehot;
    println!(
        "  (a) boundary binary>=onehot: {a}   (b) smallest tercile largest diff: {b}   (c) ordering onehot>=binary>tree: {c}"
    );
    println!("  total {:.1}s", total.elapsed().as_secs_f64());
}
