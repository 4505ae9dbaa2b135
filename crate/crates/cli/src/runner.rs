//! Command execution: each resolved [`CommandSpec`] runs to completion,
//! writes its outputs, and records a manifest alongside them.

use std::path::{Path, PathBuf};
use std::time::Instant;

use bitseg::assign::{assignment_cost, build_adjacency, optimize_assignment};
use bitseg::codebook::{Codebook, Scheme};
use bitseg::decode::{corrupt_bits, encode_labels, hard_decode, soft_decode};
use bitseg::error::{Error, Result};
use bitseg::metrics::{report_to_csv, size_table_to_csv, summary_to_csv};
use bitseg::toytrain::{
    evaluate, generate_synthetic, gradcheck_suite, log_to_csv, train, DecodeMode, EvalReport,
    RunConfig, Split, TrainedModel,
};
use bitseg::volume::{BitVolume, LabelVolume, ProbVolume};

use crate::manifest::{manifest_path_for_dir, manifest_path_for_file, Manifest};
use crate::spec::CommandSpec;

pub struct RunOutput {
    pub messages: Vec<String>,
    pub exit_code: i32,
}

impl RunOutput {
    fn ok(messages: Vec<String>) -> Self {
        RunOutput {
            messages,
            exit_code: 0,
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// FNV-1a over the little-endian words; a short stable digest for summaries.
fn assignment_digest(words: &[u32]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for word in words {
        for byte in word.to_le_bytes() {
            hash ^= byte as u64;
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    hash
}

pub fn execute(spec: CommandSpec) -> Result<RunOutput> {
    let started = Instant::now();
    let mut manifest = Manifest::new(spec.clone());
    match spec {
        CommandSpec::CodebookBuild {
            classes,
            scheme,
            seed,
            background,
            out,
        } => {
            let scheme: Scheme = scheme.parse()?;
            let book = Codebook::random(classes, scheme, seed)?
                .with_background_class(background)?;
            book.save(&out)?;
            manifest.outputs = vec![out.clone()];
            manifest.duration_ms = started.elapsed().as_millis() as u64;
            manifest.save(&manifest_path_for_file(&out))?;
            Ok(RunOutput::ok(vec![format!(
                "wrote {} ({} classes, {} data bits, {} output channels)",
                out.display(),
                book.n_classes(),
                book.n_data_bits(),
                book.n_encoded_bits()
            )]))
        }

        CommandSpec::CodebookInspect { input } => {
            let book = Codebook::load(&input)?;
            let messages = vec![
                format!("n_classes: {}", book.n_classes()),
                format!("n_data_bits: {}", book.n_data_bits()),
                format!("scheme: {}", book.scheme().name()),
                format!("n_encoded_bits: {}", book.n_encoded_bits()),
                format!("background_class: {}", book.background_class()),
                format!(
                    "memory_reduction_factor: {:.4} ({} / {})",
                    book.memory_reduction_factor(),
                    book.n_classes(),
                    book.n_encoded_bits()
                ),
                format!(
                    "assignment_digest: {:016x}",
                    assignment_digest(book.assignment())
                ),
            ];
            Ok(RunOutput::ok(messages))
        }

        CommandSpec::Encode {
            labels,
            codebook,
            out,
        } => {
            let labels_vol = LabelVolume::load(&labels)?;
            let book = Codebook::load(&codebook)?;
            let bits = encode_labels(&labels_vol, &book)?;
            bits.to_probs().save(&out)?;
            manifest.outputs = vec![out.clone()];
            manifest.duration_ms = started.elapsed().as_millis() as u64;
            manifest.save(&manifest_path_for_file(&out))?;
            Ok(RunOutput::ok(vec![format!(
                "encoded {} voxels into {} channels at {}",
                labels_vol.dims.n_voxels(),
                bits.n_channels,
                out.display()
            )]))
        }

        CommandSpec::Decode {
            probs,
            codebook,
            mode,
            out,
        } => {
            let probs_vol = ProbVolume::load(&probs)?;
            let book = Codebook::load(&codebook)?;
            let mode: DecodeMode = mode.parse()?;
            let labels = match mode {
                DecodeMode::Hard => hard_decode(&probs_vol, &book)?,
                DecodeMode::Soft => soft_decode(&probs_vol, &book)?,
            };
            labels.save(&out)?;
            manifest.outputs = vec![out.clone()];
            manifest.duration_ms = started.elapsed().as_millis() as u64;
            manifest.save(&manifest_path_for_file(&out))?;
            Ok(RunOutput::ok(vec![format!(
                "decoded {} voxels to {}",
                labels.dims.n_voxels(),
                out.display()
            )]))
        }

        CommandSpec::Corrupt {
            bits,
            flip_prob,
            seed,
            out,
        } => {
            let probs_vol = ProbVolume::load(&bits)?;
            let bit_vol = BitVolume::from_crisp_probs(&probs_vol)?;
            let (corrupted, flips) = corrupt_bits(&bit_vol, flip_prob, seed)?;
            corrupted.to_probs().save(&out)?;
            manifest.outputs = vec![out.clone()];
            manifest.extra.insert("flip_count".into(), flips.into());
            manifest
                .extra
                .insert("total_bits".into(), (bit_vol.bits.len() as u64).into());
            manifest.duration_ms = started.elapsed().as_millis() as u64;
            manifest.save(&manifest_path_for_file(&out))?;
            Ok(RunOutput::ok(vec![format!(
                "flipped {flips} of {} bits into {}",
                bit_vol.bits.len(),
                out.display()
            )]))
        }

        CommandSpec::Assign {
            labels_dir,
            scheme,
            seed,
            iters,
            report_seeds,
            out,
            report,
        } => {
            let scheme: Scheme = scheme.parse()?;
            let volumes = load_label_dir(&labels_dir)?;
            let n_classes = volumes
                .iter()
                .flat_map(|v| v.labels.iter())
                .map(|&l| l as usize + 1)
                .max()
                .unwrap_or(0)
                .max(2);
            let graph = build_adjacency(&volumes, n_classes)?;
            let result = optimize_assignment(&graph, scheme, seed, iters)?;
            result.codebook.save(&out)?;

            let mut csv = String::from("seed,optimized_cost,random_cost\n");
            let mut optimized_sum = 0.0;
            let mut random_sum = 0.0;
            for s in seed..seed + report_seeds {
                let optimized = optimize_assignment(&graph, scheme, s, iters)?.cost;
                let random =
                    assignment_cost(&graph, &Codebook::random(n_classes, scheme, s)?)?;
                csv.push_str(&format!("{s},{optimized},{random}\n"));
                optimized_sum += optimized as f64;
                random_sum += random as f64;
            }
            let optimized_mean = optimized_sum / report_seeds as f64;
            let random_mean = random_sum / report_seeds as f64;
            csv.push_str(&format!("mean,{optimized_mean},{random_mean}\n"));
            write_text(&report, &csv)?;

            manifest.outputs = vec![out.clone(), report.clone()];
            manifest.extra.insert("n_classes".into(), (n_classes as u64).into());
            manifest.extra.insert("cost".into(), result.cost.into());
            manifest
                .extra
                .insert("iterations".into(), (result.iterations as u64).into());
            manifest.duration_ms = started.elapsed().as_millis() as u64;
            manifest.save(&manifest_path_for_file(&out))?;
            Ok(RunOutput::ok(vec![
                format!(
                    "optimized assignment over {} classes / {} edges: cost {}",
                    n_classes,
                    graph.n_edges(),
                    result.cost
                ),
                format!(
                    "report ({report_seeds} seeds): optimized mean {optimized_mean:.1}, random mean {random_mean:.1}"
                ),
                format!("wrote {} and {}", out.display(), report.display()),
            ]))
        }

        CommandSpec::Train { config, out_dir } => {
            let run = RunConfig::load(&config)?;
            ensure_dir(&out_dir)?;
            let dataset = generate_synthetic(&run.dataset)?;
            let codebook = run.resolve_codebook()?;
            let outcome = train(&run, &dataset, &codebook)?;
            let model_path = out_dir.join("model.json");
            outcome.trained.save(&model_path)?;
            let log_path = out_dir.join("metrics.csv");
            write_text(&log_path, &log_to_csv(&outcome.log, run.dataset.n_classes))?;
            let last = outcome.log.last().expect("at least one epoch");
            manifest.outputs = vec![model_path.clone(), log_path.clone()];
            manifest.extra.insert("final_loss".into(), last.loss.into());
            manifest
                .extra
                .insert("final_mean_dsc".into(), last.mean_dsc.into());
            manifest.duration_ms = started.elapsed().as_millis() as u64;
            manifest.save(&manifest_path_for_dir(&out_dir))?;
            Ok(RunOutput::ok(vec![format!(
                "trained {} head for {} epochs: loss {:.4}, mean DSC {:.4} -> {}",
                run.model.head.name(),
                run.optimizer.epochs,
                last.loss,
                last.mean_dsc,
                model_path.display()
            )]))
        }

        CommandSpec::Eval {
            config,
            model,
            compare,
            mode,
            split,
            out_dir,
        } => {
            let run = RunConfig::load(&config)?;
            let mode: DecodeMode = mode.parse()?;
            let split = match split.as_str() {
                "train" => Split::Train,
                "val" => Split::Validation,
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "unknown split '{other}' (expected 'train' or 'val')"
                    )))
                }
            };
            ensure_dir(&out_dir)?;
            let dataset = generate_synthetic(&run.dataset)?;
            let trained = TrainedModel::load(&model)?;
            let report = evaluate(&trained, &dataset, split, mode)?;
            write_eval_reports(&out_dir, "", &report)?;
            let mut messages = vec![format!(
                "mean DSC {:.4} (std {:.4}), boundary error fraction {:.4}",
                report.dsc.cohort_mean,
                report.dsc.cohort_std,
                report.mean_boundary_error_fraction
            )];
            manifest.outputs = vec![
                out_dir.join("dsc_report.csv"),
                out_dir.join("summary.csv"),
                out_dir.join("boundary.csv"),
                out_dir.join("size_table.csv"),
            ];
            manifest
                .extra
                .insert("cohort_mean".into(), report.dsc.cohort_mean.into());
            manifest.extra.insert(
                "boundary_error_fraction".into(),
                report.mean_boundary_error_fraction.into(),
            );

            if let Some(other_path) = compare {
                let other = TrainedModel::load(&other_path)?;
                let other_report = evaluate(&other, &dataset, split, mode)?;
                write_eval_reports(&out_dir, "compare_", &other_report)?;
                let diff_path = out_dir.join("dsc_difference.csv");
                write_text(&diff_path, &difference_csv(&report, &other_report))?;
                manifest.outputs.push(diff_path);
                messages.push(format!(
                    "compared against {}: mean DSC {:.4}, boundary {:.4}",
                    other_path.display(),
                    other_report.dsc.cohort_mean,
                    other_report.mean_boundary_error_fraction
                ));
            }
            manifest.duration_ms = started.elapsed().as_millis() as u64;
            manifest.save(&manifest_path_for_dir(&out_dir))?;
            messages.push(format!("reports in {}", out_dir.display()));
            Ok(RunOutput::ok(messages))
        }

        CommandSpec::Gradcheck { seed } => {
            let outcomes = gradcheck_suite(seed)?;
            let mut messages = Vec::new();
            let mut failed = false;
            for outcome in &outcomes {
                let status = if outcome.passed() { "PASS" } else { "FAIL" };
                failed |= !outcome.passed();
                messages.push(format!(
                    "[{status}] {:<26} max relative error {:.3e} (tolerance {:.0e})",
                    outcome.name, outcome.max_error, outcome.tolerance
                ));
            }
            Ok(RunOutput {
                messages,
                exit_code: if failed { 2 } else { 0 },
            })
        }
    }
}

/// `<prefix>dsc_report.csv`, `<prefix>summary.csv`, `<prefix>boundary.csv`,
/// `<prefix>size_table.csv` under `out_dir`.
fn write_eval_reports(out_dir: &Path, prefix: &str, report: &EvalReport) -> Result<()> {
    write_text(
        &out_dir.join(format!("{prefix}dsc_report.csv")),
        &report_to_csv(&report.dsc),
    )?;
    write_text(
        &out_dir.join(format!("{prefix}summary.csv")),
        &summary_to_csv(&report.dsc),
    )?;
    let mut boundary = String::from("case_id,boundary_error_fraction\n");
    for (case, value) in report.per_case_boundary.iter().enumerate() {
        boundary.push_str(&format!("{case},{value}\n"));
    }
    boundary.push_str(&format!("mean,{}\n", report.mean_boundary_error_fraction));
    write_text(&out_dir.join(format!("{prefix}boundary.csv")), &boundary)?;
    write_text(
        &out_dir.join(format!("{prefix}size_table.csv")),
        &size_table_to_csv(&report.size_rows),
    )?;
    Ok(())
}

/// Per-class DSC difference (primary minus compared), sorted by mean truth
/// volume ascending.
fn difference_csv(primary: &EvalReport, compared: &EvalReport) -> String {
    let mut out = String::from("class_id,mean_voxels,dsc_primary,dsc_compared,dsc_difference\n");
    for row in &primary.size_rows {
        if let Some(other) = compared.size_rows.iter().find(|r| r.class == row.class) {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                row.class,
                row.mean_voxels,
                row.mean_dsc,
                other.mean_dsc,
                row.mean_dsc - other.mean_dsc
            ));
        }
    }
    out
}

/// All `*.lvol` volumes in a directory, sorted by filename; unreadable files
/// are reported together.
fn load_label_dir(dir: &Path) -> Result<Vec<LabelVolume>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "lvol"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no .lvol label volumes found in {}",
            dir.display()
        )));
    }
    let mut volumes = Vec::with_capacity(paths.len());
    let mut failures = Vec::new();
    for path in &paths {
        match LabelVolume::load(path) {
            Ok(volume) => volumes.push(volume),
            Err(err) => failures.push(format!("  {}: {err}", path.display())),
        }
    }
    if !failures.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{} of {} label volumes failed to load:\n{}",
            failures.len(),
            paths.len(),
            failures.join("\n")
        )));
    }
    Ok(volumes)
}
