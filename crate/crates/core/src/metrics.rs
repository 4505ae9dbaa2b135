//! Dice similarity computation with case-then-cohort aggregation, plus
//! boundary-error and structure-size analyses.
//!
//! Per-class DSC values are averaged per case over the classes present in
//! prediction or truth, then the per-case means are averaged over the cohort
//! (sample standard deviation, divisor n-1; a single case reports std 0).
//! Classes absent from both volumes of a case are excluded and flagged.

use crate::error::{Error, Result};
use crate::volume::LabelVolume;

/// Dice Similarity Coefficient of one class: `2|P∩G| / (|P| + |G|)`.
///
/// Returns `None` when the class is absent from both volumes.
pub fn dsc_per_class(
    prediction: &LabelVolume,
    truth: &LabelVolume,
    class: u16,
) -> Result<Option<f64>> {
    if prediction.dims != truth.dims {
        return Err(Error::DimMismatch(format!(
            "prediction {} vs truth {}",
            prediction.dims, truth.dims
        )));
    }
    let mut pred_count = 0u64;
    let mut truth_count = 0u64;
    let mut overlap = 0u64;
    for (&p, &g) in prediction.labels.iter().zip(truth.labels.iter()) {
        let in_pred = p == class;
        let in_truth = g == class;
        pred_count += in_pred as u64;
        truth_count += in_truth as u64;
        overlap += (in_pred && in_truth) as u64;
    }
    if pred_count + truth_count == 0 {
        return Ok(None);
    }
    Ok(Some(
        2.0 * overlap as f64 / (pred_count + truth_count) as f64,
    ))
}

/// Case-then-cohort DSC aggregation.
#[derive(Debug, Clone)]
pub struct DscReport {
    /// Class ids evaluated, ascending; inner vectors below are parallel to this.
    pub classes: Vec<u16>,
    /// `[case][class slot]`; `None` marks a class absent from both volumes.
    pub per_case_per_class: Vec<Vec<Option<f64>>>,
    /// Mean over present classes; `None` when every class was absent.
    pub per_case_mean: Vec<Option<f64>>,
    /// Mean of the per-case means (cases with a defined mean only).
    pub cohort_mean: f64,
    /// Sample standard deviation (divisor n-1) of per-case means; 0 for n = 1.
    pub cohort_std: f64,
    /// Cases contributing to the cohort statistics.
    pub n_cases_included: usize,
    /// (case index, class id) pairs excluded as absent-in-both.
    pub classes_skipped: Vec<(usize, u16)>,
}

/// Aggregate per-case per-class DSC values into cohort statistics.
pub fn aggregate(classes: Vec<u16>, per_case_per_class: Vec<Vec<Option<f64>>>) -> Result<DscReport> {
    if per_case_per_class.is_empty() {
        return Err(Error::invalid("aggregation needs at least one case"));
    }
    for (case, row) in per_case_per_class.iter().enumerate() {
        if row.len() != classes.len() {
            return Err(Error::DimMismatch(format!(
                "case {case} has {} class entries, expected {}",
                row.len(),
                classes.len()
            )));
        }
    }
    let mut classes_skipped = Vec::new();
    let mut per_case_mean = Vec::with_capacity(per_case_per_class.len());
    for (case, row) in per_case_per_class.iter().enumerate() {
        let mut sum = 0.0;
        let mut n = 0usize;
        for (slot, value) in row.iter().enumerate() {
            match value {
                Some(dsc) => {
                    sum += dsc;
                    n += 1;
                }
                None => classes_skipped.push((case, classes[slot])),
            }
        }
        per_case_mean.push((n > 0).then(|| sum / n as f64));
    }
    let included: Vec<f64> = per_case_mean.iter().filter_map(|&m| m).collect();
    if included.is_empty() {
        return Err(Error::invalid(
            "every case had all classes absent; cohort mean undefined",
        ));
    }
    let n = included.len();
    let cohort_mean = included.iter().sum::<f64>() / n as f64;
    let cohort_std = if n > 1 {
        let var = included
            .iter()
            .map(|m| (m - cohort_mean).powi(2))
            .sum::<f64>()
            / (n - 1) as f64;
        var.sqrt()
    } else {
        0.0
    };
    Ok(DscReport {
        classes,
        per_case_per_class,
        per_case_mean,
        cohort_mean,
        cohort_std,
        n_cases_included: n,
        classes_skipped,
    })
}

/// Evaluate per-class DSC for every case and aggregate.
///
/// `include_background` keeps class 0 in the per-class sweep.
pub fn dsc_report(
    predictions: &[LabelVolume],
    truths: &[LabelVolume],
    n_classes: usize,
    include_background: bool,
) -> Result<DscReport> {
    if predictions.len() != truths.len() {
        return Err(Error::DimMismatch(format!(
            "{} predictions vs {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    let classes: Vec<u16> = (0..n_classes as u16)
        .filter(|&c| include_background || c != 0)
        .collect();
    let mut per_case = Vec::with_capacity(predictions.len());
    for (pred, truth) in predictions.iter().zip(truths.iter()) {
        let row = classes
            .iter()
            .map(|&c| dsc_per_class(pred, truth, c))
            .collect::<Result<Vec<_>>>()?;
        per_case.push(row);
    }
    aggregate(classes, per_case)
}

/// Fraction of misclassified voxels lying within one voxel of a ground-truth
/// class boundary (6-connectivity, neighborhood includes the voxel itself).
///
/// Returns 0 when the prediction is perfect.
pub fn boundary_error_fraction(prediction: &LabelVolume, truth: &LabelVolume) -> Result<f64> {
    if prediction.dims != truth.dims {
        return Err(Error::DimMismatch(format!(
            "prediction {} vs truth {}",
            prediction.dims, truth.dims
        )));
    }
    {
        let first = truth.labels[0];
        if truth.labels.iter().all(|&l| l == first) {
            return Err(Error::invalid(
                "boundary analysis needs at least 2 classes in the truth volume",
            ));
        }
    }
    let dims = truth.dims;
    let mut errors = 0u64;
    let mut boundary_errors = 0u64;
    for z in 0..dims.z {
        for y in 0..dims.y {
            for x in 0..dims.x {
                let i = dims.index(x, y, z);
                if prediction.labels[i] == truth.labels[i] {
                    continue;
                }
                errors += 1;
                let here = truth.labels[i];
                let mut near_boundary = false;
                let mut check = |j: usize| {
                    if truth.labels[j] != here {
                        near_boundary = true;
                    }
                };
                if x > 0 {
                    check(dims.index(x - 1, y, z));
                }
                if x + 1 < dims.x {
                    check(dims.index(x + 1, y, z));
                }
                if y > 0 {
                    check(dims.index(x, y - 1, z));
                }
                if y + 1 < dims.y {
                    check(dims.index(x, y + 1, z));
                }
                if z > 0 {
                    check(dims.index(x, y, z - 1));
                }
                if z + 1 < dims.z {
                    check(dims.index(x, y, z + 1));
                }
                boundary_errors += near_boundary as u64;
            }
        }
    }
    if errors == 0 {
        return Ok(0.0);
    }
    Ok(boundary_errors as f64 / errors as f64)
}

/// One row of the structure-size table.
#[derive(Debug, Clone, PartialEq)]
pub struct SizeRow {
    pub class: u16,
    /// Mean ground-truth voxel count over the cases where the class appears.
    pub mean_voxels: f64,
    /// Mean DSC over the cases where the class was evaluated.
    pub mean_dsc: f64,
}

/// Per-class mean truth volume and mean DSC, sorted by volume ascending.
///
/// Classes absent from every truth volume are omitted.
pub fn dsc_vs_structure_size(report: &DscReport, truths: &[LabelVolume]) -> Result<Vec<SizeRow>> {
    if truths.len() != report.per_case_per_class.len() {
        return Err(Error::DimMismatch(format!(
            "{} truth volumes vs {} report cases",
            truths.len(),
            report.per_case_per_class.len()
        )));
    }
    let mut rows = Vec::new();
    for (slot, &class) in report.classes.iter().enumerate() {
        let mut voxel_sum = 0u64;
        let mut present_cases = 0usize;
        for truth in truths {
            let count = truth.labels.iter().filter(|&&l| l == class).count() as u64;
            if count > 0 {
                voxel_sum += count;
                present_cases += 1;
            }
        }
        if present_cases == 0 {
            continue;
        }
        let dscs: Vec<f64> = report
            .per_case_per_class
            .iter()
            .filter_map(|row| row[slot])
            .collect();
        if dscs.is_empty() {
            continue;
        }
        rows.push(SizeRow {
            class,
            mean_voxels: voxel_sum as f64 / present_cases as f64,
            mean_dsc: dscs.iter().sum::<f64>() / dscs.len() as f64,
        });
    }
    rows.sort_by(|a, b| {
        a.mean_voxels
            .partial_cmp(&b.mean_voxels)
            .expect("voxel counts are finite")
            .then(a.class.cmp(&b.class))
    });
    Ok(rows)
}

/// Per-case per-class CSV: `case_id,class_id,dsc,skipped`.
pub fn report_to_csv(report: &DscReport) -> String {
    let mut out = String::from("case_id,class_id,dsc,skipped\n");
    for (case, row) in report.per_case_per_class.iter().enumerate() {
        for (slot, value) in row.iter().enumerate() {
            match value {
                Some(dsc) => {
                    out.push_str(&format!("{case},{},{dsc},0\n", report.classes[slot]))
                }
                None => out.push_str(&format!("{case},{},,1\n", report.classes[slot])),
            }
        }
    }
    out
}

/// Summary CSV: cohort mean, sample std, and case count.
pub fn summary_to_csv(report: &DscReport) -> String {
    format!(
        "cohort_mean,cohort_std,n_cases\n{},{},{}\n",
        report.cohort_mean, report.cohort_std, report.n_cases_included
    )
}

/// Structure-size CSV: `class_id,mean_voxels,mean_dsc`.
pub fn size_table_to_csv(rows: &[SizeRow]) -> String {
    let mut out = String::from("class_id,mean_voxels,mean_dsc\n");
    for row in rows {
        out.push_str(&format!("{},{},{}\n", row.class, row.mean_voxels, row.mean_dsc));
    }
    out
}
