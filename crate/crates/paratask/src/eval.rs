//! Evaluation utilities: stratified k-fold splits, confusion matrices with
//! micro/macro F1, cross-validation and holdout drivers, and per-dataset
//! task-distribution reports.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::features::FeatureMatrix;
use crate::forest::{train_forest_matrix, ForestError, ForestParams};
use crate::text::TaskLabel;
use crate::util::derive_seed;

const N_CLASSES: usize = 5;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("class {label} has {have} samples, fewer than the {need} folds")]
    TooFewSamples {
        label: String,
        have: usize,
        need: usize,
    },
    #[error("fold count must be at least 2, got {k}")]
    InvalidFoldCount { k: usize },
    #[error("label lists differ in length: {actual} actual vs {predicted} predicted")]
    LengthMismatch { actual: usize, predicted: usize },
    #[error("no samples to evaluate")]
    EmptyInput,
    #[error("index {index} is Unknown, which is not a valid {side} label here")]
    UnexpectedUnknown { index: usize, side: &'static str },
    #[error(transparent)]
    Forest(#[from] ForestError),
}

/// Splits indices into `k` folds, shuffling within each class and dealing
/// round-robin, so per-class fold sizes differ by at most one. The same
/// (labels, k, seed) always produces the same folds.
pub fn stratified_kfold(
    labels: &[TaskLabel],
    k: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>, EvalError> {
    if k < 2 {
        return Err(EvalError::InvalidFoldCount { k });
    }
    // Classes processed in code order so the RNG consumption order is fixed.
    let mut by_class: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
    for (i, label) in labels.iter().enumerate() {
        by_class.entry(label.code()).or_default().push(i);
    }
    for (&code, members) in &by_class {
        if members.len() < k {
            return Err(EvalError::TooFewSamples {
                label: TaskLabel::from_code(code).expect("valid code").to_string(),
                have: members.len(),
                need: k,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    for members in by_class.values() {
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut rng);
        for (j, idx) in shuffled.into_iter().enumerate() {
            folds[j % k].push(idx);
        }
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(folds)
}

/// Counts of (actual class, predicted class) over the five task labels,
/// with an optional extra predicted-only column for Unknown answers from
/// human annotation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    /// Row per actual class in code order; each row has 5 entries, plus a
    /// sixth when `has_unknown_column`.
    pub rows: Vec<Vec<u64>>,
    pub has_unknown_column: bool,
    pub total: u64,
}

impl ConfusionMatrix {
    pub fn count(&self, actual: TaskLabel, predicted: TaskLabel) -> u64 {
        let col = predicted.code() as usize;
        self.rows[actual.code() as usize][col]
    }

    /// Sum of the diagonal: correctly classified samples.
    pub fn trace(&self) -> u64 {
        (0..N_CLASSES).map(|i| self.rows[i][i]).sum()
    }

    pub fn row_total(&self, actual: TaskLabel) -> u64 {
        self.rows[actual.code() as usize].iter().sum()
    }

    fn column_total(&self, col: usize) -> u64 {
        self.rows.iter().map(|r| r[col]).sum()
    }

    /// Plain-text table, rows = actual classes, columns = predicted.
    pub fn render_text(&self) -> String {
        let mut cols: Vec<String> = TaskLabel::CLASSES.iter().map(|l| l.to_string()).collect();
        if self.has_unknown_column {
            cols.push(TaskLabel::Unknown.to_string());
        }
        let name_w = cols.iter().map(String::len).max().unwrap_or(10).max(17);
        let mut out = String::new();
        out.push_str(&format!("{:<name_w$}", "actual \\ predicted"));
        for c in &cols {
            out.push_str(&format!("  {c:>name_w$}"));
        }
        out.push_str(&format!("  {:>8}\n", "total"));
        for (i, label) in TaskLabel::CLASSES.iter().enumerate() {
            out.push_str(&format!("{:<name_w$}", label.to_string()));
            for v in &self.rows[i] {
                out.push_str(&format!("  {v:>name_w$}"));
            }
            out.push_str(&format!("  {:>8}\n", self.row_total(*label)));
        }
        out
    }

    /// CSV with a header row; one row per actual class.
    pub fn to_csv(&self) -> String {
        let mut cols: Vec<&str> = TaskLabel::CLASSES.iter().map(|l| l.name()).collect();
        if self.has_unknown_column {
            cols.push(TaskLabel::Unknown.name());
        }
        let mut out = format!("actual,{}\n", cols.join(","));
        for (i, label) in TaskLabel::CLASSES.iter().enumerate() {
            let cells: Vec<String> = self.rows[i].iter().map(u64::to_string).collect();
            out.push_str(&format!("{},{}\n", label.name(), cells.join(",")));
        }
        out
    }
}

/// Precision, recall, and F1 of one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: TaskLabel,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

/// Aggregate classification quality derived from a confusion matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
}

impl EvalSummary {
    fn from_matrix(m: &ConfusionMatrix) -> EvalSummary {
        let trace = m.trace() as f64;
        let total = m.total as f64;
        // Micro precision pools over predictions that named one of the five
        // classes; Unknown answers count against recall only.
        let predicted_in_classes: u64 = (0..N_CLASSES).map(|c| m.column_total(c)).sum();
        let micro_p = if predicted_in_classes > 0 {
            trace / predicted_in_classes as f64
        } else {
            0.0
        };
        let micro_r = trace / total;
        // The harmonic mean of two equal numbers is that number; computing
        // it the long way would cost a bit of rounding error, and without
        // an Unknown column micro-F1 must equal trace/total exactly.
        let micro_f1 = if micro_p == micro_r {
            micro_r
        } else if micro_p + micro_r > 0.0 {
            2.0 * micro_p * micro_r / (micro_p + micro_r)
        } else {
            0.0
        };
        let mut per_class = Vec::with_capacity(N_CLASSES);
        let mut macro_sum = 0.0;
        for (i, &label) in TaskLabel::CLASSES.iter().enumerate() {
            let tp = m.rows[i][i] as f64;
            let row = m.row_total(label) as f64;
            let col = m.column_total(i) as f64;
            let precision = if col > 0.0 { tp / col } else { 0.0 };
            let recall = if row > 0.0 { tp / row } else { 0.0 };
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            macro_sum += f1;
            per_class.push(ClassMetrics {
                label,
                precision,
                recall,
                f1,
                support: row as u64,
            });
        }
        EvalSummary {
            micro_f1,
            macro_f1: macro_sum / N_CLASSES as f64,
            accuracy: trace / total,
            per_class,
        }
    }

    /// Aligned per-class table plus the aggregate lines.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<24}{:>10}{:>10}{:>10}{:>10}\n",
            "class", "precision", "recall", "f1", "support"
        ));
        for c in &self.per_class {
            out.push_str(&format!(
                "{:<24}{:>10.3}{:>10.3}{:>10.3}{:>10}\n",
                c.label.to_string(),
                c.precision,
                c.recall,
                c.f1,
                c.support
            ));
        }
        out.push_str(&format!("micro-F1  {:.4}\n", self.micro_f1));
        out.push_str(&format!("macro-F1  {:.4}\n", self.macro_f1));
        out.push_str(&format!("accuracy  {:.4}\n", self.accuracy));
        out
    }
}

/// Tallies a confusion matrix and its summary statistics.
///
/// Actual labels must be among the five classes; predicted labels may
/// additionally be Unknown (from human annotation sheets), which adds a
/// predicted-only column. In the no-Unknown single-label case the micro-F1
/// equals trace/total, i.e. plain accuracy.
pub fn confusion_stats(
    actual: &[TaskLabel],
    predicted: &[TaskLabel],
) -> Result<(ConfusionMatrix, EvalSummary), EvalError> {
    if actual.len() != predicted.len() {
        return Err(EvalError::LengthMismatch {
            actual: actual.len(),
            predicted: predicted.len(),
        });
    }
    if actual.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let has_unknown_column = predicted.contains(&TaskLabel::Unknown);
    let cols = N_CLASSES + has_unknown_column as usize;
    let mut rows = vec![vec![0u64; cols]; N_CLASSES];
    for (i, (&a, &p)) in actual.iter().zip(predicted).enumerate() {
        if a == TaskLabel::Unknown {
            return Err(EvalError::UnexpectedUnknown {
                index: i,
                side: "actual",
            });
        }
        rows[a.code() as usize][p.code() as usize] += 1;
    }
    let matrix = ConfusionMatrix {
        rows,
        has_unknown_column,
        total: actual.len() as u64,
    };
    let summary = EvalSummary::from_matrix(&matrix);
    Ok((matrix, summary))
}

/// Task counts of one dataset (or of the totals row).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistributionRow {
    pub dataset: String,
    pub counts: [u64; N_CLASSES],
    pub total: u64,
}

impl DistributionRow {
    /// Percentage of this row's total for class column `c`.
    pub fn percentage(&self, c: usize) -> f64 {
        100.0 * self.counts[c] as f64 / self.total as f64
    }
}

/// Predicted task distribution per dataset, with an overall totals row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistributionReport {
    /// One row per dataset, sorted by dataset name.
    pub rows: Vec<DistributionRow>,
    pub totals: DistributionRow,
}

impl DistributionReport {
    /// CSV with one row per dataset plus the totals row; per class a count
    /// column and a percentage column (one decimal place).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("dataset");
        for label in TaskLabel::CLASSES {
            out.push_str(&format!(",{0},{0}_pct", label.name()));
        }
        out.push_str(",total\n");
        for row in self.rows.iter().chain([&self.totals]) {
            out.push_str(&row.dataset);
            for c in 0..N_CLASSES {
                out.push_str(&format!(",{},{:.1}", row.counts[c], row.percentage(c)));
            }
            out.push_str(&format!(",{}\n", row.total));
        }
        out
    }

    /// Aligned table: per class a `count pct%` cell, rows per dataset plus
    /// the totals row. Percentages are rendered at one decimal place.
    pub fn render_text(&self) -> String {
        let name_w = self
            .rows
            .iter()
            .map(|r| r.dataset.len())
            .chain([7])
            .max()
            .unwrap();
        let mut out = String::new();
        out.push_str(&format!("{:<name_w$}", "dataset"));
        for label in TaskLabel::CLASSES {
            out.push_str(&format!("  {:>22}", label.to_string()));
        }
        out.push_str(&format!("  {:>8}\n", "total"));
        for row in self.rows.iter().chain([&self.totals]) {
            out.push_str(&format!("{:<name_w$}", row.dataset));
            for c in 0..N_CLASSES {
                let cell = format!("{} ({:.1}%)", row.counts[c], row.percentage(c));
                out.push_str(&format!("  {cell:>22}"));
            }
            out.push_str(&format!("  {:>8}\n", row.total));
        }
        out
    }
}

/// Aggregates (dataset, predicted task) pairs into a distribution report.
pub fn distribution_report(
    items: &[(String, TaskLabel)],
) -> Result<DistributionReport, EvalError> {
    if items.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut by_dataset: BTreeMap<&str, [u64; N_CLASSES]> = BTreeMap::new();
    for (i, (dataset, label)) in items.iter().enumerate() {
        if *label == TaskLabel::Unknown {
            return Err(EvalError::UnexpectedUnknown {
                index: i,
                side: "predicted",
            });
        }
        by_dataset.entry(dataset).or_insert([0; N_CLASSES])[label.code() as usize] += 1;
    }
    let mut totals = [0u64; N_CLASSES];
    let mut rows = Vec::with_capacity(by_dataset.len());
    for (dataset, counts) in by_dataset {
        for c in 0..N_CLASSES {
            totals[c] += counts[c];
        }
        rows.push(DistributionRow {
            dataset: dataset.to_string(),
            total: counts.iter().sum(),
            counts,
        });
    }
    Ok(DistributionReport {
        rows,
        totals: DistributionRow {
            dataset: "all".into(),
            total: totals.iter().sum(),
            counts: totals,
        },
    })
}

/// Outcome of one cross-validation fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub test_size: usize,
    pub micro_f1: f64,
}

/// Cross-validation outcome: per-fold scores plus the pooled confusion
/// matrix over every held-out prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub k: usize,
    pub folds: Vec<FoldResult>,
    pub matrix: ConfusionMatrix,
    pub summary: EvalSummary,
}

/// Runs k-fold cross-validation: for each fold, trains on the complement
/// and predicts the fold. Fold assignment and per-fold training seeds all
/// derive from `seed`, so the whole run is reproducible.
pub fn cross_validate(
    x: &FeatureMatrix,
    y: &[TaskLabel],
    params: &ForestParams,
    k: usize,
    seed: u64,
) -> Result<CvReport, EvalError> {
    let folds = stratified_kfold(y, k, derive_seed(seed, "cv-folds"))?;
    let mut actual = Vec::with_capacity(y.len());
    let mut predicted = Vec::with_capacity(y.len());
    let mut fold_results = Vec::with_capacity(k);
    for (i, test_idx) in folds.iter().enumerate() {
        let in_test: Vec<bool> = {
            let mut mask = vec![false; y.len()];
            for &t in test_idx {
                mask[t] = true;
            }
            mask
        };
        let train_idx: Vec<usize> = (0..y.len()).filter(|&j| !in_test[j]).collect();
        let train_x = x.select(&train_idx);
        let train_y: Vec<TaskLabel> = train_idx.iter().map(|&j| y[j]).collect();
        let model = train_forest_matrix(
            &train_x,
            &train_y,
            params,
            derive_seed(seed, &format!("cv-train-{i}")),
        )?;
        let test_x = x.select(test_idx);
        let preds = model.predict_matrix(&test_x)?;
        let fold_actual: Vec<TaskLabel> = test_idx.iter().map(|&j| y[j]).collect();
        let (_, fold_summary) = confusion_stats(&fold_actual, &preds)?;
        fold_results.push(FoldResult {
            fold: i,
            test_size: test_idx.len(),
            micro_f1: fold_summary.micro_f1,
        });
        actual.extend(fold_actual);
        predicted.extend(preds);
    }
    let (matrix, summary) = confusion_stats(&actual, &predicted)?;
    Ok(CvReport {
        k,
        folds: fold_results,
        matrix,
        summary,
    })
}

/// Holdout evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldoutReport {
    pub train_size: usize,
    pub test_size: usize,
    pub matrix: ConfusionMatrix,
    pub summary: EvalSummary,
}

/// Stratified 80:20 holdout: fold 0 of a seeded 5-fold split is the test
/// set, the rest trains one model.
pub fn holdout_evaluate(
    x: &FeatureMatrix,
    y: &[TaskLabel],
    params: &ForestParams,
    seed: u64,
) -> Result<HoldoutReport, EvalError> {
    let folds = stratified_kfold(y, 5, derive_seed(seed, "holdout-folds"))?;
    let test_idx = &folds[0];
    let mut in_test = vec![false; y.len()];
    for &t in test_idx {
        in_test[t] = true;
    }
    let train_idx: Vec<usize> = (0..y.len()).filter(|&j| !in_test[j]).collect();
    let train_y: Vec<TaskLabel> = train_idx.iter().map(|&j| y[j]).collect();
    let model = train_forest_matrix(
        &x.select(&train_idx),
        &train_y,
        params,
        derive_seed(seed, "holdout-train"),
    )?;
    let preds = model.predict_matrix(&x.select(test_idx))?;
    let actual: Vec<TaskLabel> = test_idx.iter().map(|&j| y[j]).collect();
    let (matrix, summary) = confusion_stats(&actual, &preds)?;
    Ok(HoldoutReport {
        train_size: train_idx.len(),
        test_size: test_idx.len(),
        matrix,
        summary,
    })
}
