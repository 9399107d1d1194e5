//! Multi-class evaluation: confusion matrix, one-vs-rest
//! precision/recall/F1 per class, and overall accuracy.
//!
//! Convention, fixed everywhere: confusion-matrix rows are the true class,
//! columns the predicted class. Every emitted artifact restates this.

mod report;

pub use report::{
    compare_reports, display_percent, ClassificationReport, ComparisonVerdict, ReportRow,
};

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty probability matrix")]
    EmptyProbabilities,
    #[error("no samples to score")]
    NoSamples,
    #[error("label/prediction length mismatch: {true_len} true vs {pred_len} predicted")]
    LengthMismatch { true_len: usize, pred_len: usize },
    #[error("class index {index} out of range for {num_classes} classes")]
    IndexOutOfRange { index: usize, num_classes: usize },
    #[error("expected {expected} class names, got {got}")]
    ClassNameCount { expected: usize, got: usize },
}

/// K×K count grid; rows = true class, columns = predicted class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
    class_names: Vec<String>,
}

impl ConfusionMatrix {
    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn with_class_names(mut self, names: &[String]) -> Result<Self, EvalError> {
        if names.len() != self.num_classes() {
            return Err(EvalError::ClassNameCount {
                expected: self.num_classes(),
                got: names.len(),
            });
        }
        self.class_names = names.to_vec();
        Ok(self)
    }

    /// Count of samples with true class `i` predicted as class `j`.
    pub fn count(&self, true_class: usize, pred_class: usize) -> u64 {
        self.counts[true_class][pred_class]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes()).map(|i| self.counts[i][i]).sum()
    }

    fn row_sum(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    fn col_sum(&self, j: usize) -> u64 {
        self.counts.iter().map(|row| row[j]).sum()
    }

    /// CSV with a header row/column of class names; the corner cell names
    /// the orientation.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("true\\predicted");
        for name in &self.class_names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (i, row) in self.counts.iter().enumerate() {
            out.push_str(&self.class_names[i]);
            for v in row {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }
}

/// Argmax decode of a row-stochastic probability matrix; ties break toward
/// the lowest index.
pub fn predict_labels(probabilities: ArrayView2<'_, f32>) -> Result<Vec<usize>, EvalError> {
    if probabilities.nrows() == 0 || probabilities.ncols() == 0 {
        return Err(EvalError::EmptyProbabilities);
    }
    Ok(probabilities
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0usize;
            let mut best_v = row[0];
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > best_v {
                    best = j;
                    best_v = v;
                }
            }
            best
        })
        .collect())
}

/// Tally an N-sample confusion matrix over `num_classes` classes.
pub fn confusion(
    y_true: &[usize],
    y_pred: &[usize],
    num_classes: usize,
) -> Result<ConfusionMatrix, EvalError> {
    if y_true.len() != y_pred.len() {
        return Err(EvalError::LengthMismatch {
            true_len: y_true.len(),
            pred_len: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(EvalError::NoSamples);
    }
    let mut counts = vec![vec![0u64; num_classes]; num_classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        for &idx in [t, p].iter() {
            if idx >= num_classes {
                return Err(EvalError::IndexOutOfRange {
                    index: idx,
                    num_classes,
                });
            }
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix {
        counts,
        class_names: (0..num_classes).map(|i| i.to_string()).collect(),
    })
}

/// One-vs-rest counts and derived metrics for a single class.
///
/// A metric whose denominator is zero is reported as 0 with the matching
/// `*_defined` flag cleared; report rendering marks those entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub tp: u64,
    pub fp: u64,
    pub false_neg: u64,
    pub tn: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub precision_defined: bool,
    pub recall_defined: bool,
    pub f1_defined: bool,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, false)
    } else {
        (num as f64 / den as f64, true)
    }
}

/// Per-class precision = TP/(TP+FP), recall = TP/(TP+FN),
/// F1 = 2pr/(p+r), from the one-vs-rest decomposition of `cm`.
pub fn per_class_metrics(cm: &ConfusionMatrix) -> Vec<ClassMetrics> {
    let total = cm.total();
    (0..cm.num_classes())
        .map(|c| {
            let tp = cm.count(c, c);
            let fp = cm.col_sum(c) - tp;
            let false_neg = cm.row_sum(c) - tp;
            let tn = total - tp - fp - false_neg;
            let (precision, precision_defined) = ratio(tp, tp + fp);
            let (recall, recall_defined) = ratio(tp, tp + false_neg);
            let (f1, f1_defined) = if precision + recall > 0.0 {
                (2.0 * precision * recall / (precision + recall), true)
            } else {
                (0.0, false)
            };
            ClassMetrics {
                tp,
                fp,
                false_neg,
                tn,
                precision,
                recall,
                f1,
                precision_defined,
                recall_defined,
                f1_defined,
            }
        })
        .collect()
}

/// trace/total — the multi-class correct/incorrect dichotomy.
pub fn overall_accuracy(cm: &ConfusionMatrix) -> Result<f64, EvalError> {
    let total = cm.total();
    if total == 0 {
        return Err(EvalError::NoSamples);
    }
    Ok(cm.trace() as f64 / total as f64)
}
