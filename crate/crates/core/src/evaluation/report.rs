//! Table-shaped classification report: one block per model with per-class
//! precision/recall/F1 rows and a single model-level accuracy.

use serde::{Deserialize, Serialize};

use super::{overall_accuracy, per_class_metrics, ClassMetrics, ConfusionMatrix, EvalError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub class_name: String,
    pub metrics: ClassMetrics,
}

/// Per-class rows plus one overall accuracy, for one model.
///
/// Percentages are rounded half-up to integers for display only; the
/// underlying values keep full precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub model_label: String,
    pub rows: Vec<ReportRow>,
    /// Overall accuracy in [0,1].
    pub accuracy: f64,
}

/// Round a [0,1] fraction half-up to an integer percent.
pub fn display_percent(fraction: f64) -> i64 {
    (fraction * 100.0).round() as i64
}

fn marked(fraction: f64, defined: bool) -> String {
    if defined {
        display_percent(fraction).to_string()
    } else {
        format!("{}*", display_percent(fraction))
    }
}

impl ClassificationReport {
    pub fn from_confusion(
        cm: &ConfusionMatrix,
        class_names: &[String],
        model_label: &str,
    ) -> Result<Self, EvalError> {
        if class_names.len() != cm.num_classes() {
            return Err(EvalError::ClassNameCount {
                expected: cm.num_classes(),
                got: class_names.len(),
            });
        }
        let rows = class_names
            .iter()
            .zip(per_class_metrics(cm))
            .map(|(name, metrics)| ReportRow {
                class_name: name.clone(),
                metrics,
            })
            .collect();
        Ok(Self {
            model_label: model_label.to_string(),
            rows,
            accuracy: overall_accuracy(cm)?,
        })
    }

    fn any_undefined(&self) -> bool {
        self.rows.iter().any(|r| {
            !(r.metrics.precision_defined && r.metrics.recall_defined && r.metrics.f1_defined)
        })
    }

    /// Aligned plain-text block.
    pub fn to_text(&self) -> String {
        let name_w = self
            .rows
            .iter()
            .map(|r| r.class_name.len())
            .chain(["class".len()])
            .max()
            .unwrap_or(5);
        let mut out = format!("model: {}\n", self.model_label);
        out.push_str(&format!(
            "{:name_w$}  {:>13}  {:>10}  {:>12}\n",
            "class", "precision (%)", "recall (%)", "f1-score (%)"
        ));
        for r in &self.rows {
            out.push_str(&format!(
                "{:name_w$}  {:>13}  {:>10}  {:>12}\n",
                r.class_name,
                marked(r.metrics.precision, r.metrics.precision_defined),
                marked(r.metrics.recall, r.metrics.recall_defined),
                marked(r.metrics.f1, r.metrics.f1_defined),
            ));
        }
        out.push_str(&format!(
            "{:name_w$}  {:>13}\n",
            "accuracy",
            display_percent(self.accuracy)
        ));
        if self.any_undefined() {
            out.push_str("* zero-denominator metric, reported as 0\n");
        }
        out
    }

    /// `class,precision,recall,f1` rows (full-precision percentages) plus a
    /// trailing `accuracy,<value>` line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,precision,recall,f1\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.6}\n",
                r.class_name,
                r.metrics.precision * 100.0,
                r.metrics.recall * 100.0,
                r.metrics.f1 * 100.0,
            ));
        }
        out.push_str(&format!("accuracy,{:.6}\n", self.accuracy * 100.0));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonVerdict {
    pub higher_label: String,
    /// Accuracy difference in percentage points (full precision).
    pub delta_points: f64,
    pub tied: bool,
}

/// Side-by-side two-block report plus a one-line accuracy verdict.
pub fn compare_reports(a: &ClassificationReport, b: &ClassificationReport) -> (String, ComparisonVerdict) {
    let delta = (a.accuracy - b.accuracy) * 100.0;
    let verdict = if delta == 0.0 {
        ComparisonVerdict {
            higher_label: a.model_label.clone(),
            delta_points: 0.0,
            tied: true,
        }
    } else {
        let (hi, _lo) = if delta > 0.0 { (a, b) } else { (b, a) };
        ComparisonVerdict {
            higher_label: hi.model_label.clone(),
            delta_points: delta.abs(),
            tied: false,
        }
    };
    let mut text = a.to_text();
    text.push('\n');
    text.push_str(&b.to_text());
    text.push('\n');
    if verdict.tied {
        text.push_str(&format!(
            "verdict: accuracy tied at {:.1}%\n",
            a.accuracy * 100.0
        ));
    } else {
        text.push_str(&format!(
            "verdict: {} accuracy is higher by {:.1} points ({:.1}% vs {:.1}%)\n",
            verdict.higher_label,
            verdict.delta_points,
            a.accuracy.max(b.accuracy) * 100.0,
            a.accuracy.min(b.accuracy) * 100.0,
        ));
    }
    (text, verdict)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::confusion;

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn perfect_report_all_hundred() {
        let cm = confusion(&[0, 1, 2, 3], &[0, 1, 2, 3], 4).unwrap();
        let rep = ClassificationReport::from_confusion(&cm, &names(4), "CNN").unwrap();
        let text = rep.to_text();
        assert_eq!(text.matches("100").count(), 13); // 4 rows x 3 metrics + accuracy
        assert_eq!(display_percent(rep.accuracy), 100);
    }

    #[test]
    fn table_row_renders_67_85_75() {
        // tp=17, fn=3 gives recall 0.85; fp such that precision ~0.67: 17/(17+fp)
        // brute-force a (fp) hitting the target ratio closely enough to
        // round to 67: fp chosen so 17/25.37... -> use p=0.67 exactly via
        // ClassMetrics directly.
        let m = ClassMetrics {
            tp: 0,
            fp: 0,
            false_neg: 0,
            tn: 0,
            precision: 0.67,
            recall: 0.85,
            f1: 2.0 * 0.67 * 0.85 / (0.67 + 0.85),
            precision_defined: true,
            recall_defined: true,
            f1_defined: true,
        };
        assert_eq!(display_percent(m.precision), 67);
        assert_eq!(display_percent(m.recall), 85);
        assert_eq!(display_percent(m.f1), 75);
    }

    #[test]
    fn csv_layout() {
        let cm = confusion(&[0, 1], &[0, 1], 2).unwrap();
        let rep = ClassificationReport::from_confusion(&cm, &names(2), "m").unwrap();
        let csv = rep.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "class,precision,recall,f1");
        assert!(lines.last().unwrap().starts_with("accuracy,"));
        assert_eq!(lines.len(), 4);
    }

    #[test]
    fn name_count_mismatch_errors() {
        let cm = confusion(&[0, 1], &[0, 1], 2).unwrap();
        assert!(ClassificationReport::from_confusion(&cm, &names(3), "m").is_err());
    }

    #[test]
    fn compare_self_is_tie() {
        let cm = confusion(&[0, 1], &[0, 0], 2).unwrap();
        let rep = ClassificationReport::from_confusion(&cm, &names(2), "m").unwrap();
        let (text, verdict) = compare_reports(&rep, &rep);
        assert!(verdict.tied);
        assert_eq!(verdict.delta_points, 0.0);
        assert!(text.contains("tied"));
    }

    #[test]
    fn compare_two_blocks_and_delta() {
        let cm_a = confusion(&[0, 1], &[0, 1], 2).unwrap(); // 100%
        let cm_b = confusion(&[0, 1], &[0, 0], 2).unwrap(); // 50%
        let a = ClassificationReport::from_confusion(&cm_a, &names(2), "transfer").unwrap();
        let b = ClassificationReport::from_confusion(&cm_b, &names(2), "baseline").unwrap();
        let (text, verdict) = compare_reports(&a, &b);
        assert_eq!(verdict.higher_label, "transfer");
        assert!((verdict.delta_points - 50.0).abs() < 1e-9);
        assert_eq!(text.matches("model:").count(), 2);
        assert!(text.contains("higher by 50.0 points"));
    }
}
