//! Accuracy, precision, recall and F1 over binary predictions, plus the
//! feature-ablation runner in [`ablation`].

pub mod ablation;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::fusion::classify;
use crate::model::{predict, ArticleFeatures, ModelParams};

pub use ablation::{build_variant, run_ablation, AblationRow, AblationTable, AblationVariant, VariantName};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub positive_class: Label,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// The same predictions counted with the other class as positive.
    pub fn swap_positive(&self) -> Self {
        ConfusionCounts {
            tp: self.tn,
            fp: self.fn_,
            tn: self.tp,
            fn_: self.fp,
            positive_class: self.positive_class.other(),
        }
    }
}

pub fn confusion(preds: &[Label], labels: &[Label], positive_class: Label) -> Result<ConfusionCounts> {
    if preds.len() != labels.len() {
        return Err(Error::dims("predictions vs labels", labels.len(), preds.len()));
    }
    if preds.is_empty() {
        return Err(Error::InvalidArgument("no predictions to score".into()));
    }
    let mut c = ConfusionCounts {
        tp: 0,
        fp: 0,
        tn: 0,
        fn_: 0,
        positive_class,
    };
    for (&p, &y) in preds.iter().zip(labels) {
        match (p == positive_class, y == positive_class) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub variant: String,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: ConfusionCounts,
}

fn safe_div(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

/// Precision and recall are 0 when their denominators are; F1 is 0 when
/// precision + recall is.
pub fn report(counts: ConfusionCounts, variant: impl Into<String>) -> Result<MetricsReport> {
    let n = counts.total();
    if n == 0 {
        return Err(Error::InvalidArgument("cannot report on zero samples".into()));
    }
    let precision = safe_div(counts.tp, counts.tp + counts.fp);
    let recall = safe_div(counts.tp, counts.tp + counts.fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(MetricsReport {
        variant: variant.into(),
        accuracy: safe_div(counts.tp + counts.tn, n),
        precision,
        recall,
        f1,
        counts,
    })
}

pub const TABLE_HEADER: &str = "Acc    Pre    Rec    F1";

impl MetricsReport {
    /// Four columns with three decimals, e.g. `0.875  0.900  0.850  0.874`.
    pub fn table_cells(&self) -> String {
        format!(
            "{:.3}  {:.3}  {:.3}  {:.3}",
            self.accuracy, self.precision, self.recall, self.f1
        )
    }

    pub fn render_text(&self) -> String {
        let c = &self.counts;
        let mut s = String::new();
        let _ = writeln!(s, "{:<10} {}", "variant", TABLE_HEADER);
        let _ = writeln!(s, "{:<10} {}", self.variant, self.table_cells());
        let _ = writeln!(
            s,
            "positive class: {} | tp {} fp {} tn {} fn {}",
            c.positive_class, c.tp, c.fp, c.tn, c.fn_
        );
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub label: Label,
    pub predicted: Label,
    pub prob_fake: f64,
    pub prob_true: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub predictions: Vec<Prediction>,
}

pub fn evaluate(
    model: &ModelParams,
    data: &[ArticleFeatures],
    positive_class: Label,
    variant: &str,
) -> Result<Evaluation> {
    let predictions = data
        .iter()
        .map(|x| {
            let p = predict(model, x)?;
            Ok(Prediction {
                id: x.id.clone(),
                label: x.label,
                predicted: classify(p),
                prob_fake: p[0],
                prob_true: p[1],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let preds: Vec<Label> = predictions.iter().map(|p| p.predicted).collect();
    let labels: Vec<Label> = predictions.iter().map(|p| p.label).collect();
    let report = report(confusion(&preds, &labels, positive_class)?, variant)?;
    Ok(Evaluation {
        report,
        predictions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{Fake, True};

    #[test]
    fn hand_counts() {
        let c = confusion(&[Fake, True, Fake], &[Fake, True, Fake], Fake).unwrap();
        assert_eq!((c.tp, c.tn, c.fp, c.fn_), (2, 1, 0, 0));
        let c = confusion(&[Fake; 4], &[True; 4], Fake).unwrap();
        assert_eq!((c.tp, c.tn, c.fp, c.fn_), (0, 0, 4, 0));
    }

    #[test]
    fn confusion_errors() {
        assert!(confusion(&[], &[], Fake).is_err());
        assert!(confusion(&[Fake], &[Fake, True], Fake).is_err());
    }

    #[test]
    fn perfect_and_closed_form_reports() {
        let c = confusion(&[Fake, True], &[Fake, True], Fake).unwrap();
        let r = report(c, "full").unwrap();
        assert_eq!((r.accuracy, r.precision, r.recall, r.f1), (1.0, 1.0, 1.0, 1.0));

        let c = ConfusionCounts {
            tp: 2,
            fp: 1,
            tn: 0,
            fn_: 1,
            positive_class: Fake,
        };
        let r = report(c, "x").unwrap();
        assert_eq!(r.accuracy, 0.5);
        for v in [r.precision, r.recall, r.f1] {
            assert!((v - 2.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn degenerate_denominators_are_zero() {
        let c = ConfusionCounts {
            tp: 0,
            fp: 0,
            tn: 3,
            fn_: 0,
            positive_class: True,
        };
        let r = report(c, "x").unwrap();
        assert_eq!((r.precision, r.recall, r.f1, r.accuracy), (0.0, 0.0, 0.0, 1.0));
        let empty = ConfusionCounts { tn: 0, ..c };
        assert!(report(empty, "x").is_err());
    }

    #[test]
    fn reference_row_formatting() {
        let r = MetricsReport {
            variant: "full".into(),
            accuracy: 0.912,
            precision: 0.931,
            recall: 0.909,
            f1: 0.920,
            counts: ConfusionCounts {
                tp: 0,
                fp: 0,
                tn: 0,
                fn_: 0,
                positive_class: Fake,
            },
        };
        assert_eq!(r.table_cells(), "0.912  0.931  0.909  0.920");
        assert!(r.render_text().contains("Acc    Pre    Rec    F1"));
    }

    #[test]
    fn counts_serialise_with_fn_key() {
        let c = confusion(&[Fake], &[True], Fake).unwrap();
        let json = serde_json::to_string(&c).unwrap();
        assert!(json.contains("\"fn\":0") && json.contains("\"fp\":1"), "{json}");
    }
}
