//! Detection-quality metrics for the occupancy attack. The positive class is
//! "occupied".

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

pub fn confusion(predictions: &[u8], labels: &[u8]) -> Result<ConfusionMatrix> {
    if predictions.len() != labels.len() {
        return Err(Error::LengthMismatch {
            expected: labels.len(),
            actual: predictions.len(),
        });
    }
    if labels.is_empty() {
        return Err(Error::NoSamples);
    }
    let mut cm = ConfusionMatrix::default();
    for (p, l) in predictions.iter().zip(labels) {
        match (p, l) {
            (1, 1) => cm.tp += 1,
            (0, 0) => cm.tn += 1,
            (1, 0) => cm.fp += 1,
            (0, 1) => cm.fn_ += 1,
            _ => {
                return Err(Error::config(format!(
                    "prediction {p} / label {l} outside {{0, 1}}"
                )))
            }
        }
    }
    Ok(cm)
}

/// Ratio metrics; `None` where the denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasicMetrics {
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub fpr: Option<f64>,
    pub fnr: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn basic_metrics(cm: &ConfusionMatrix) -> BasicMetrics {
    let precision = ratio(cm.tp, cm.tp + cm.fp);
    let recall = ratio(cm.tp, cm.tp + cm.fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    BasicMetrics {
        accuracy: ratio(cm.tp + cm.tn, cm.total()),
        precision,
        recall,
        f1,
        fpr: ratio(cm.fp, cm.fp + cm.tn),
        fnr: ratio(cm.fn_, cm.fn_ + cm.tp),
    }
}

/// Matthews correlation coefficient. A zero factor in the denominator
/// yields 0; check [`mcc_degenerate`] to tell that apart from a real 0.
pub fn mcc(cm: &ConfusionMatrix) -> f64 {
    let (tp, tn, fp, fn_) = (cm.tp as f64, cm.tn as f64, cm.fp as f64, cm.fn_ as f64);
    let den = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
    if den == 0.0 {
        0.0
    } else {
        ((tp * tn - fp * fn_) / den).clamp(-1.0, 1.0)
    }
}

pub fn mcc_degenerate(cm: &ConfusionMatrix) -> bool {
    cm.tp + cm.fp == 0 || cm.tp + cm.fn_ == 0 || cm.tn + cm.fp == 0 || cm.tn + cm.fn_ == 0
}

/// Area under the ROC curve by trapezoidal integration over every distinct
/// score used as a threshold. Tied scores move the curve diagonally, which
/// credits them one half.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            expected: labels.len(),
            actual: scores.len(),
        });
    }
    let positives = labels.iter().filter(|l| **l == 1).count() as f64;
    let negatives = labels.len() as f64 - positives;
    if positives == 0.0 || negatives == 0.0 {
        return Err(Error::AucUndefined);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let (mut tp, mut fp) = (0.0, 0.0);
    let (mut prev_tpr, mut prev_fpr) = (0.0, 0.0);
    let mut area = 0.0;
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] == 1 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        let (tpr, fpr) = (tp / positives, fp / negatives);
        area += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
        prev_tpr = tpr;
        prev_fpr = fpr;
    }
    Ok(area)
}

/// Everything reported per evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub fpr: Option<f64>,
    pub fnr: Option<f64>,
    pub mcc: f64,
    pub auc: Option<f64>,
    pub counts: ConfusionMatrix,
    /// Names of metrics whose value is undefined or set by convention.
    pub flags: Vec<String>,
}

impl EvalReport {
    /// Thresholds `scores` at 0.5 (inclusive) and computes every metric.
    pub fn from_scores(scores: &[f64], labels: &[u8]) -> Result<Self> {
        let predictions: Vec<u8> = scores.iter().map(|s| u8::from(*s >= 0.5)).collect();
        let cm = confusion(&predictions, labels)?;
        let basic = basic_metrics(&cm);
        let mut flags = Vec::new();
        for (name, v) in [
            ("precision", basic.precision),
            ("recall", basic.recall),
            ("f1", basic.f1),
            ("fpr", basic.fpr),
            ("fnr", basic.fnr),
        ] {
            if v.is_none() {
                flags.push(format!("{name}_undefined"));
            }
        }
        if mcc_degenerate(&cm) {
            flags.push("mcc_degenerate".into());
        }
        let auc = match roc_auc(scores, labels) {
            Ok(a) => Some(a),
            Err(Error::AucUndefined) => {
                flags.push("auc_undefined".into());
                None
            }
            Err(e) => return Err(e),
        };
        Ok(Self {
            accuracy: basic.accuracy,
            precision: basic.precision,
            recall: basic.recall,
            f1: basic.f1,
            fpr: basic.fpr,
            fnr: basic.fnr,
            mcc: mcc(&cm),
            auc,
            counts: cm,
            flags,
        })
    }
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"))
}

/// Aligned text table, one row per named report.
pub fn render_table(rows: &[(String, EvalReport)]) -> String {
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(4);
    let mut out = format!(
        "{:<width$}  {:>8} {:>9} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}\n",
        "case", "accuracy", "precision", "recall", "f1", "fpr", "fnr", "mcc", "auc"
    );
    for (name, r) in rows {
        let _ = writeln!(
            out,
            "{:<width$}  {:>8} {:>9} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
            name,
            cell(r.accuracy),
            cell(r.precision),
            cell(r.recall),
            cell(r.f1),
            cell(r.fpr),
            cell(r.fnr),
            cell(Some(r.mcc)),
            cell(r.auc),
        );
    }
    out
}
