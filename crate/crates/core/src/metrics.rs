//! Binary detection metrics: confusion matrix, accuracy / FAR / precision /
//! detection rate / F1, ROC curve and AUC. Anomaly (1) is the positive class.

use thiserror::Error;

use crate::store::csv_field;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("labels and predictions differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("no samples")]
    EmptyInput,
    #[error("ROC needs both classes present")]
    SingleClassInput,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn merge(self, o: ConfusionMatrix) -> ConfusionMatrix {
        ConfusionMatrix {
            tp: self.tp + o.tp,
            tn: self.tn + o.tn,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
        }
    }
}

pub fn confusion(labels: &[u8], preds: &[u8]) -> Result<ConfusionMatrix, MetricsError> {
    if labels.len() != preds.len() {
        return Err(MetricsError::LengthMismatch(labels.len(), preds.len()));
    }
    if labels.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut cm = ConfusionMatrix::default();
    for (&y, &p) in labels.iter().zip(preds) {
        match (y != 0, p != 0) {
            (true, true) => cm.tp += 1,
            (false, false) => cm.tn += 1,
            (false, true) => cm.fp += 1,
            (true, false) => cm.fn_ += 1,
        }
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub accuracy: f64,
    pub far: f64,
    pub precision: f64,
    pub detection_rate: f64,
    pub f1: f64,
    /// Set when some ratio had a zero denominator and was reported as 0.
    pub degenerate: bool,
}

fn ratio(num: u64, den: u64, degenerate: &mut bool) -> f64 {
    if den == 0 {
        *degenerate = true;
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// F1 from precision and detection rate; 0 when both are 0.
pub fn f1_score(precision: f64, detection_rate: f64) -> f64 {
    let s = precision + detection_rate;
    if s == 0.0 {
        0.0
    } else {
        2.0 * precision * detection_rate / s
    }
}

pub fn metrics_from_confusion(cm: &ConfusionMatrix) -> MetricReport {
    let mut degenerate = false;
    let accuracy = ratio(cm.tp + cm.tn, cm.total(), &mut degenerate);
    let far = ratio(cm.fp, cm.fp + cm.tn, &mut degenerate);
    let precision = ratio(cm.tp, cm.tp + cm.fp, &mut degenerate);
    let detection_rate = ratio(cm.tp, cm.tp + cm.fn_, &mut degenerate);
    if precision + detection_rate == 0.0 {
        degenerate = true;
    }
    MetricReport {
        accuracy,
        far,
        precision,
        detection_rate,
        f1: f1_score(precision, detection_rate),
        degenerate,
    }
}

pub const METRICS_CSV_HEADER: &str = "model,FAR%,Acc%,Prec%,DR%,F1%,AUC";

impl MetricReport {
    /// One CSV row in the column order FAR, Acc, Prec, DR, F1 (percent, 4
    /// decimals), then AUC when known.
    pub fn csv_row(&self, model: &str, auc: Option<f64>) -> String {
        format!(
            "{},{:.4},{:.4},{:.4},{:.4},{:.4},{}",
            csv_field(model),
            self.far * 100.0,
            self.accuracy * 100.0,
            self.precision * 100.0,
            self.detection_rate * 100.0,
            self.f1 * 100.0,
            auc.map(|a| format!("{a:.6}")).unwrap_or_default()
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    /// `(fpr, tpr)` from `(0, 0)` to `(1, 1)`, thresholds descending.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

impl RocCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("fpr,tpr\n");
        for (f, t) in &self.points {
            s.push_str(&format!("{f:.6},{t:.6}\n"));
        }
        s
    }
}

/// ROC over every distinct score used as a threshold (descending); equal
/// scores move the curve in a single step. AUC by the trapezoidal rule.
pub fn roc_curve(scores: &[f64], labels: &[u8]) -> Result<RocCurve, MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch(scores.len(), labels.len()));
    }
    let pos = labels.iter().filter(|&&y| y != 0).count() as f64;
    let neg = labels.len() as f64 - pos;
    if pos == 0.0 || neg == 0.0 {
        return Err(MetricsError::SingleClassInput);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut auc = 0.0;
    let mut k = 0;
    while k < order.len() {
        let s = scores[order[k]];
        while k < order.len() && scores[order[k]] == s {
            if labels[order[k]] != 0 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            k += 1;
        }
        let (prev_f, prev_t) = *points.last().unwrap();
        let (f, t) = (fp / neg, tp / pos);
        auc += (f - prev_f) * (t + prev_t) / 2.0;
        points.push((f, t));
    }
    Ok(RocCurve { points, auc })
}
