//! ROC analysis, Youden operating points, confusion metrics and five-model
//! ensemble voting.
//!
//! Counts are kept as integers along the curve so that the trapezoidal area
//! is computed exactly as a ratio of integers and agrees with the pairwise
//! concordance statistic.

use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Cases with `score >= threshold` are called positive.
    pub threshold: f64,
    pub tp: u64,
    pub fp: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// Starts at (0, 0) with threshold +inf and ends at (1, 1).
    pub points: Vec<RocPoint>,
    pub positives: u64,
    pub negatives: u64,
    pub auc: f64,
}

fn check_inputs(scores: &[f64], labels: &[bool]) -> Result<(u64, u64)> {
    if scores.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("scores".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    Ok((pos, neg))
}

/// Sweeps the threshold over the unique scores, highest first.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    let (positives, negatives) = check_inputs(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
        tp: 0,
        fp: 0,
    }];
    let (mut tp, mut fp) = (0u64, 0u64);
    // twice the area, in units of one (positive, negative) pair
    let mut area2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        let (tp0, fp0) = (tp, fp);
        while i < order.len() && scores[order[i]] == t {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        area2 += (fp - fp0) as u128 * (tp + tp0) as u128;
        points.push(RocPoint {
            fpr: fp as f64 / negatives as f64,
            tpr: tp as f64 / positives as f64,
            threshold: t,
            tp,
            fp,
        });
    }
    let auc = area2 as f64 / (2 * positives as u128 * negatives as u128) as f64;
    Ok(RocCurve {
        points,
        positives,
        negatives,
        auc,
    })
}

pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    Ok(roc_curve(scores, labels)?.auc)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub youden: f64,
}

/// Point of maximal TPR − FPR over the finite thresholds of the curve.
/// Ties go to the higher TPR, then the lower threshold.
pub fn operating_point(curve: &RocCurve) -> Result<OperatingPoint> {
    let (p, n) = (curve.positives as i128, curve.negatives as i128);
    let mut best: Option<(&RocPoint, i128)> = None;
    for pt in curve.points.iter().filter(|pt| pt.threshold.is_finite()) {
        // J · P · N, exact
        let j = pt.tp as i128 * n - pt.fp as i128 * p;
        let better = match best {
            None => true,
            Some((b, bj)) => {
                j > bj
                    || (j == bj && pt.tp > b.tp)
                    || (j == bj && pt.tp == b.tp && pt.threshold < b.threshold)
            }
        };
        if better {
            best = Some((pt, j));
        }
    }
    let (pt, _) = best.ok_or_else(|| Error::Invalid("ROC curve has no finite threshold".into()))?;
    Ok(OperatingPoint {
        threshold: pt.threshold,
        tpr: pt.tpr,
        fpr: pt.fpr,
        youden: pt.tpr - pt.fpr,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

/// Metrics in the column order of the published result table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub auc: Option<f64>,
    pub accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub mean_accuracy: f64,
    pub counts: ConfusionCounts,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn confusion_metrics(predictions: &[bool], labels: &[bool]) -> Result<MetricsReport> {
    if predictions.is_empty() {
        return Err(Error::Invalid("no predictions to score".into()));
    }
    if predictions.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions but {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut c = ConfusionCounts {
        tp: 0,
        fp: 0,
        tn: 0,
        fn_: 0,
    };
    for (&p, &l) in predictions.iter().zip(labels) {
        match (p, l) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    let sensitivity = ratio(c.tp, c.tp + c.fn_);
    let specificity = ratio(c.tn, c.tn + c.fp);
    Ok(MetricsReport {
        auc: None,
        accuracy: ratio(c.tp + c.tn, predictions.len() as u64),
        sensitivity,
        specificity,
        mean_accuracy: (sensitivity + specificity) / 2.0,
        counts: c,
    })
}

impl MetricsReport {
    pub fn with_auc(mut self, auc: f64) -> Self {
        self.auc = Some(auc);
        self
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.auc {
            Some(a) => write!(f, "{a:.2}")?,
            None => write!(f, "-")?,
        }
        write!(
            f,
            " | {:.2} | {:.2} | {:.2} | {:.2}",
            self.accuracy, self.sensitivity, self.specificity, self.mean_accuracy
        )
    }
}

pub const REPORT_HEADER: &str = "AUC | Accuracy | Sensitivity | Specificity | Mean Accuracy";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleOutput {
    pub probability: f64,
    pub prediction: bool,
    pub votes: usize,
}

/// Mean probability and per-member threshold majority vote. An exact tie,
/// only possible with an even number of members, falls back to comparing
/// the mean probability against the mean threshold.
pub fn ensemble_vote(probabilities: &[f64], thresholds: &[f64]) -> Result<EnsembleOutput> {
    if probabilities.is_empty() || probabilities.len() != thresholds.len() {
        return Err(Error::Invalid(format!(
            "ensemble vote needs matching members, got {} probabilities for {} thresholds",
            probabilities.len(),
            thresholds.len()
        )));
    }
    let k = probabilities.len();
    let probability = probabilities.iter().sum::<f64>() / k as f64;
    let votes = probabilities.iter().zip(thresholds).filter(|(p, t)| p >= t).count();
    let prediction = if 2 * votes == k {
        probability >= thresholds.iter().sum::<f64>() / k as f64
    } else {
        2 * votes > k
    };
    Ok(EnsembleOutput {
        probability,
        prediction,
        votes,
    })
}

/// Writes the `fpr,tpr,threshold` table of a curve.
pub fn write_roc_table(path: &Path, curve: &RocCurve) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let io = |e: csv::Error| Error::Invalid(format!("writing {}: {e}", path.display()));
    w.write_record(["fpr", "tpr", "threshold"]).map_err(io)?;
    for p in &curve.points {
        w.write_record([p.fpr.to_string(), p.tpr.to_string(), p.threshold.to_string()])
            .map_err(io)?;
    }
    w.into_inner()
        .map_err(|e| Error::Invalid(e.to_string()))?
        .flush()
        .map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocTable {
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
}

/// Reads a table with at least `fpr` and `tpr` columns.
pub fn read_roc_table(path: &Path) -> Result<RocTable> {
    let schema = |m: String| Error::Invalid(format!("ROC table {}: {m}", path.display()));
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut r = csv::Reader::from_path(path).map_err(|e| schema(e.to_string()))?;
    let headers = r.headers().map_err(|e| schema(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| schema(format!("missing column `{name}`")))
    };
    let (fi, ti) = (col("fpr")?, col("tpr")?);
    let mut table = RocTable {
        fpr: Vec::new(),
        tpr: Vec::new(),
    };
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| schema(e.to_string()))?;
        let parse = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .filter(|v| (0.0..=1.0).contains(v))
                .ok_or_else(|| schema(format!("row {}: bad rate value", line + 2)))
        };
        table.fpr.push(parse(fi)?);
        table.tpr.push(parse(ti)?);
    }
    if table.fpr.is_empty() {
        return Err(schema("table is empty".into()));
    }
    Ok(table)
}
