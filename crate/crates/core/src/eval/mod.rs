//! ROC/AUC evaluation and the experiment harnesses built on it.
//!
//! [`auc`] integrates the ROC curve with the trapezoid rule. Tied scores move
//! together along the curve, which makes the area equal to the Mann-Whitney
//! statistic with ties counted as one half.

mod benchmark;
mod ranking;

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub use benchmark::{
    cell_seed, rule_score_aucs, run_benchmark, CellOutcome, CellReport, DatasetSizes, ExperimentReport, ModelScore,
    BENCHMARK_MODELS, REPORT_FORMAT,
};
pub use ranking::{ablate_features, rank_features, AblationRow, FeatureTable, RankRow};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Scores `>= threshold` are called positive. The first point uses
    /// `+inf` (nothing called positive).
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

fn check_scores(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("scores must be finite".into()));
    }
    if let Some(bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::Domain(format!("label {bad} is not binary")));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::AucUndefined);
    }
    Ok((pos, neg))
}

/// ROC points from the strictest threshold to the loosest: `(0, 0)`, one
/// point per distinct score (descending), ending at `(1, 1)`.
pub fn roc_curve(scores: &[f64], labels: &[u8]) -> Result<Vec<RocPoint>> {
    let (pos, neg) = check_scores(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = 0;
    while k < order.len() {
        let s = scores[order[k]];
        while k < order.len() && scores[order[k]] == s {
            if labels[order[k]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        points.push(RocPoint {
            threshold: s,
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        });
    }
    Ok(points)
}

/// Trapezoidal area under [`roc_curve`].
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let pts = roc_curve(scores, labels)?;
    Ok(pts
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    /// Resamples that contained both classes and were used.
    pub resamples: usize,
}

/// Percentile bootstrap interval for the AUC. Resamples that draw a single
/// class are discarded.
pub fn bootstrap_auc(scores: &[f64], labels: &[u8], resamples: usize, level: f64, seed: u64) -> Result<BootstrapCi> {
    check_scores(scores, labels)?;
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!("confidence level {level} must be in (0, 1)")));
    }
    let n = scores.len();
    let mut rng = seed::rng(seed::derive(seed, "bootstrap-auc", 0));
    let mut values = Vec::with_capacity(resamples);
    let mut s = vec![0.0; n];
    let mut l = vec![0u8; n];
    for _ in 0..resamples {
        for k in 0..n {
            let i = rng.gen_range(0..n);
            s[k] = scores[i];
            l[k] = labels[i];
        }
        match auc(&s, &l) {
            Ok(a) => values.push(a),
            Err(Error::AucUndefined) => {}
            Err(e) => return Err(e),
        }
    }
    if values.is_empty() {
        return Err(Error::AucUndefined);
    }
    values.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let idx = (p * (values.len() - 1) as f64).round() as usize;
        values[idx]
    };
    let tail = (1.0 - level) / 2.0;
    Ok(BootstrapCi {
        lower: q(tail),
        upper: q(1.0 - tail),
        level,
        resamples: values.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionMatrix {
    /// TPR, `TP / (TP + FN)`.
    pub fn sensitivity(&self) -> f64 {
        self.tp as f64 / (self.tp + self.fn_).max(1) as f64
    }

    /// TNR, `TN / (TN + FP)`.
    pub fn specificity(&self) -> f64 {
        self.tn as f64 / (self.tn + self.fp).max(1) as f64
    }
}

/// Counts at a fixed operating threshold (`score >= threshold` is positive).
pub fn confusion_matrix(scores: &[f64], labels: &[u8], threshold: f64) -> Result<ConfusionMatrix> {
    if scores.len() != labels.len() {
        return Err(Error::Shape("scores and labels differ in length".into()));
    }
    let mut m = ConfusionMatrix { tp: 0, fp: 0, tn: 0, fn_: 0 };
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l == 1) {
            (true, true) => m.tp += 1,
            (true, false) => m.fp += 1,
            (false, false) => m.tn += 1,
            (false, true) => m.fn_ += 1,
        }
    }
    Ok(m)
}

/// Writes ROC points as `threshold,fpr,tpr` rows, `#` preamble first.
pub fn write_roc_csv<W: Write>(out: W, points: &[RocPoint], preamble: &[String]) -> Result<()> {
    let mut out = std::io::BufWriter::new(out);
    for line in preamble {
        writeln!(out, "# {line}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["threshold", "fpr", "tpr"])?;
    for p in points {
        w.write_record([p.threshold.to_string(), p.fpr.to_string(), p.tpr.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
