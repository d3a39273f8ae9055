//! ROC curves, AUC and thresholded precision/recall/F1.
//!
//! The positive class is `Label::Mistake`. AUC is available two ways: as the
//! trapezoidal area under [`roc_curve`] and as the rank statistic
//! [`auc_rank`]. Tied scores advance the curve in one diagonal step, which is
//! what makes the two agree exactly (half credit for tied pairs).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grouping::GroupTag;
use crate::slam::Label;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub instance_id: String,
    pub score: f64,
    pub label: Label,
    pub group: GroupTag,
}

/// Anything carrying a score and a binary outcome.
pub trait Scored {
    fn score(&self) -> f64;
    fn is_positive(&self) -> bool;
}

impl Scored for Prediction {
    fn score(&self) -> f64 {
        self.score
    }

    fn is_positive(&self) -> bool {
        self.label.is_mistake()
    }
}

impl Scored for (f64, bool) {
    fn score(&self) -> f64 {
        self.0
    }

    fn is_positive(&self) -> bool {
        self.1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub positives: usize,
    pub negatives: usize,
}

impl RocCurve {
    /// Builds a curve from explicit points, checking the curve invariants.
    pub fn from_points(points: Vec<RocPoint>, positives: usize, negatives: usize) -> Result<Self> {
        let bad = |msg: &str| Err(Error::Config(format!("invalid ROC curve: {msg}")));
        if points.len() < 2 {
            return bad("fewer than two points");
        }
        if points[0] != (RocPoint { fpr: 0.0, tpr: 0.0 }) {
            return bad("does not start at (0,0)");
        }
        if points[points.len() - 1] != (RocPoint { fpr: 1.0, tpr: 1.0 }) {
            return bad("does not end at (1,1)");
        }
        for w in points.windows(2) {
            if !(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr) {
                return bad("coordinates decrease");
            }
        }
        Ok(RocCurve {
            points,
            positives,
            negatives,
        })
    }

    /// The curve of a classifier that ranks every positive first.
    pub fn perfect() -> Self {
        let p = |fpr, tpr| RocPoint { fpr, tpr };
        RocCurve {
            points: vec![p(0.0, 0.0), p(0.0, 1.0), p(1.0, 1.0)],
            positives: 1,
            negatives: 1,
        }
    }

    pub fn diagonal() -> Self {
        let p = |fpr, tpr| RocPoint { fpr, tpr };
        RocCurve {
            points: vec![p(0.0, 0.0), p(1.0, 1.0)],
            positives: 1,
            negatives: 1,
        }
    }

    /// `fpr,tpr` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fpr,tpr\n");
        for p in &self.points {
            out.push_str(&format!("{},{}\n", p.fpr, p.tpr));
        }
        out
    }
}

fn class_counts<P: Scored>(preds: &[P]) -> Result<(usize, usize)> {
    let mut pos = 0;
    for (i, p) in preds.iter().enumerate() {
        if !p.score().is_finite() {
            return Err(Error::NonFiniteScore(i));
        }
        if p.is_positive() {
            pos += 1;
        }
    }
    let neg = preds.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::RocUndefined {
            positives: pos,
            negatives: neg,
        });
    }
    Ok((pos, neg))
}

/// Sweeps the threshold from the highest score down. Each distinct score
/// contributes one point.
pub fn roc_curve<P: Scored>(preds: &[P]) -> Result<RocCurve> {
    let (positives, negatives) = class_counts(preds)?;
    let mut ranked: Vec<(f64, bool)> = preds.iter().map(|p| (p.score(), p.is_positive())).collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut points = Vec::with_capacity(ranked.len() + 1);
    points.push(RocPoint { fpr: 0.0, tpr: 0.0 });
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < ranked.len() {
        let score = ranked[i].0;
        while i < ranked.len() && ranked[i].0 == score {
            if ranked[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            fpr: fp as f64 / negatives as f64,
            tpr: tp as f64 / positives as f64,
        });
    }
    Ok(RocCurve {
        points,
        positives,
        negatives,
    })
}

pub fn auc_trapezoid(curve: &RocCurve) -> f64 {
    curve
        .points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[0].tpr + w[1].tpr) * 0.5)
        .sum()
}

/// Probability that a random positive outscores a random negative, ties
/// counted as one half.
pub fn auc_rank<P: Scored>(preds: &[P]) -> Result<f64> {
    let (positives, negatives) = class_counts(preds)?;
    let mut ranked: Vec<(f64, bool)> = preds.iter().map(|p| (p.score(), p.is_positive())).collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut concordant: u128 = 0;
    let mut tied: u128 = 0;
    let mut negatives_below: u128 = 0;
    let mut i = 0;
    while i < ranked.len() {
        let score = ranked[i].0;
        let (mut pos, mut neg) = (0u128, 0u128);
        while i < ranked.len() && ranked[i].0 == score {
            if ranked[i].1 {
                pos += 1;
            } else {
                neg += 1;
            }
            i += 1;
        }
        concordant += pos * negatives_below;
        tied += pos * neg;
        negatives_below += neg;
    }
    let pairs = positives as f64 * negatives as f64;
    Ok((concordant as f64 + 0.5 * tied as f64) / pairs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1Score {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: ConfusionCounts,
}

/// A prediction is positive iff `score >= threshold`.
pub fn confusion_at_threshold<P: Scored>(preds: &[P], threshold: f64) -> ConfusionCounts {
    let mut c = ConfusionCounts::default();
    for p in preds {
        match (p.score() >= threshold, p.is_positive()) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    c
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Degenerate 0/0 ratios are reported as 0.
pub fn f1_at_threshold<P: Scored>(preds: &[P], threshold: f64) -> F1Score {
    let counts = confusion_at_threshold(preds, threshold);
    let precision = ratio(counts.tp, counts.tp + counts.fp);
    let recall = ratio(counts.tp, counts.tp + counts.fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    F1Score {
        precision,
        recall,
        f1,
        counts,
    }
}
