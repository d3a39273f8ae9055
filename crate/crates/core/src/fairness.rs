//! Absolute between-group ROC area (ABROCA).
//!
//! Both ROC curves are piecewise linear in FPR, so their absolute difference
//! is piecewise linear between the merged FPR breakpoints except where the
//! two curves cross. Each interval is integrated in closed form, splitting at
//! the crossing when the difference changes sign. Vertical jumps have zero
//! width and contribute nothing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grouping::{slice, Dimension};
use crate::manifest::RunManifest;
use crate::metrics::{auc_trapezoid, f1_at_threshold, roc_curve, F1Score, Prediction, RocCurve, RocPoint};
use crate::slam::Track;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// TPR just left and just right of `fpr`. They differ only where the curve
/// is vertical.
pub fn tpr_limits(curve: &RocCurve, fpr: f64) -> (f64, f64) {
    let x = fpr.clamp(0.0, 1.0);
    let pts = &curve.points;
    let first_at = pts.partition_point(|p| p.fpr < x);
    let past = pts.partition_point(|p| p.fpr <= x);
    if past > first_at {
        return (pts[first_at].tpr, pts[past - 1].tpr);
    }
    let (p0, p1) = (pts[first_at - 1], pts[first_at]);
    let t = p0.tpr + (p1.tpr - p0.tpr) * (x - p0.fpr) / (p1.fpr - p0.fpr);
    (t, t)
}

/// Linear interpolation along the curve; at a vertical jump the supremum TPR
/// is returned.
pub fn interpolate_tpr(curve: &RocCurve, fpr_grid: &[f64]) -> Vec<f64> {
    fpr_grid.iter().map(|&x| tpr_limits(curve, x).1).collect()
}

/// Sorted, deduplicated FPR breakpoints of both curves.
pub(crate) fn merged_breakpoints(a: &RocCurve, b: &RocCurve) -> Vec<f64> {
    let mut xs: Vec<f64> = a.points.iter().chain(&b.points).map(|p| p.fpr).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs
}

/// Integral of |d| over an interval of width `w` on which d is linear from
/// `d0` to `d1`.
fn linear_abs_area(d0: f64, d1: f64, w: f64) -> f64 {
    if d0 * d1 >= 0.0 {
        0.5 * w * (d0.abs() + d1.abs())
    } else {
        0.5 * w * (d0 * d0 + d1 * d1) / (d0.abs() + d1.abs())
    }
}

pub fn abroca(curve_a: &RocCurve, curve_b: &RocCurve) -> f64 {
    let xs = merged_breakpoints(curve_a, curve_b);
    let mut area = 0.0;
    for w in xs.windows(2) {
        let (x0, x1) = (w[0], w[1]);
        let d0 = tpr_limits(curve_a, x0).1 - tpr_limits(curve_b, x0).1;
        let d1 = tpr_limits(curve_a, x1).0 - tpr_limits(curve_b, x1).0;
        area += linear_abs_area(d0, d1, x1 - x0);
    }
    area.clamp(0.0, 1.0)
}

/// Points where the two curves cross strictly inside a breakpoint interval.
pub fn crossings(curve_a: &RocCurve, curve_b: &RocCurve) -> Vec<RocPoint> {
    let xs = merged_breakpoints(curve_a, curve_b);
    let mut out = Vec::new();
    for w in xs.windows(2) {
        let (x0, x1) = (w[0], w[1]);
        let (a0, b0) = (tpr_limits(curve_a, x0).1, tpr_limits(curve_b, x0).1);
        let (a1, b1) = (tpr_limits(curve_a, x1).0, tpr_limits(curve_b, x1).0);
        let (d0, d1) = (a0 - b0, a1 - b1);
        if d0 * d1 < 0.0 {
            let r = d0.abs() / (d0.abs() + d1.abs());
            out.push(RocPoint {
                fpr: x0 + r * (x1 - x0),
                tpr: a0 + r * (a1 - a0),
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbrocaResult {
    pub group_a: String,
    pub group_b: String,
    pub abroca: f64,
    pub auc_a: f64,
    pub auc_b: f64,
    pub n_a: usize,
    pub n_b: usize,
    pub curve_a: RocCurve,
    pub curve_b: RocCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group: String,
    pub n: usize,
    pub positives: usize,
    pub auc: f64,
    pub f1: F1Score,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedGroup {
    pub group: String,
    pub n: usize,
    pub positives: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditOptions {
    /// Groups with fewer predictions are skipped.
    pub min_group_size: usize,
    pub threshold: f64,
}

impl Default for AuditOptions {
    fn default() -> Self {
        AuditOptions {
            min_group_size: 50,
            threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbrocaReport {
    pub schema_version: u32,
    pub track: Track,
    pub dimension: Dimension,
    pub threshold: f64,
    pub min_group_size: usize,
    pub excluded_unknown: usize,
    pub groups: Vec<GroupSummary>,
    pub results: Vec<AbrocaResult>,
    pub skipped: Vec<SkippedGroup>,
    pub manifest: Option<RunManifest>,
}

impl AbrocaReport {
    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    /// One row per pair: group 1, group 2, track, then the model's ABROCA,
    /// followed by per-group AUC and counts.
    pub fn to_csv(&self) -> String {
        let model = self
            .manifest
            .as_ref()
            .map_or("model", |m| m.model_kind.as_str());
        let mut out = format!(
            "group_1,group_2,track,{model}_abroca,auc_1,auc_2,n_1,n_2\n"
        );
        for r in &self.results {
            out.push_str(&format!(
                "{},{},{},{:.6},{:.6},{:.6},{},{}\n",
                r.group_a, r.group_b, self.track, r.abroca, r.auc_a, r.auc_b, r.n_a, r.n_b
            ));
        }
        out
    }
}

/// ABROCA for every unordered pair of valid groups along `dimension`.
pub fn group_audit(
    preds: &[Prediction],
    dimension: Dimension,
    options: &AuditOptions,
) -> Result<AbrocaReport> {
    let track = match preds.first() {
        None => return Err(Error::TooFewGroups { found: 0 }),
        Some(p) => p.group.track,
    };
    if preds.iter().any(|p| p.group.track != track) {
        return Err(Error::Config("predictions span several tracks".into()));
    }

    let slices = slice(preds, dimension);
    let mut valid: Vec<(String, Vec<Prediction>, RocCurve)> = Vec::new();
    let mut skipped = Vec::new();
    let mut groups = Vec::new();
    for (group, members) in slices.groups {
        let name = group.name().to_string();
        let positives = members.iter().filter(|p| p.label.is_mistake()).count();
        let reason = if members.len() < options.min_group_size {
            Some(format!("fewer than {} predictions", options.min_group_size))
        } else if positives == 0 || positives == members.len() {
            Some("single class".to_string())
        } else {
            None
        };
        if let Some(reason) = reason {
            skipped.push(SkippedGroup {
                group: name,
                n: members.len(),
                positives,
                reason,
            });
            continue;
        }
        let curve = roc_curve(&members)?;
        groups.push(GroupSummary {
            group: name.clone(),
            n: members.len(),
            positives,
            auc: auc_trapezoid(&curve),
            f1: f1_at_threshold(&members, options.threshold),
        });
        valid.push((name, members, curve));
    }
    if valid.len() < 2 {
        return Err(Error::TooFewGroups { found: valid.len() });
    }

    valid.sort_by(|a, b| a.0.cmp(&b.0));
    groups.sort_by(|a, b| a.group.cmp(&b.group));
    skipped.sort_by(|a, b| a.group.cmp(&b.group));

    let mut results = Vec::new();
    for i in 0..valid.len() {
        for j in i + 1..valid.len() {
            let (ref name_a, ref preds_a, ref curve_a) = valid[i];
            let (ref name_b, ref preds_b, ref curve_b) = valid[j];
            results.push(AbrocaResult {
                group_a: name_a.clone(),
                group_b: name_b.clone(),
                abroca: abroca(curve_a, curve_b),
                auc_a: auc_trapezoid(curve_a),
                auc_b: auc_trapezoid(curve_b),
                n_a: preds_a.len(),
                n_b: preds_b.len(),
                curve_a: curve_a.clone(),
                curve_b: curve_b.clone(),
            });
        }
    }

    Ok(AbrocaReport {
        schema_version: REPORT_SCHEMA_VERSION,
        track,
        dimension,
        threshold: options.threshold,
        min_group_size: options.min_group_size,
        excluded_unknown: slices.excluded_unknown,
        groups,
        results,
        skipped,
        manifest: None,
    })
}
