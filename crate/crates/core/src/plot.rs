//! SVG rendering of a pair of ROC curves with the region between them
//! shaded. The shaded area equals the pair's ABROCA.

use std::fmt::Write;

use crate::fairness::{crossings, merged_breakpoints, tpr_limits};
use crate::metrics::{auc_trapezoid, RocCurve};

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 520.0;
const LEFT: f64 = 70.0;
const TOP: f64 = 40.0;
const SIDE: f64 = 380.0;
const COLOR_A: &str = "#1f77b4";
const COLOR_B: &str = "#d62728";

fn px(fpr: f64) -> f64 {
    LEFT + fpr * SIDE
}

fn py(tpr: f64) -> f64 {
    TOP + (1.0 - tpr) * SIDE
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn push_point(out: &mut Vec<(f64, f64)>, p: (f64, f64)) {
    if out.last() != Some(&p) {
        out.push(p);
    }
}

/// Outline of the region between the two curves, in (fpr, tpr) space:
/// along the upper envelope left to right, then the lower one back.
pub fn between_region(a: &RocCurve, b: &RocCurve) -> Vec<(f64, f64)> {
    let mut xs = merged_breakpoints(a, b);
    xs.extend(crossings(a, b).iter().map(|p| p.fpr));
    xs.sort_by(f64::total_cmp);
    xs.dedup();

    type Limits = (f64, (f64, f64), (f64, f64));
    let limits: Vec<Limits> = xs
        .iter()
        .map(|&x| (x, tpr_limits(a, x), tpr_limits(b, x)))
        .collect();
    let mut outline = Vec::new();
    for &(x, (alo, ahi), (blo, bhi)) in &limits {
        push_point(&mut outline, (x, alo.max(blo)));
        push_point(&mut outline, (x, ahi.max(bhi)));
    }
    for &(x, (alo, ahi), (blo, bhi)) in limits.iter().rev() {
        push_point(&mut outline, (x, ahi.min(bhi)));
        push_point(&mut outline, (x, alo.min(blo)));
    }
    if outline.len() > 1 && outline.first() == outline.last() {
        outline.pop();
    }
    outline
}

fn points_attr(points: impl Iterator<Item = (f64, f64)>) -> String {
    points
        .map(|(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn render_roc_plot(curve_a: &RocCurve, curve_b: &RocCurve, labels: (&str, &str), abroca: f64) -> String {
    let (name_a, name_b) = (escape(labels.0), escape(labels.1));
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, "<title>ROC curves {name_a} vs {name_b}, ABROCA {abroca:.4}</title>");
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);

    let _ = writeln!(s, r##"<g class="grid" stroke="#e0e0e0" stroke-width="1">"##);
    for i in 0..=5 {
        let v = f64::from(i) * 0.2;
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/>"#,
            px(v),
            py(0.0),
            px(v),
            py(1.0)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/>"#,
            px(0.0),
            py(v),
            px(1.0),
            py(v)
        );
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r#"<g class="ticks" fill="black">"#);
    for i in 0..=5 {
        let v = f64::from(i) * 0.2;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{v:.1}</text>"#,
            px(v),
            py(0.0) + 16.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.1}</text>"#,
            px(0.0) - 6.0,
            py(v) + 4.0
        );
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">False Positive Rate</text>"#,
        px(0.5),
        py(0.0) + 36.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" transform="rotate(-90 {:.2} {:.2})">True Positive Rate</text>"#,
        LEFT - 44.0,
        py(0.5),
        LEFT - 44.0,
        py(0.5)
    );

    let region = points_attr(between_region(curve_a, curve_b).into_iter());
    let _ = writeln!(
        s,
        r##"<polygon class="abroca-region" points="{region}" fill="#9e9e9e" fill-opacity="0.5" stroke="none"/>"##
    );
    let _ = writeln!(
        s,
        r##"<line class="chance" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#808080" stroke-dasharray="4 4"/>"##,
        px(0.0),
        py(0.0),
        px(1.0),
        py(1.0)
    );
    for (curve, color, class) in [(curve_a, COLOR_A, "curve-a"), (curve_b, COLOR_B, "curve-b")] {
        let pts = points_attr(curve.points.iter().map(|p| (p.fpr, p.tpr)));
        let _ = writeln!(
            s,
            r#"<polyline class="{class}" points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>"#
        );
    }
    let _ = writeln!(
        s,
        r#"<rect x="{:.2}" y="{:.2}" width="{SIDE}" height="{SIDE}" fill="none" stroke="black"/>"#,
        px(0.0),
        py(1.0)
    );

    let legend_y = py(0.0) + 60.0;
    for (i, (name, curve, color)) in [(&name_a, curve_a, COLOR_A), (&name_b, curve_b, COLOR_B)]
        .into_iter()
        .enumerate()
    {
        let y = legend_y + 18.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="2"/>"#,
            LEFT,
            y - 4.0,
            LEFT + 24.0,
            y - 4.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}">{name} (AUC {:.4})</text>"#,
            LEFT + 30.0,
            y,
            auc_trapezoid(curve)
        );
    }
    let _ = writeln!(
        s,
        r#"<text class="abroca" x="{:.2}" y="{:.2}" text-anchor="end">ABROCA = {abroca:.4}</text>"#,
        px(1.0),
        legend_y
    );
    let _ = writeln!(s, "</svg>");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shoelace(points: &[(f64, f64)]) -> f64 {
        let n = points.len();
        let twice: f64 = (0..n)
            .map(|i| {
                let (x0, y0) = points[i];
                let (x1, y1) = points[(i + 1) % n];
                x0 * y1 - x1 * y0
            })
            .sum();
        twice.abs() / 2.0
    }

    #[test]
    fn perfect_vs_diagonal_is_a_triangle() {
        let region = between_region(&RocCurve::perfect(), &RocCurve::diagonal());
        assert_eq!(region, vec![(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)]);
        assert!((shoelace(&region) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn identical_curves_have_empty_region() {
        let c = RocCurve::perfect();
        let region = between_region(&c, &c);
        assert_eq!(shoelace(&region), 0.0);
        let svg = render_roc_plot(&c, &c, ("ios", "android"), 0.0);
        assert!(svg.contains("ABROCA = 0.0000"));
    }

    #[test]
    fn labels_are_escaped_and_output_is_stable() {
        let a = RocCurve::perfect();
        let b = RocCurve::diagonal();
        let svg = render_roc_plot(&a, &b, ("a<b", "c&d"), 0.5);
        assert!(svg.contains("a&lt;b"));
        assert!(svg.contains("c&amp;d"));
        assert_eq!(svg, render_roc_plot(&a, &b, ("a<b", "c&d"), 0.5));
    }
}
