//! Independent oracles and generators shared by the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use proptest::prelude::*;
use slamfair::metrics::{RocCurve, RocPoint};
use slamfair::slam::{Client, Dataset, ExerciseMeta, Format, Label, Session, Split, TokenInstance, Track};

/// ROC points by evaluating every threshold separately: +inf, then each
/// distinct score from the top, counting `score >= t` as positive.
pub fn roc_oracle(preds: &[(f64, bool)]) -> Vec<(f64, f64)> {
    let pos = preds.iter().filter(|p| p.1).count();
    let neg = preds.len() - pos;
    let mut thresholds: Vec<f64> = preds.iter().map(|p| p.0).collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut out = vec![(0.0, 0.0)];
    for t in thresholds {
        let tp = preds.iter().filter(|p| p.1 && p.0 >= t).count();
        let fp = preds.iter().filter(|p| !p.1 && p.0 >= t).count();
        out.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    out
}

/// Probability that a random positive outscores a random negative, ties
/// counted half, by enumerating all pairs.
pub fn pairwise_auc(preds: &[(f64, bool)]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for p in preds.iter().filter(|p| p.1) {
        for n in preds.iter().filter(|p| !p.1) {
            pairs += 1.0;
            if p.0 > n.0 {
                wins += 1.0;
            } else if p.0 == n.0 {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// TPR at `x` from the segment equations, taking the highest TPR where the
/// curve is vertical at `x`.
pub fn tpr_at(curve: &RocCurve, x: f64) -> f64 {
    let pts = &curve.points;
    let mut best = f64::NEG_INFINITY;
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if x < a.fpr || x > b.fpr {
            continue;
        }
        let y = if b.fpr == a.fpr {
            a.tpr.max(b.tpr)
        } else {
            a.tpr + (b.tpr - a.tpr) * (x - a.fpr) / (b.fpr - a.fpr)
        };
        best = best.max(y);
    }
    best
}

/// Midpoint-rule integral of |TPR_a - TPR_b| on a uniform grid of `cells`
/// cells. Evaluation walks both curves once.
pub fn grid_abroca(a: &RocCurve, b: &RocCurve, cells: usize) -> f64 {
    struct Walker<'a> {
        pts: &'a [RocPoint],
        seg: usize,
    }
    impl Walker<'_> {
        fn at(&mut self, x: f64) -> f64 {
            while self.pts[self.seg + 1].fpr < x {
                self.seg += 1;
            }
            let (p, q) = (self.pts[self.seg], self.pts[self.seg + 1]);
            if q.fpr == p.fpr {
                return q.tpr;
            }
            p.tpr + (q.tpr - p.tpr) * (x - p.fpr) / (q.fpr - p.fpr)
        }
    }
    let mut wa = Walker { pts: &a.points, seg: 0 };
    let mut wb = Walker { pts: &b.points, seg: 0 };
    let h = 1.0 / cells as f64;
    let mut sum = 0.0;
    for i in 0..cells {
        let x = (i as f64 + 0.5) * h;
        sum += (wa.at(x) - wb.at(x)).abs();
    }
    sum * h
}

/// Counts that divide 10^6, so every ROC breakpoint sits on a grid edge.
pub const GRID_FRIENDLY: [usize; 12] = [2, 4, 5, 8, 10, 16, 20, 25, 32, 40, 50, 64];

/// Random labeled scores with ties: `neg` negatives, `pos` positives, scores
/// drawn from `levels` distinct values.
pub fn scored_set(rng: &mut impl rand::Rng, pos: usize, neg: usize, levels: u32, shift: f64) -> Vec<(f64, bool)> {
    let mut out = Vec::with_capacity(pos + neg);
    for i in 0..pos + neg {
        let positive = i < pos;
        let base = f64::from(rng.random_range(0..levels)) / f64::from(levels);
        let s = if positive { base + shift } else { base };
        out.push((s, positive));
    }
    out
}

/// Proptest strategy: a prediction set of size 2..=max_n with at least one
/// of each class and plenty of tied scores.
pub fn prediction_set(max_n: usize) -> impl Strategy<Value = Vec<(f64, bool)>> {
    (2..=max_n, 1u32..40)
        .prop_flat_map(|(n, levels)| proptest::collection::vec((0..levels, any::<bool>()), n))
        .prop_map(|raw| {
            let mut v: Vec<(f64, bool)> = raw.into_iter().map(|(s, l)| (f64::from(s) / 7.0, l)).collect();
            v[0].1 = true;
            v[1].1 = false;
            v
        })
}

fn ident() -> impl Strategy<Value = String> {
    "[A-Za-z0-9+=]{1,10}"
}

fn meta_strategy() -> impl Strategy<Value = ExerciseMeta> {
    (
        ident(),
        proptest::collection::vec("[A-Z]{2}", 1..3),
        (0u32..100_000).prop_map(|d| f64::from(d) / 1000.0),
        prop::sample::select(Client::ALL.to_vec()),
        prop::sample::select(Session::ALL.to_vec()),
        prop::sample::select(Format::ALL.to_vec()),
        proptest::option::of(0u32..500),
        proptest::option::of("[A-Za-z¿?.,]{1,8}( [A-Za-z¿?.,]{1,8}){0,4}"),
        proptest::collection::vec(("x[a-z_]{0,6}", "[A-Za-z0-9.:]{0,6}"), 0..2),
    )
        .prop_map(
            |(user, countries, days, client, session, format, time, prompt, extras)| ExerciseMeta {
                user,
                countries,
                days,
                client,
                session,
                format,
                time,
                prompt,
                extras,
            },
        )
}

#[derive(Debug)]
struct RawTok {
    token: String,
    pos: String,
    morph: Vec<String>,
    dep: String,
    head: u32,
    label: bool,
}

fn token_strategy() -> impl Strategy<Value = RawTok> {
    (
        "[A-Za-zñé'.]{1,8}",
        "[A-Z]{2,5}",
        proptest::collection::vec("[A-Z][a-z]{1,5}=[A-Za-z0-9]{1,4}", 0..3),
        "[a-z:]{2,8}",
        0u32..12,
        any::<bool>(),
    )
        .prop_map(|(token, pos, morph, dep, head, label)| RawTok {
            token,
            pos,
            morph,
            dep,
            head,
            label,
        })
}

/// Proptest strategy: a well-formed dataset of up to `max_exercises`
/// exercises, labeled or not as a whole.
pub fn dataset_strategy(max_exercises: usize) -> impl Strategy<Value = Dataset> {
    (
        prop::sample::select(Track::ALL.to_vec()),
        any::<bool>(),
        proptest::collection::vec((meta_strategy(), proptest::collection::vec(token_strategy(), 1..6)), 0..max_exercises),
    )
        .prop_map(|(track, labeled, exercises)| {
            let mut ds = Dataset::empty(track, Split::Train);
            for (e, (meta, toks)) in exercises.into_iter().enumerate() {
                let meta = Arc::new(meta);
                for (t, tok) in toks.into_iter().enumerate() {
                    ds.instances.push(TokenInstance {
                        instance_id: format!("id{e:04}{t:02}"),
                        token: tok.token,
                        part_of_speech: tok.pos,
                        morph_features: tok.morph,
                        dep_label: tok.dep,
                        dep_head: tok.head,
                        label: labeled.then_some(if tok.label { Label::Mistake } else { Label::Correct }),
                        meta: Arc::clone(&meta),
                        track,
                    });
                }
            }
            ds
        })
}
