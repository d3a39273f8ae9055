//! Gradient-boosted decision trees for binary classification.
//!
//! Second-order boosting on logistic loss: each round fits a regression tree
//! to the per-instance gradients `p - y` and hessians `p (1 - p)`, choosing
//! splits by exact greedy search over sorted feature values with gain
//!
//! ```text
//! GL²/(HL+λ) + GR²/(HR+λ) − G²/(H+λ)
//! ```
//!
//! and setting leaf values to the Newton step `−G/(H+λ)`. Binary features
//! split at 0.5; an instance goes right when its value exceeds the threshold.
//!
//! If a round would raise the training loss, its leaves are halved until it
//! does not (and zeroed after ten halvings), so the recorded training loss
//! never increases.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureVector, Vocabulary};
use crate::loss::{log_loss, logit, sigmoid};
use crate::slam::{Dataset, TokenInstance};

const MAX_HALVINGS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbdtConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
    pub l2_leaf_reg: f64,
    pub seed: u64,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        GbdtConfig {
            n_trees: 100,
            max_depth: 6,
            learning_rate: 0.1,
            min_samples_leaf: 20,
            l2_leaf_reg: 1.0,
            seed: 0,
        }
    }
}

impl GbdtConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::Config("n_trees must be at least 1".into()));
        }
        if self.max_depth == 0 {
            return Err(Error::Config("max_depth must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.learning_rate) {
            return Err(Error::Config("learning_rate must lie in [0, 1]".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::Config("min_samples_leaf must be at least 1".into()));
        }
        if !(self.l2_leaf_reg >= 0.0 && self.l2_leaf_reg.is_finite()) {
            return Err(Error::Config("l2_leaf_reg must be finite and non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_value(&self, fv: &FeatureVector) -> f64 {
        let mut id = 0usize;
        loop {
            match &self.nodes[id] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    id = if fv.value(*feature) > *threshold {
                        *right as usize
                    } else {
                        *left as usize
                    };
                }
            }
        }
    }

    /// Depth of the deepest leaf; a lone leaf has depth 0.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], id: usize) -> usize {
            match &nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => {
                    1 + walk(nodes, *left as usize).max(walk(nodes, *right as usize))
                }
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaves(&self) -> impl Iterator<Item = f64> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { value } => Some(*value),
            _ => None,
        })
    }

    fn scale_leaves(&mut self, factor: f64) {
        for node in &mut self.nodes {
            if let Node::Leaf { value } = node {
                *value *= factor;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub config: GbdtConfig,
    pub base_score: f64,
    pub trees: Vec<Tree>,
    /// Mean training log-loss before boosting and after each round.
    pub train_loss: Vec<f64>,
    pub vocab: Vocabulary,
}

impl GbdtModel {
    pub fn margin(&self, fv: &FeatureVector) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.leaf_value(fv)).sum();
        self.base_score + self.config.learning_rate * sum
    }

    pub fn predict_vector(&self, fv: &FeatureVector) -> f64 {
        sigmoid(self.margin(fv))
    }

    pub fn predict(&self, instance: &TokenInstance) -> f64 {
        self.predict_vector(&self.vocab.encode(instance))
    }
}

pub fn predict_gbdt(model: &GbdtModel, instance: &TokenInstance) -> f64 {
    model.predict(instance)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: u32,
    pub threshold: f64,
    pub gain: f64,
    pub left_count: usize,
    pub right_count: usize,
}

fn score_term(g: f64, h: f64, lambda: f64) -> f64 {
    let denom = h + lambda;
    if denom > 0.0 {
        g * g / denom
    } else {
        0.0
    }
}

pub fn split_gain(gl: f64, hl: f64, gr: f64, hr: f64, lambda: f64) -> f64 {
    score_term(gl, hl, lambda) + score_term(gr, hr, lambda) - score_term(gl + gr, hl + hr, lambda)
}

/// Best threshold on one feature for the given samples, by exhaustive scan
/// of the sorted distinct values. `None` when no split has positive gain
/// while leaving `min_samples_leaf` samples on each side.
pub fn best_split(
    samples: &[usize],
    feature: u32,
    rows: &[FeatureVector],
    gradients: &[f64],
    hessians: &[f64],
    config: &GbdtConfig,
) -> Option<SplitCandidate> {
    let mut vals: Vec<(f64, f64, f64)> = samples
        .iter()
        .map(|&i| (rows[i].value(feature), gradients[i], hessians[i]))
        .collect();
    vals.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (g_total, h_total) = vals
        .iter()
        .fold((0.0, 0.0), |(g, h), v| (g + v.1, h + v.2));

    let n = vals.len();
    let mut best: Option<SplitCandidate> = None;
    let (mut gl, mut hl) = (0.0, 0.0);
    for i in 0..n.saturating_sub(1) {
        gl += vals[i].1;
        hl += vals[i].2;
        if vals[i].0 == vals[i + 1].0 {
            continue;
        }
        let left = i + 1;
        if left < config.min_samples_leaf || n - left < config.min_samples_leaf {
            continue;
        }
        let gain = split_gain(gl, hl, g_total - gl, h_total - hl, config.l2_leaf_reg);
        if gain > 0.0 && best.is_none_or(|b| gain > b.gain) {
            let mid = 0.5 * (vals[i].0 + vals[i + 1].0);
            let threshold = if mid < vals[i + 1].0 { mid } else { vals[i].0 };
            best = Some(SplitCandidate {
                feature,
                threshold,
                gain,
                left_count: left,
                right_count: n - left,
            });
        }
    }
    best
}

struct Grower<'a> {
    rows: &'a [FeatureVector],
    grads: &'a [f64],
    hess: &'a [f64],
    config: &'a GbdtConfig,
    numeric_dims: Vec<u32>,
    g_acc: Vec<f64>,
    h_acc: Vec<f64>,
    n_acc: Vec<usize>,
    touched: Vec<u32>,
    nodes: Vec<Node>,
}

impl<'a> Grower<'a> {
    fn new(
        rows: &'a [FeatureVector],
        grads: &'a [f64],
        hess: &'a [f64],
        config: &'a GbdtConfig,
        vocab: &Vocabulary,
    ) -> Self {
        let dims = vocab.total_dims() as usize;
        Grower {
            rows,
            grads,
            hess,
            config,
            numeric_dims: vocab.numeric_range().map(|r| r.collect()).unwrap_or_default(),
            g_acc: vec![0.0; dims],
            h_acc: vec![0.0; dims],
            n_acc: vec![0; dims],
            touched: Vec::new(),
            nodes: Vec::new(),
        }
    }

    /// Binary features are scored from per-dimension sums over the active
    /// entries; this yields the same candidate as `best_split` at 0.5.
    fn find_split(&mut self, samples: &[usize]) -> Option<SplitCandidate> {
        let lambda = self.config.l2_leaf_reg;
        let min_leaf = self.config.min_samples_leaf;
        let n = samples.len();
        let (mut g_total, mut h_total) = (0.0, 0.0);
        for &i in samples {
            g_total += self.grads[i];
            h_total += self.hess[i];
            for &d in &self.rows[i].indices {
                let d = d as usize;
                if self.n_acc[d] == 0 {
                    self.touched.push(d as u32);
                }
                self.n_acc[d] += 1;
                self.g_acc[d] += self.grads[i];
                self.h_acc[d] += self.hess[i];
            }
        }
        self.touched.sort_unstable();

        let mut best: Option<SplitCandidate> = None;
        for &d in &self.touched {
            let du = d as usize;
            let right = self.n_acc[du];
            let left = n - right;
            if left >= min_leaf && right >= min_leaf {
                let (gr, hr) = (self.g_acc[du], self.h_acc[du]);
                let gain = split_gain(g_total - gr, h_total - hr, gr, hr, lambda);
                if gain > 0.0 && best.is_none_or(|b| gain > b.gain) {
                    best = Some(SplitCandidate {
                        feature: d,
                        threshold: 0.5,
                        gain,
                        left_count: left,
                        right_count: right,
                    });
                }
            }
            self.n_acc[du] = 0;
            self.g_acc[du] = 0.0;
            self.h_acc[du] = 0.0;
        }
        self.touched.clear();

        for &d in &self.numeric_dims {
            if let Some(c) = best_split(samples, d, self.rows, self.grads, self.hess, self.config) {
                if best.is_none_or(|b| c.gain > b.gain) {
                    best = Some(c);
                }
            }
        }
        best
    }

    fn grow(&mut self, samples: Vec<usize>, depth: usize) -> u32 {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { value: 0.0 });

        if depth < self.config.max_depth && samples.len() >= 2 * self.config.min_samples_leaf {
            if let Some(split) = self.find_split(&samples) {
                let (right, left): (Vec<usize>, Vec<usize>) = samples
                    .iter()
                    .partition(|&&i| self.rows[i].value(split.feature) > split.threshold);
                let left_id = self.grow(left, depth + 1);
                let right_id = self.grow(right, depth + 1);
                self.nodes[id] = Node::Split {
                    feature: split.feature,
                    threshold: split.threshold,
                    left: left_id,
                    right: right_id,
                };
                return id as u32;
            }
        }

        let g: f64 = samples.iter().map(|&i| self.grads[i]).sum();
        let h: f64 = samples.iter().map(|&i| self.hess[i]).sum();
        let denom = h + self.config.l2_leaf_reg;
        let value = if denom > 0.0 { -g / denom } else { 0.0 };
        self.nodes[id] = Node::Leaf { value };
        id as u32
    }
}

/// Fits one tree to the given gradients and hessians.
pub fn fit_tree(
    rows: &[FeatureVector],
    gradients: &[f64],
    hessians: &[f64],
    config: &GbdtConfig,
    vocab: &Vocabulary,
) -> Tree {
    let mut grower = Grower::new(rows, gradients, hessians, config, vocab);
    grower.grow((0..rows.len()).collect(), 0);
    Tree {
        nodes: grower.nodes,
    }
}

fn mean_loss(margins: &[f64], targets: &[f64]) -> f64 {
    margins
        .iter()
        .zip(targets)
        .map(|(&m, &y)| log_loss(m, y))
        .sum::<f64>()
        / margins.len() as f64
}

pub(crate) fn labeled_targets(train: &Dataset) -> Result<Vec<f64>> {
    let mut targets = Vec::with_capacity(train.instances.len());
    for inst in &train.instances {
        match inst.label {
            Some(l) => targets.push(f64::from(l.bit())),
            None => {
                let missing = train.instances.iter().filter(|i| i.label.is_none()).count();
                return Err(Error::MissingLabel {
                    id: inst.instance_id.clone(),
                    missing,
                });
            }
        }
    }
    let positives = targets.iter().filter(|&&y| y > 0.5).count();
    if positives == 0 || positives == targets.len() {
        return Err(Error::SingleClass(format!(
            "track {} training data has a single class ({positives} mistakes of {})",
            train.track,
            targets.len()
        )));
    }
    Ok(targets)
}

pub fn train_gbdt(train: &Dataset, vocab: &Vocabulary, config: &GbdtConfig) -> Result<GbdtModel> {
    config.validate()?;
    let targets = labeled_targets(train)?;
    let rows: Vec<FeatureVector> = train.instances.iter().map(|i| vocab.encode(i)).collect();

    let rate = targets.iter().sum::<f64>() / targets.len() as f64;
    let base_score = logit(rate);
    let mut margins = vec![base_score; rows.len()];
    let mut train_loss = vec![mean_loss(&margins, &targets)];
    let mut trees = Vec::with_capacity(config.n_trees);

    let mut grads = vec![0.0; rows.len()];
    let mut hess = vec![0.0; rows.len()];
    let mut outputs = vec![0.0; rows.len()];
    let mut trial = vec![0.0; rows.len()];

    for round in 0..config.n_trees {
        for i in 0..rows.len() {
            let p = sigmoid(margins[i]);
            grads[i] = p - targets[i];
            hess[i] = p * (1.0 - p);
        }
        let mut tree = fit_tree(&rows, &grads, &hess, config, vocab);
        for (out, fv) in outputs.iter_mut().zip(&rows) {
            *out = tree.leaf_value(fv);
        }

        let prev = *train_loss.last().expect("initial loss recorded");
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            for i in 0..rows.len() {
                trial[i] = margins[i] + config.learning_rate * scale * outputs[i];
            }
            let loss = mean_loss(&trial, &targets);
            if loss <= prev {
                accepted = Some(loss);
                break;
            }
            scale *= 0.5;
        }
        let loss = match accepted {
            Some(loss) => {
                std::mem::swap(&mut margins, &mut trial);
                loss
            }
            None => {
                scale = 0.0;
                prev
            }
        };
        if scale != 1.0 {
            log::debug!("round {round}: leaves scaled by {scale} to keep training loss monotone");
            tree.scale_leaves(scale);
        }
        train_loss.push(loss);
        trees.push(tree);
    }

    Ok(GbdtModel {
        config: config.clone(),
        base_score,
        trees,
        train_loss,
        vocab: vocab.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::build_vocab;
    use crate::slam::{Split, Track};

    fn fv(indices: &[u32]) -> FeatureVector {
        FeatureVector {
            indices: indices.to_vec(),
            numeric: vec![],
        }
    }

    fn lenient() -> GbdtConfig {
        GbdtConfig {
            min_samples_leaf: 1,
            l2_leaf_reg: 0.0,
            ..GbdtConfig::default()
        }
    }

    #[test]
    fn clean_split_gain() {
        let rows = vec![fv(&[]), fv(&[]), fv(&[3]), fv(&[3])];
        let g = [-1.0, -1.0, 1.0, 1.0];
        let h = [1.0; 4];
        let c = best_split(&[0, 1, 2, 3], 3, &rows, &g, &h, &lenient()).unwrap();
        assert_eq!(c.threshold, 0.5);
        assert_eq!(c.gain, 4.0);
        assert_eq!((c.left_count, c.right_count), (2, 2));
    }

    #[test]
    fn constant_feature_has_no_split() {
        let rows = vec![fv(&[1]); 4];
        let g = [-1.0, -1.0, 1.0, 1.0];
        let h = [1.0; 4];
        assert!(best_split(&[0, 1, 2, 3], 1, &rows, &g, &h, &lenient()).is_none());
        assert!(best_split(&[0, 1, 2, 3], 2, &rows, &g, &h, &lenient()).is_none());
    }

    #[test]
    fn min_samples_leaf_blocks_split() {
        let rows = vec![fv(&[]), fv(&[]), fv(&[3]), fv(&[3])];
        let g = [-1.0, -1.0, 1.0, 1.0];
        let h = [1.0; 4];
        let cfg = GbdtConfig {
            min_samples_leaf: 3,
            ..lenient()
        };
        assert!(best_split(&[0, 1, 2, 3], 3, &rows, &g, &h, &cfg).is_none());
    }

    #[test]
    fn numeric_threshold_is_midpoint() {
        let rows: Vec<FeatureVector> = [0.1, 0.2, 0.6, 0.9]
            .iter()
            .map(|&v| FeatureVector {
                indices: vec![],
                numeric: vec![(7, v)],
            })
            .collect();
        let g = [-1.0, -1.0, 1.0, 1.0];
        let h = [1.0; 4];
        let c = best_split(&[0, 1, 2, 3], 7, &rows, &g, &h, &lenient()).unwrap();
        assert!((c.threshold - 0.4).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        assert!(GbdtConfig::default().validate().is_ok());
        assert!(GbdtConfig { n_trees: 0, ..GbdtConfig::default() }.validate().is_err());
        assert!(GbdtConfig { max_depth: 0, ..GbdtConfig::default() }.validate().is_err());
        assert!(GbdtConfig { learning_rate: 1.5, ..GbdtConfig::default() }.validate().is_err());
    }

    fn tiny_dataset(labels: &[u8]) -> Dataset {
        let mut text = String::from(
            "# user:u1 countries:US days:1 client:web session:lesson format:listen time:5\n",
        );
        for (i, l) in labels.iter().enumerate() {
            let word = if i % 2 == 0 { "uno" } else { "dos" };
            text.push_str(&format!("id{i} {word} NUM _ obj 0 {l}\n"));
        }
        Dataset::read(text.as_bytes(), Track::EsEn, Split::Train).unwrap()
    }

    #[test]
    fn single_class_rejected() {
        let ds = tiny_dataset(&[0, 0, 0, 0]);
        let vocab = build_vocab(&ds, 1).unwrap();
        assert!(matches!(
            train_gbdt(&ds, &vocab, &GbdtConfig::default()),
            Err(Error::SingleClass(_))
        ));
    }

    #[test]
    fn newton_step_on_four_instances() {
        // uno: labels 1, 1; dos: labels 1, 0. Positive rate 3/4.
        let ds = tiny_dataset(&[1, 1, 1, 0]);
        let vocab = build_vocab(&ds, 1).unwrap();
        let cfg = GbdtConfig {
            n_trees: 1,
            max_depth: 1,
            learning_rate: 1.0,
            min_samples_leaf: 1,
            l2_leaf_reg: 1.0,
            seed: 0,
        };
        let model = train_gbdt(&ds, &vocab, &cfg).unwrap();
        assert!((model.base_score - 3f64.ln()).abs() < 1e-12);

        // p0 = 0.75 everywhere; g = p - y, h = p(1-p) = 0.1875.
        // uno leaf: G = 2(-0.25) = -0.5, H = 0.375 -> 0.5 / 1.375
        // dos leaf: G = -0.25 + 0.75 = 0.5, H = 0.375 -> -0.5 / 1.375
        let uno_leaf = 0.5 / 1.375;
        let dos_leaf = -0.5 / 1.375;
        let tree = &model.trees[0];
        assert_eq!(tree.depth(), 1);
        let p_uno = model.predict(&ds.instances[0]);
        let p_dos = model.predict(&ds.instances[1]);
        let expect = |leaf: f64| 1.0 / (1.0 + (-(3f64.ln() + leaf)).exp());
        assert!((p_uno - expect(uno_leaf)).abs() < 1e-12);
        assert!((p_dos - expect(dos_leaf)).abs() < 1e-12);
        assert!(model.train_loss[1] < model.train_loss[0]);
    }

    #[test]
    fn zero_learning_rate_predicts_base_rate() {
        let ds = tiny_dataset(&[1, 0, 1, 0, 0, 1, 0, 1]);
        let vocab = build_vocab(&ds, 1).unwrap();
        let cfg = GbdtConfig {
            n_trees: 5,
            learning_rate: 0.0,
            min_samples_leaf: 1,
            ..GbdtConfig::default()
        };
        let model = train_gbdt(&ds, &vocab, &cfg).unwrap();
        assert_eq!(model.base_score, 0.0);
        for inst in &ds.instances {
            assert_eq!(model.predict(inst), 0.5);
        }
        assert_eq!(model.trees.len(), 5);
    }

    #[test]
    fn unlabeled_training_data_rejected() {
        let mut ds = tiny_dataset(&[1, 0]);
        ds.instances[1].label = None;
        let vocab = build_vocab(&ds, 1).unwrap();
        assert!(matches!(
            train_gbdt(&ds, &vocab, &GbdtConfig::default()),
            Err(Error::MissingLabel { .. })
        ));
    }
}
