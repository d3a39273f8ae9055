//! Shared-encoder multi-task classifier.
//!
//! Every track shares one encoder: the feature embeddings are pooled (mean
//! over active binary features plus value-weighted numeric embeddings), then
//! passed through one affine layer with `tanh`. Each track owns a logistic
//! head on top of the shared hidden layer.
//!
//! The per-example objective is log-loss plus `l2/2` times the squared norm
//! of the hidden weights, the example's own head weights, and the embedding
//! rows the example touches. Biases are not penalised. This keeps gradients
//! sparse: rows of features absent from an example get exactly zero.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureVector, Namespace, Vocabulary};
use crate::gbdt::labeled_targets;
use crate::loss::{log_loss, sigmoid};
use crate::slam::{Dataset, TokenInstance, Track};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MtConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    /// Step size for the first epoch; epoch `e` uses `learning_rate / (1 + e)`.
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for MtConfig {
    fn default() -> Self {
        MtConfig {
            embed_dim: 16,
            hidden_dim: 16,
            epochs: 20,
            batch_size: 16,
            learning_rate: 1.0,
            l2: 1e-3,
            seed: 0,
        }
    }
}

impl MtConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::Config("embed_dim and hidden_dim must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be finite and non-negative".into()));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::Config("l2 must be finite and non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Head {
    pub weight: Vec<f64>,
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtNetwork {
    pub total_dims: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    /// Row-major `total_dims x embed_dim`.
    pub embedding: Vec<f64>,
    /// Row-major `hidden_dim x embed_dim`.
    pub hidden_weight: Vec<f64>,
    pub hidden_bias: Vec<f64>,
    pub heads: BTreeMap<Track, Head>,
}

struct Activations {
    pooled: Vec<f64>,
    hidden: Vec<f64>,
    margin: f64,
}

/// Gradient of the per-example objective. Embedding rows not listed and
/// heads of other tracks are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct MtGradient {
    pub track: Track,
    pub embedding: BTreeMap<u32, Vec<f64>>,
    pub hidden_weight: Vec<f64>,
    pub hidden_bias: Vec<f64>,
    pub head_weight: Vec<f64>,
    pub head_bias: f64,
}

impl MtGradient {
    pub fn embedding_row(&self, dim: u32, embed_dim: usize) -> Vec<f64> {
        self.embedding
            .get(&dim)
            .cloned()
            .unwrap_or_else(|| vec![0.0; embed_dim])
    }

    /// Gradient for `track`'s head: zero unless it is this example's track.
    pub fn head(&self, track: Track, hidden_dim: usize) -> (Vec<f64>, f64) {
        if track == self.track {
            (self.head_weight.clone(), self.head_bias)
        } else {
            (vec![0.0; hidden_dim], 0.0)
        }
    }
}

impl MtNetwork {
    /// All-zero network with heads for `tracks`.
    pub fn zeros(total_dims: usize, embed_dim: usize, hidden_dim: usize, tracks: &[Track]) -> Self {
        MtNetwork {
            total_dims,
            embed_dim,
            hidden_dim,
            embedding: vec![0.0; total_dims * embed_dim],
            hidden_weight: vec![0.0; hidden_dim * embed_dim],
            hidden_bias: vec![0.0; hidden_dim],
            heads: tracks
                .iter()
                .map(|&t| {
                    (
                        t,
                        Head {
                            weight: vec![0.0; hidden_dim],
                            bias: 0.0,
                        },
                    )
                })
                .collect(),
        }
    }

    /// Uniform in ±1/√fan-in for weights and embeddings, zero biases.
    pub fn random<R: Rng>(
        total_dims: usize,
        embed_dim: usize,
        hidden_dim: usize,
        tracks: &[Track],
        rng: &mut R,
    ) -> Self {
        let mut net = Self::zeros(total_dims, embed_dim, hidden_dim, tracks);
        let e = 1.0 / (embed_dim as f64).sqrt();
        let h = 1.0 / (hidden_dim as f64).sqrt();
        // An embedding row is a lookup on a one-hot input, so its fan-in is 1.
        for w in &mut net.embedding {
            *w = rng.random_range(-1.0..=1.0);
        }
        for w in &mut net.hidden_weight {
            *w = rng.random_range(-e..=e);
        }
        for head in net.heads.values_mut() {
            for w in &mut head.weight {
                *w = rng.random_range(-h..=h);
            }
        }
        net
    }

    /// Starting point for training: `random`, with every out-of-vocabulary
    /// row zeroed. Those rows never see training data, so unseen values add
    /// nothing to the pooled input.
    pub fn initialize<R: Rng>(vocab: &Vocabulary, tracks: &[Track], config: &MtConfig, rng: &mut R) -> Self {
        let mut net = Self::random(
            vocab.total_dims() as usize,
            config.embed_dim,
            config.hidden_dim,
            tracks,
            rng,
        );
        for ns in Namespace::ALL {
            if let Some(d) = vocab.oov_index(ns) {
                let start = d as usize * config.embed_dim;
                net.embedding[start..start + config.embed_dim].fill(0.0);
            }
        }
        net
    }

    fn head_for(&self, track: Track) -> Result<&Head> {
        self.heads
            .get(&track)
            .ok_or_else(|| Error::UnknownTrack(track.to_string()))
    }

    fn row(&self, dim: u32) -> &[f64] {
        let start = dim as usize * self.embed_dim;
        &self.embedding[start..start + self.embed_dim]
    }

    fn activations(&self, head: &Head, fv: &FeatureVector) -> Activations {
        let mut pooled = vec![0.0; self.embed_dim];
        if !fv.indices.is_empty() {
            let inv = 1.0 / fv.indices.len() as f64;
            for &d in &fv.indices {
                for (p, e) in pooled.iter_mut().zip(self.row(d)) {
                    *p += inv * e;
                }
            }
        }
        for &(d, v) in &fv.numeric {
            for (p, e) in pooled.iter_mut().zip(self.row(d)) {
                *p += v * e;
            }
        }
        let hidden: Vec<f64> = (0..self.hidden_dim)
            .map(|j| {
                let w = &self.hidden_weight[j * self.embed_dim..(j + 1) * self.embed_dim];
                let a: f64 = w.iter().zip(&pooled).map(|(w, z)| w * z).sum();
                (a + self.hidden_bias[j]).tanh()
            })
            .collect();
        let margin = head.weight.iter().zip(&hidden).map(|(w, h)| w * h).sum::<f64>() + head.bias;
        Activations {
            pooled,
            hidden,
            margin,
        }
    }

    pub fn forward(&self, track: Track, fv: &FeatureVector) -> Result<f64> {
        let head = self.head_for(track)?;
        Ok(sigmoid(self.activations(head, fv).margin))
    }

    /// Embedding rows the example reads.
    fn active_rows(fv: &FeatureVector) -> impl Iterator<Item = u32> + '_ {
        fv.indices.iter().copied().chain(fv.numeric.iter().map(|&(d, _)| d))
    }

    /// Per-example objective: log-loss plus the sparse L2 penalty.
    pub fn objective(&self, track: Track, fv: &FeatureVector, label: f64, l2: f64) -> Result<f64> {
        let head = self.head_for(track)?;
        let act = self.activations(head, fv);
        let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        let mut penalty = sq(&self.hidden_weight) + sq(&head.weight);
        let mut rows: Vec<u32> = Self::active_rows(fv).collect();
        rows.sort_unstable();
        rows.dedup();
        for d in rows {
            penalty += sq(self.row(d));
        }
        Ok(log_loss(act.margin, label) + 0.5 * l2 * penalty)
    }

    pub fn grad(&self, track: Track, fv: &FeatureVector, label: f64, l2: f64) -> Result<MtGradient> {
        let head = self.head_for(track)?;
        let act = self.activations(head, fv);
        let dmargin = sigmoid(act.margin) - label;

        let head_weight: Vec<f64> = act
            .hidden
            .iter()
            .zip(&head.weight)
            .map(|(h, w)| dmargin * h + l2 * w)
            .collect();
        let head_bias = dmargin;

        // through tanh
        let dpre: Vec<f64> = act
            .hidden
            .iter()
            .zip(&head.weight)
            .map(|(h, w)| dmargin * w * (1.0 - h * h))
            .collect();
        let mut hidden_weight = vec![0.0; self.hidden_dim * self.embed_dim];
        let mut dpooled = vec![0.0; self.embed_dim];
        for (j, &dj) in dpre.iter().enumerate() {
            let base = j * self.embed_dim;
            for k in 0..self.embed_dim {
                let w = self.hidden_weight[base + k];
                hidden_weight[base + k] = dj * act.pooled[k] + l2 * w;
                dpooled[k] += dj * w;
            }
        }

        let mut embedding: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
        if !fv.indices.is_empty() {
            let inv = 1.0 / fv.indices.len() as f64;
            for &d in &fv.indices {
                let row = embedding.entry(d).or_insert_with(|| vec![0.0; self.embed_dim]);
                for (g, dp) in row.iter_mut().zip(&dpooled) {
                    *g += inv * dp;
                }
            }
        }
        for &(d, v) in &fv.numeric {
            let row = embedding.entry(d).or_insert_with(|| vec![0.0; self.embed_dim]);
            for (g, dp) in row.iter_mut().zip(&dpooled) {
                *g += v * dp;
            }
        }
        for (&d, row) in embedding.iter_mut() {
            for (g, e) in row.iter_mut().zip(self.row(d)) {
                *g += l2 * e;
            }
        }

        Ok(MtGradient {
            track,
            embedding,
            hidden_weight,
            hidden_bias: dpre,
            head_weight,
            head_bias,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.embedding
            .iter()
            .chain(&self.hidden_weight)
            .chain(&self.hidden_bias)
            .chain(self.heads.values().flat_map(|h| h.weight.iter().chain(std::iter::once(&h.bias))))
            .all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtModel {
    pub config: MtConfig,
    pub network: MtNetwork,
    /// Mean training log-loss per track after the last epoch.
    pub final_loss: BTreeMap<Track, f64>,
    pub vocab: Vocabulary,
}

impl MtModel {
    pub fn predict(&self, instance: &TokenInstance) -> Result<f64> {
        self.network.forward(instance.track, &self.vocab.encode(instance))
    }

    pub fn tracks(&self) -> Vec<Track> {
        self.network.heads.keys().copied().collect()
    }
}

pub fn forward(model: &MtModel, track: Track, fv: &FeatureVector) -> Result<f64> {
    model.network.forward(track, fv)
}

pub fn grad(model: &MtModel, track: Track, fv: &FeatureVector, label: f64) -> Result<MtGradient> {
    model.network.grad(track, fv, label, model.config.l2)
}

/// Summed gradients over one mini-batch.
struct BatchAccumulator {
    embedding: BTreeMap<u32, Vec<f64>>,
    hidden_weight: Vec<f64>,
    hidden_bias: Vec<f64>,
    head_weight: Vec<f64>,
    head_bias: f64,
}

impl BatchAccumulator {
    fn new(net: &MtNetwork) -> Self {
        BatchAccumulator {
            embedding: BTreeMap::new(),
            hidden_weight: vec![0.0; net.hidden_weight.len()],
            hidden_bias: vec![0.0; net.hidden_dim],
            head_weight: vec![0.0; net.hidden_dim],
            head_bias: 0.0,
        }
    }

    fn add(&mut self, g: MtGradient) {
        for (d, row) in g.embedding {
            match self.embedding.get_mut(&d) {
                Some(acc) => acc.iter_mut().zip(&row).for_each(|(a, x)| *a += x),
                None => {
                    self.embedding.insert(d, row);
                }
            }
        }
        add_into(&mut self.hidden_weight, &g.hidden_weight);
        add_into(&mut self.hidden_bias, &g.hidden_bias);
        add_into(&mut self.head_weight, &g.head_weight);
        self.head_bias += g.head_bias;
    }

    fn apply(self, net: &mut MtNetwork, track: Track, step: f64) {
        let ed = net.embed_dim;
        for (d, row) in self.embedding {
            let start = d as usize * ed;
            for (p, g) in net.embedding[start..start + ed].iter_mut().zip(&row) {
                *p -= step * g;
            }
        }
        descend(&mut net.hidden_weight, &self.hidden_weight, step);
        descend(&mut net.hidden_bias, &self.hidden_bias, step);
        let head = net.heads.get_mut(&track).expect("head exists for batch track");
        descend(&mut head.weight, &self.head_weight, step);
        head.bias -= step * self.head_bias;
    }
}

fn add_into(acc: &mut [f64], x: &[f64]) {
    acc.iter_mut().zip(x).for_each(|(a, b)| *a += b);
}

fn descend(params: &mut [f64], grads: &[f64], step: f64) {
    params.iter_mut().zip(grads).for_each(|(p, g)| *p -= step * g);
}

struct TrackData {
    track: Track,
    rows: Vec<FeatureVector>,
    targets: Vec<f64>,
}

/// Visiting order for one epoch as (track, batch) pairs. Each track's batches
/// are spread evenly over the epoch, so a small track is not finished early
/// and then left behind while the shared encoder keeps moving.
fn interleave(batches: &[Vec<Vec<usize>>]) -> Vec<(usize, usize)> {
    let mut order: Vec<(f64, usize, usize)> = batches
        .iter()
        .enumerate()
        .flat_map(|(t, bs)| {
            let n = bs.len() as f64;
            (0..bs.len()).map(move |b| ((b as f64 + 0.5) / n, t, b))
        })
        .collect();
    order.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    order.into_iter().map(|(_, t, b)| (t, b)).collect()
}

/// Joint mini-batch gradient descent over every track. Each epoch shuffles
/// every track, cuts it into batches, and interleaves the batches of all
/// tracks evenly.
pub fn train_multitask(datasets: &[&Dataset], vocab: &Vocabulary, config: &MtConfig) -> Result<MtModel> {
    config.validate()?;
    if datasets.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut data: Vec<TrackData> = Vec::new();
    for ds in datasets {
        if data.iter().any(|d| d.track == ds.track) {
            return Err(Error::Config(format!("track {} given twice", ds.track)));
        }
        if ds.instances.is_empty() {
            return Err(Error::EmptyDataset);
        }
        data.push(TrackData {
            track: ds.track,
            targets: labeled_targets(ds)?,
            rows: ds.instances.iter().map(|i| vocab.encode(i)).collect(),
        });
    }
    data.sort_by_key(|d| d.track);
    let tracks: Vec<Track> = data.iter().map(|d| d.track).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut net = MtNetwork::initialize(vocab, &tracks, config, &mut rng);

    for epoch in 0..config.epochs {
        let batches: Vec<Vec<Vec<usize>>> = data
            .iter()
            .map(|d| {
                let mut order: Vec<usize> = (0..d.rows.len()).collect();
                order.shuffle(&mut rng);
                order.chunks(config.batch_size).map(<[usize]>::to_vec).collect()
            })
            .collect();
        let rate = config.learning_rate / (1.0 + epoch as f64);
        for (t, b) in interleave(&batches) {
            let (d, batch) = (&data[t], &batches[t][b]);
            let mut acc = BatchAccumulator::new(&net);
            for &i in batch {
                acc.add(net.grad(d.track, &d.rows[i], d.targets[i], config.l2)?);
            }
            acc.apply(&mut net, d.track, rate / batch.len() as f64);
        }
        if log::log_enabled!(log::Level::Debug) {
            let losses = mean_losses(&net, &data)?;
            log::debug!("epoch {epoch}: training loss {losses:?}");
        }
    }
    if !net.is_finite() {
        return Err(Error::Config(
            "training diverged (non-finite parameters); lower the learning rate".into(),
        ));
    }

    Ok(MtModel {
        config: config.clone(),
        final_loss: mean_losses(&net, &data)?,
        network: net,
        vocab: vocab.clone(),
    })
}

fn mean_losses(net: &MtNetwork, data: &[TrackData]) -> Result<BTreeMap<Track, f64>> {
    let mut out = BTreeMap::new();
    for d in data {
        let head = net.head_for(d.track)?;
        let total: f64 = d
            .rows
            .iter()
            .zip(&d.targets)
            .map(|(fv, &y)| log_loss(net.activations(head, fv).margin, y))
            .sum();
        out.insert(d.track, total / d.rows.len() as f64);
    }
    Ok(out)
}

/// Mean log-loss of `model` on a labeled dataset.
pub fn mean_log_loss(model: &MtModel, dataset: &Dataset) -> Result<f64> {
    let targets = labeled_targets(dataset)?;
    let head = model.network.head_for(dataset.track)?;
    let total: f64 = dataset
        .instances
        .iter()
        .zip(&targets)
        .map(|(inst, &y)| log_loss(model.network.activations(head, &model.vocab.encode(inst)).margin, y))
        .sum();
    Ok(total / targets.len() as f64)
}
