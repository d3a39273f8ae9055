//! Sparse feature encoding shared by both learners.
//!
//! Every categorical namespace owns a contiguous block of dimensions. The
//! first dimension of each block is the out-of-vocabulary slot; known values
//! follow in order of first appearance in the training data. The numeric
//! features (days, time, time-present indicator) occupy the last three
//! dimensions.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::digest::sha256_hex;
use crate::error::{Error, Result};
use crate::slam::{Dataset, TokenInstance};

pub const VOCAB_FORMAT: &str = "slamfair-vocab";
pub const VOCAB_VERSION: u32 = 1;

pub const NUMERIC_FEATURES: [&str; 3] = ["days", "time", "time_present"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Namespace {
    User,
    Token,
    PartOfSpeech,
    Morph,
    DepLabel,
    Format,
    Session,
    Client,
}

impl Namespace {
    pub const ALL: [Namespace; 8] = [
        Namespace::User,
        Namespace::Token,
        Namespace::PartOfSpeech,
        Namespace::Morph,
        Namespace::DepLabel,
        Namespace::Format,
        Namespace::Session,
        Namespace::Client,
    ];

    fn values(self, inst: &TokenInstance, out: &mut Vec<String>) {
        match self {
            Namespace::User => out.push(inst.meta.user.clone()),
            Namespace::Token => out.push(inst.token.to_lowercase()),
            Namespace::PartOfSpeech => out.push(inst.part_of_speech.clone()),
            Namespace::Morph => out.extend(inst.morph_features.iter().cloned()),
            Namespace::DepLabel => out.push(inst.dep_label.clone()),
            Namespace::Format => out.push(inst.meta.format.to_string()),
            Namespace::Session => out.push(inst.meta.session.to_string()),
            Namespace::Client => out.push(inst.meta.client.to_string()),
        }
    }
}

impl fmt::Display for Namespace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("namespace serializes");
        f.write_str(s.as_str().unwrap_or("?"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub min_count: usize,
    /// Active categorical namespaces. Inactive ones get no dimensions.
    pub namespaces: Vec<Namespace>,
    pub numeric: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            min_count: 1,
            namespaces: Namespace::ALL.to_vec(),
            numeric: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawBlock {
    namespace: Namespace,
    offset: u32,
    entries: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "RawBlock", into = "RawBlock")]
struct Block {
    namespace: Namespace,
    offset: u32,
    entries: Vec<String>,
    lookup: HashMap<String, u32>,
}

impl From<RawBlock> for Block {
    fn from(raw: RawBlock) -> Self {
        let lookup = raw
            .entries
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i as u32 + 1))
            .collect();
        Block {
            namespace: raw.namespace,
            offset: raw.offset,
            entries: raw.entries,
            lookup,
        }
    }
}

impl From<Block> for RawBlock {
    fn from(b: Block) -> Self {
        RawBlock {
            namespace: b.namespace,
            offset: b.offset,
            entries: b.entries,
        }
    }
}

impl PartialEq for Block {
    fn eq(&self, other: &Self) -> bool {
        self.namespace == other.namespace && self.offset == other.offset && self.entries == other.entries
    }
}

impl Block {
    fn size(&self) -> u32 {
        self.entries.len() as u32 + 1
    }

    fn index(&self, value: &str) -> u32 {
        self.offset + self.lookup.get(value).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    format: String,
    version: u32,
    config: FeatureConfig,
    blocks: Vec<Block>,
    numeric_offset: Option<u32>,
    total_dims: u32,
}

/// Active binary dimensions plus numeric (dimension, value) pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub indices: Vec<u32>,
    pub numeric: Vec<(u32, f64)>,
}

impl FeatureVector {
    pub fn value(&self, dim: u32) -> f64 {
        if let Some(&(_, v)) = self.numeric.iter().find(|(d, _)| *d == dim) {
            return v;
        }
        if self.indices.binary_search(&dim).is_ok() {
            1.0
        } else {
            0.0
        }
    }
}

pub fn build_vocab(train: &Dataset, min_count: usize) -> Result<Vocabulary> {
    Vocabulary::build(
        &[train],
        &FeatureConfig {
            min_count,
            ..FeatureConfig::default()
        },
    )
}

impl Vocabulary {
    /// Builds one shared vocabulary over several training sets, in order.
    pub fn build(datasets: &[&Dataset], config: &FeatureConfig) -> Result<Vocabulary> {
        if config.min_count == 0 {
            return Err(Error::Config("min_count must be at least 1".into()));
        }
        if datasets.iter().all(|d| d.instances.is_empty()) {
            return Err(Error::EmptyDataset);
        }
        let mut blocks = Vec::new();
        let mut offset = 0u32;
        let mut scratch = Vec::new();
        for ns in Namespace::ALL {
            if !config.namespaces.contains(&ns) {
                continue;
            }
            let mut order: Vec<String> = Vec::new();
            let mut counts: HashMap<String, usize> = HashMap::new();
            for inst in datasets.iter().flat_map(|d| &d.instances) {
                scratch.clear();
                ns.values(inst, &mut scratch);
                for v in scratch.drain(..) {
                    let c = counts.entry(v.clone()).or_insert(0);
                    if *c == 0 {
                        order.push(v);
                    }
                    *c += 1;
                }
            }
            let entries: Vec<String> = order
                .into_iter()
                .filter(|v| counts[v] >= config.min_count)
                .collect();
            let block = Block::from(RawBlock {
                namespace: ns,
                offset,
                entries,
            });
            offset += block.size();
            blocks.push(block);
        }
        let numeric_offset = config.numeric.then_some(offset);
        let total_dims = offset + if config.numeric { NUMERIC_FEATURES.len() as u32 } else { 0 };
        Ok(Vocabulary {
            format: VOCAB_FORMAT.to_string(),
            version: VOCAB_VERSION,
            config: config.clone(),
            blocks,
            numeric_offset,
            total_dims,
        })
    }

    pub fn total_dims(&self) -> u32 {
        self.total_dims
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.config
    }

    /// Dimension range of a namespace, OOV slot first.
    pub fn namespace_range(&self, ns: Namespace) -> Option<std::ops::Range<u32>> {
        self.blocks
            .iter()
            .find(|b| b.namespace == ns)
            .map(|b| b.offset..b.offset + b.size())
    }

    pub fn oov_index(&self, ns: Namespace) -> Option<u32> {
        self.namespace_range(ns).map(|r| r.start)
    }

    pub fn numeric_range(&self) -> Option<std::ops::Range<u32>> {
        self.numeric_offset
            .map(|o| o..o + NUMERIC_FEATURES.len() as u32)
    }

    pub fn is_numeric(&self, dim: u32) -> bool {
        self.numeric_range().is_some_and(|r| r.contains(&dim))
    }

    /// Human-readable name such as `token=casa` or `user=<oov>`.
    pub fn dimension_name(&self, dim: u32) -> String {
        if let Some(r) = self.numeric_range() {
            if r.contains(&dim) {
                return NUMERIC_FEATURES[(dim - r.start) as usize].to_string();
            }
        }
        for b in &self.blocks {
            if dim >= b.offset && dim < b.offset + b.size() {
                let local = (dim - b.offset) as usize;
                return if local == 0 {
                    format!("{}=<oov>", b.namespace)
                } else {
                    format!("{}={}", b.namespace, b.entries[local - 1])
                };
            }
        }
        format!("dim{dim}")
    }

    pub fn encode(&self, instance: &TokenInstance) -> FeatureVector {
        let mut indices = Vec::new();
        let mut scratch = Vec::new();
        for b in &self.blocks {
            scratch.clear();
            b.namespace.values(instance, &mut scratch);
            indices.extend(scratch.iter().map(|v| b.index(v)));
        }
        indices.sort_unstable();
        indices.dedup();

        let mut numeric = Vec::new();
        if let Some(o) = self.numeric_offset {
            let m = &instance.meta;
            let time = m.time.map_or(0.0, |t| f64::from(t.min(60)) / 60.0);
            numeric.push((o, m.days / 100.0));
            numeric.push((o + 1, time));
            numeric.push((o + 2, if m.time.is_some() { 1.0 } else { 0.0 }));
        }
        FeatureVector { indices, numeric }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Vocabulary> {
        let vocab: Vocabulary = serde_json::from_str(text)?;
        if vocab.format != VOCAB_FORMAT || vocab.version != VOCAB_VERSION {
            return Err(Error::Config(format!(
                "unsupported vocabulary file {} v{}",
                vocab.format, vocab.version
            )));
        }
        Ok(vocab)
    }

    pub fn digest(&self) -> String {
        sha256_hex(self.to_json().expect("vocabulary serializes"))
    }
}

pub fn encode(instance: &TokenInstance, vocab: &Vocabulary) -> FeatureVector {
    vocab.encode(instance)
}
