//! On-disk model files: a versioned JSON envelope around either learner.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Vocabulary;
use crate::gbdt::GbdtModel;
use crate::manifest::{ModelKind, RunManifest};
use crate::multitask::MtModel;
use crate::slam::{TokenInstance, Track};

pub const MODEL_FORMAT: &str = "slamfair-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum TrainedModel {
    Gbdt(GbdtModel),
    Multitask(MtModel),
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            TrainedModel::Gbdt(_) => ModelKind::Gbdt,
            TrainedModel::Multitask(_) => ModelKind::Multitask,
        }
    }

    pub fn vocab(&self) -> &Vocabulary {
        match self {
            TrainedModel::Gbdt(m) => &m.vocab,
            TrainedModel::Multitask(m) => &m.vocab,
        }
    }

    pub fn predict(&self, instance: &TokenInstance) -> Result<f64> {
        match self {
            TrainedModel::Gbdt(m) => Ok(m.predict(instance)),
            TrainedModel::Multitask(m) => m.predict(instance),
        }
    }

    /// The learner configuration as JSON; its digest identifies the run.
    pub fn config_json(&self) -> Result<String> {
        Ok(match self {
            TrainedModel::Gbdt(m) => serde_json::to_string(&m.config)?,
            TrainedModel::Multitask(m) => serde_json::to_string(&m.config)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub manifest: RunManifest,
    pub model: TrainedModel,
}

impl ModelFile {
    pub fn new(manifest: RunManifest, model: TrainedModel) -> Self {
        ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            manifest,
            model,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string(self)?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(Error::Config(format!(
                "unsupported model file {} v{}",
                file.format, file.version
            )));
        }
        let found = file.model.vocab().digest();
        if found != file.manifest.vocab_sha256 {
            return Err(Error::VocabMismatch {
                expected: file.manifest.vocab_sha256.clone(),
                found,
            });
        }
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Errors unless the model was trained for `track`.
    pub fn check_track(&self, track: Track) -> Result<()> {
        if self.manifest.tracks.contains(&track) {
            Ok(())
        } else {
            Err(Error::UnknownTrack(format!(
                "{track} (model trained on {})",
                self.manifest
                    .tracks
                    .iter()
                    .map(Track::as_str)
                    .collect::<Vec<_>>()
                    .join(", ")
            )))
        }
    }
}
