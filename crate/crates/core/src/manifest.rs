//! Reproducibility envelope written alongside every model and report.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::digest::sha256_hex;
use crate::error::Result;
use crate::slam::{Split, Track};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Gbdt,
    Multitask,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Gbdt => "gbdt",
            ModelKind::Multitask => "multitask",
        }
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "gbdt" => Ok(ModelKind::Gbdt),
            "multitask" => Ok(ModelKind::Multitask),
            other => Err(format!("unknown model kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingInfo {
    pub source: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub tracks: Vec<Track>,
    pub model_kind: ModelKind,
    /// Split of the data a report was computed on; `None` for training runs.
    pub split: Option<Split>,
    pub config_sha256: String,
    pub vocab_sha256: String,
    /// File name to SHA-256 of every input data file.
    pub datasets: BTreeMap<String, String>,
    pub country_mapping: Option<MappingInfo>,
    pub threshold: Option<f64>,
    /// Seconds since the Unix epoch, only when requested or when
    /// `SOURCE_DATE_EPOCH` is set, so repeated runs stay byte-identical.
    pub created_unix: Option<u64>,
}

impl RunManifest {
    pub fn new(model_kind: ModelKind, tracks: Vec<Track>, config_sha256: String, vocab_sha256: String) -> Self {
        RunManifest {
            tool_version: TOOL_VERSION.to_string(),
            tracks,
            model_kind,
            split: None,
            config_sha256,
            vocab_sha256,
            datasets: BTreeMap::new(),
            country_mapping: None,
            threshold: None,
            created_unix: None,
        }
    }

    pub fn record_file(&mut self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path)?;
        let name = path
            .file_name()
            .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
        self.datasets.insert(name, sha256_hex(bytes));
        Ok(())
    }

    pub fn stamp(&mut self, wall_clock: bool) {
        self.created_unix = if wall_clock {
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .ok()
                .map(|d| d.as_secs())
        } else {
            std::env::var("SOURCE_DATE_EPOCH")
                .ok()
                .and_then(|s| s.parse().ok())
        };
    }
}
