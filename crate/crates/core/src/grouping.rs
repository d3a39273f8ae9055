//! Demographic slicing of predictions by client platform and by the
//! development status of the learner's country.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::digest::sha256_hex;
use crate::error::{Error, Result};
use crate::metrics::Prediction;
use crate::slam::{Client, TokenInstance, Track};

const BUNDLED_MAPPING: &str = include_str!("../data/countries.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Development {
    Developed,
    Developing,
    Unknown,
}

impl Development {
    pub fn as_str(&self) -> &'static str {
        match self {
            Development::Developed => "developed",
            Development::Developing => "developing",
            Development::Unknown => "unknown",
        }
    }
}

/// Country code to development status, loaded from a `CODE status` file.
#[derive(Debug, Clone)]
pub struct CountryClassification {
    mapping: BTreeMap<String, Development>,
    source_name: String,
    digest: String,
}

impl CountryClassification {
    pub fn parse(text: &str, source_name: impl Into<String>) -> Result<Self> {
        let mut mapping = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let cols: Vec<&str> = content.split_whitespace().collect();
            let [code, status] = cols.as_slice() else {
                return Err(Error::Mapping {
                    line,
                    message: format!("expected `CODE developed|developing`, got `{content}`"),
                });
            };
            if code.len() != 2 || !code.chars().all(|c| c.is_ascii_uppercase()) {
                return Err(Error::Mapping {
                    line,
                    message: format!("`{code}` is not an uppercase 2-letter code"),
                });
            }
            let status = match *status {
                "developed" => Development::Developed,
                "developing" => Development::Developing,
                other => {
                    return Err(Error::Mapping {
                        line,
                        message: format!("unknown status `{other}`"),
                    })
                }
            };
            if mapping.insert(code.to_string(), status).is_some() {
                return Err(Error::Mapping {
                    line,
                    message: format!("`{code}` listed twice"),
                });
            }
        }
        if mapping.is_empty() {
            return Err(Error::Mapping {
                line: 0,
                message: "mapping is empty".into(),
            });
        }
        Ok(CountryClassification {
            mapping,
            source_name: source_name.into(),
            digest: sha256_hex(text),
        })
    }

    /// IMF advanced economies as developed, every other listed code as developing.
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_MAPPING, "bundled:imf-advanced-economies")
            .expect("bundled country mapping is valid")
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path.display().to_string())
    }

    pub fn lookup(&self, code: &str) -> Development {
        self.mapping
            .get(code)
            .copied()
            .unwrap_or(Development::Unknown)
    }

    pub fn source_name(&self) -> &str {
        &self.source_name
    }

    /// SHA-256 of the mapping text, recorded in reports.
    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn len(&self) -> usize {
        self.mapping.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mapping.is_empty()
    }
}

/// First listed code decides.
pub fn classify_country(countries: &[String], classification: &CountryClassification) -> Development {
    countries
        .first()
        .map_or(Development::Unknown, |code| classification.lookup(code))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GroupTag {
    pub client: Client,
    pub development: Development,
    pub track: Track,
}

impl GroupTag {
    pub fn of(instance: &TokenInstance, classification: &CountryClassification) -> Self {
        GroupTag {
            client: instance.meta.client,
            development: classify_country(&instance.meta.countries, classification),
            track: instance.track,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Client,
    Development,
}

impl Dimension {
    pub fn as_str(&self) -> &'static str {
        match self {
            Dimension::Client => "client",
            Dimension::Development => "development",
        }
    }
}

impl FromStr for Dimension {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "client" => Ok(Dimension::Client),
            "development" | "country" => Ok(Dimension::Development),
            other => Err(format!("unknown dimension `{other}`")),
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One slice value along a dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Group {
    Client(Client),
    Development(Development),
}

impl Group {
    pub fn name(&self) -> &'static str {
        match self {
            Group::Client(c) => c.as_str(),
            Group::Development(d) => d.as_str(),
        }
    }

    pub fn of(tag: &GroupTag, dimension: Dimension) -> Option<Group> {
        match dimension {
            Dimension::Client => Some(Group::Client(tag.client)),
            Dimension::Development => match tag.development {
                Development::Unknown => None,
                d => Some(Group::Development(d)),
            },
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Default)]
pub struct Slices {
    pub groups: BTreeMap<Group, Vec<Prediction>>,
    /// Predictions left out because their country has no classification.
    pub excluded_unknown: usize,
}

impl Slices {
    /// Groups lacking either class; no ROC curve can be built for them.
    pub fn degenerate(&self) -> Vec<Group> {
        self.groups
            .iter()
            .filter(|(_, preds)| {
                let pos = preds.iter().filter(|p| p.label.is_mistake()).count();
                pos == 0 || pos == preds.len()
            })
            .map(|(g, _)| *g)
            .collect()
    }
}

pub fn slice(predictions: &[Prediction], dimension: Dimension) -> Slices {
    let mut out = Slices::default();
    for pred in predictions {
        match Group::of(&pred.group, dimension) {
            Some(group) => out.groups.entry(group).or_default().push(pred.clone()),
            None => out.excluded_unknown += 1,
        }
    }
    out
}
