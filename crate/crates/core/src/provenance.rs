//! Artifact provenance: a one-line header naming the stage, seed, config hash
//! and dataset lineage an artifact was produced from.
//!
//! A raw dataset's lineage is a hash of its five files. A split variant's
//! lineage is derived from its parent's, so the full variant, the training
//! variant and the ground truth matching each are all distinguishable.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{read_file, write_file, DatasetPaths, Timestamp};
use crate::error::{Error, Result};

pub const HEADER_PREFIX: &str = "# provenance:";
/// Written next to the tables of a split variant.
pub const VARIANT_FILE: &str = "variant.json";

const HASH_HEX_LEN: usize = 16;

fn short_hash(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    hex::encode(digest)[..HASH_HEX_LEN].to_string()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub stage: String,
    pub seed: u64,
    pub config: String,
    pub lineage: String,
}

impl Provenance {
    pub fn new(stage: &str, seed: u64, config: &str, lineage: &str) -> Self {
        Provenance {
            stage: stage.to_string(),
            seed,
            config: config.to_string(),
            lineage: lineage.to_string(),
        }
    }

    pub fn header(&self) -> String {
        self.to_string()
    }

    /// Provenance from the first header line of an artifact, if any.
    pub fn from_text(text: &str) -> Result<Option<Self>> {
        text.lines()
            .take_while(|l| l.starts_with('#'))
            .find(|l| l.starts_with(HEADER_PREFIX))
            .map(str::parse)
            .transpose()
    }

    pub fn read(path: &Path) -> Result<Option<Self>> {
        Self::from_text(&read_file(path)?)
    }

    /// Same dataset lineage; stage, seed and config may differ.
    pub fn compatible(&self, other: &Provenance) -> bool {
        self.lineage == other.lineage
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{HEADER_PREFIX} stage={} seed={} config={} lineage={}",
            self.stage, self.seed, self.config, self.lineage
        )
    }
}

impl FromStr for Provenance {
    type Err = Error;

    fn from_str(line: &str) -> Result<Self> {
        let body = line
            .strip_prefix(HEADER_PREFIX)
            .ok_or_else(|| Error::Provenance(format!("not a provenance header: {line:?}")))?;
        let (mut stage, mut seed, mut config, mut lineage) = (None, None, None, None);
        for field in body.split_whitespace() {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| Error::Provenance(format!("malformed field {field:?}")))?;
            match key {
                "stage" => stage = Some(value.to_string()),
                "seed" => {
                    seed = Some(
                        value
                            .parse()
                            .map_err(|_| Error::Provenance(format!("bad seed {value:?}")))?,
                    )
                }
                "config" => config = Some(value.to_string()),
                "lineage" => lineage = Some(value.to_string()),
                _ => {}
            }
        }
        let missing = |name: &str| Error::Provenance(format!("header lacks {name}"));
        Ok(Provenance {
            stage: stage.ok_or_else(|| missing("stage"))?,
            seed: seed.ok_or_else(|| missing("seed"))?,
            config: config.ok_or_else(|| missing("config"))?,
            lineage: lineage.ok_or_else(|| missing("lineage"))?,
        })
    }
}

/// Hash of a config's JSON serialization.
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    let json = serde_json::to_vec(config).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    Ok(short_hash(&json))
}

/// Content hash over the five tables, in fixed order.
pub fn dataset_fingerprint(paths: &DatasetPaths) -> Result<String> {
    let mut hasher = Sha256::new();
    for path in paths.all() {
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        hasher.update(name.as_bytes());
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);
    }
    Ok(hex::encode(hasher.finalize())[..HASH_HEX_LEN].to_string())
}

pub fn derive_lineage(parent: &str, step: &str) -> String {
    short_hash(format!("{parent}/{step}").as_bytes())
}

/// Metadata of a dataset produced by a temporal split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantInfo {
    pub parent: String,
    pub lineage: String,
    pub holdout_weeks: u32,
    /// Time features of this variant are measured from here.
    pub anchor: Timestamp,
}

impl VariantInfo {
    pub fn new(parent: &str, holdout_weeks: u32, anchor: Timestamp) -> Self {
        VariantInfo {
            parent: parent.to_string(),
            lineage: derive_lineage(parent, &format!("holdout={holdout_weeks}")),
            holdout_weeks,
            anchor,
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::Provenance(e.to_string()))?;
        write_file(&dir.join(VARIANT_FILE), &json)
    }

    /// `None` when `dir` holds a raw dataset.
    pub fn load(dir: &Path) -> Result<Option<Self>> {
        let path = dir.join(VARIANT_FILE);
        if !path.exists() {
            return Ok(None);
        }
        serde_json::from_str(&read_file(&path)?)
            .map(Some)
            .map_err(|e| Error::Provenance(format!("{}: {e}", path.display())))
    }
}

/// Lineage of the dataset stored in `dir`: the variant's if it is one,
/// otherwise the content fingerprint of its tables.
pub fn dataset_lineage(dir: &Path) -> Result<String> {
    match VariantInfo::load(dir)? {
        Some(info) => Ok(info.lineage),
        None => dataset_fingerprint(&DatasetPaths::in_dir(dir)),
    }
}
