//! Run configuration shared by all pipeline stages.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::candidates::CandidateConfig;
use crate::error::{Error, Result};
use crate::evaluation::RecallMode;
use crate::experiment::ExperimentConfig;
use crate::gbdt::TrainConfig;
use crate::pipeline::TrainingMode;
use crate::provenance::config_hash;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Directory holding the five challenge tables.
    pub data: PathBuf,
    /// Directory for derived artifacts.
    pub work: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            data: PathBuf::from("data"),
            work: PathBuf::from("work"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: PathsConfig,
    pub seed: u64,
    /// Worker threads; `None` uses all cores.
    pub threads: Option<usize>,
    pub mode: TrainingMode,
    pub recall: RecallMode,
    pub models: u32,
    pub candidates: CandidateConfig,
    pub train: TrainConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let e = ExperimentConfig::default();
        PipelineConfig {
            paths: PathsConfig::default(),
            seed: e.seed,
            threads: None,
            mode: e.mode,
            recall: e.recall,
            models: e.models,
            candidates: e.candidates,
            train: e.train,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.candidates.per_category == 0 {
            return Err(Error::InvalidConfig("per_category must be positive".into()));
        }
        if self.candidates.neighbors == 0 {
            return Err(Error::InvalidConfig("neighbors must be positive".into()));
        }
        if self.models == 0 {
            return Err(Error::InvalidConfig("at least one model is required".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidConfig("threads must be positive".into()));
        }
        self.train.validate()
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            candidates: self.candidates,
            train: self.train.clone(),
            mode: self.mode,
            models: self.models,
            seed: self.seed,
            recall: self.recall,
        }
    }

    /// Hash of every setting that can change an artifact; paths and thread
    /// count are left out.
    pub fn hash(&self) -> Result<String> {
        config_hash(&self.experiment())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_hash_ignores_paths() {
        let a = PipelineConfig::default();
        a.validate().unwrap();
        let mut b = a.clone();
        b.paths.work = PathBuf::from("elsewhere");
        b.threads = Some(2);
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
        b.seed = 9;
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
    }

    #[test]
    fn rejects_bad_values() {
        for c in [
            PipelineConfig {
                models: 0,
                ..Default::default()
            },
            PipelineConfig {
                threads: Some(0),
                ..Default::default()
            },
            PipelineConfig {
                train: TrainConfig {
                    eta: 0.0,
                    ..Default::default()
                },
                ..Default::default()
            },
        ] {
            assert!(matches!(c.validate(), Err(Error::InvalidConfig(_))));
        }
    }
}
