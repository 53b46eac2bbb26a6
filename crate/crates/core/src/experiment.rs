//! Holdout experiment on one dataset: hide the last week, train on the week
//! before it, predict the hidden week and score against it.

use std::path::Path;

use log::info;
use serde::{Deserialize, Serialize};

use crate::candidates::{coverage, CandidateConfig, CandidateGenerator, CandidateList};
use crate::dataset::{
    build_ground_truth, load_dataset, temporal_split, Dataset, DatasetPaths, GroundTruth, LoadOptions, Timestamp, UserId,
};
use crate::error::{Error, Result};
use crate::evaluation::{total_score, RecallMode, ScoreReport};
use crate::features::FeatureContext;
use crate::gbdt::{self, GbdtModel, TrainConfig};
use crate::hashing;
use crate::provenance::{dataset_fingerprint, VariantInfo};
use crate::pipeline::{
    baseline_popular, baseline_recency, blend, build_training_file, predictions_by_user, training_matrices, Prediction,
    TrainingMode,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub candidates: CandidateConfig,
    pub train: TrainConfig,
    pub mode: TrainingMode,
    /// Models to blend; each uses its own negative sample.
    pub models: u32,
    pub seed: u64,
    pub recall: RecallMode,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            candidates: CandidateConfig::default(),
            train: TrainConfig::default(),
            mode: TrainingMode::Paper,
            models: 3,
            seed: 0,
            recall: RecallMode::Corrected,
        }
    }
}

/// A dataset variant and the timestamp its time features are measured from.
pub struct Variant {
    pub dataset: Dataset,
    pub anchor: Timestamp,
}

impl Variant {
    /// A raw dataset, anchored at its last interaction.
    pub fn raw(dataset: Dataset) -> Self {
        let anchor = dataset.events.max_timestamp().unwrap_or_default();
        Variant { dataset, anchor }
    }

    /// Load the tables in `dir` along with their lineage.
    pub fn load(dir: &Path) -> Result<(Self, String)> {
        let (dataset, report) = load_dataset(&DatasetPaths::in_dir(dir), &LoadOptions::default())?;
        info!(
            "{}: {} users, {} items, {} interactions, {} impressions, {} targets",
            dir.display(),
            report.users,
            report.items,
            report.interactions,
            report.impressions,
            report.target_users
        );
        Ok(match VariantInfo::load(dir)? {
            Some(info) => (
                Variant {
                    dataset,
                    anchor: info.anchor,
                },
                info.lineage,
            ),
            None => (Variant::raw(dataset), dataset_fingerprint(&DatasetPaths::in_dir(dir))?),
        })
    }
}

/// Split off the last `weeks` weeks; the kept part is anchored at the boundary.
pub fn holdout(dataset: &Dataset, weeks: u32) -> Result<(Variant, GroundTruth)> {
    let split = temporal_split(dataset, weeks)?;
    let truth = build_ground_truth(&split.holdout, &dataset.target_users);
    let anchor = split
        .boundary
        .or(dataset.events.max_timestamp())
        .unwrap_or_default();
    Ok((
        Variant {
            dataset: split.train,
            anchor,
        },
        truth,
    ))
}

/// Sampling seed of the `index`-th blended model.
pub fn model_seed(seed: u64, index: u32) -> u64 {
    hashing::mix(seed, index as u64)
}

/// Train the `index`-th model from candidate lists of eligible users.
pub fn train_model(
    ctx: &FeatureContext,
    lists: &[CandidateList],
    truth: &GroundTruth,
    config: &ExperimentConfig,
    index: u32,
) -> Result<GbdtModel> {
    let selection = build_training_file(lists, truth, config.mode, model_seed(config.seed, index))?;
    let (train, valid) = training_matrices(ctx, lists, &selection)?;
    info!(
        "model {index}: {} training rows, {} validation rows",
        train.n_rows(),
        valid.as_ref().map_or(0, |v| v.n_rows())
    );
    gbdt::train(&train, valid.as_ref(), &config.train)
}

/// Train `config.models` models on a training variant and its ground truth.
pub fn train_models(variant: &Variant, truth: &GroundTruth, config: &ExperimentConfig) -> Result<Vec<GbdtModel>> {
    if truth.is_empty() {
        return Err(Error::EmptyGroundTruth);
    }
    let generator = CandidateGenerator::new(&variant.dataset, config.candidates);
    let eligible: Vec<UserId> = truth.users().collect();
    let lists = generator.generate_all(&eligible);
    info!(
        "training candidates: {} users, coverage {:.3}",
        lists.len(),
        coverage(&lists, truth)?
    );
    let ctx = FeatureContext::new(&variant.dataset, variant.anchor);
    (0..config.models.max(1))
        .map(|k| train_model(&ctx, &lists, truth, config, k))
        .collect()
}

/// Blended top-30 for every target user of the variant.
pub fn predict(variant: &Variant, models: &[GbdtModel], config: &ExperimentConfig) -> Result<Vec<Prediction>> {
    let generator = CandidateGenerator::new(&variant.dataset, config.candidates);
    let users: Vec<UserId> = variant.dataset.target_users.iter().copied().collect();
    let lists = generator.generate_all(&users);
    let ctx = FeatureContext::new(&variant.dataset, variant.anchor);
    blend(&ctx, &variant.dataset, &lists, models)
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub pipeline: ScoreReport,
    pub popular: ScoreReport,
    pub recency: ScoreReport,
    pub predictions: Vec<Prediction>,
    pub models: Vec<GbdtModel>,
    pub test_truth: GroundTruth,
}

pub fn run_experiment(data: &Dataset, config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let (full, test_truth) = holdout(data, 1)?;
    if test_truth.is_empty() {
        return Err(Error::EmptyGroundTruth);
    }
    let (train_variant, train_truth) = holdout(&full.dataset, 1)?;
    let models = train_models(&train_variant, &train_truth, config)?;
    let predictions = predict(&full, &models, config)?;

    let users: Vec<UserId> = full.dataset.target_users.iter().copied().collect();
    let score = |p: &[Prediction]| total_score(&predictions_by_user(p), &test_truth, config.recall);
    let outcome = ExperimentOutcome {
        pipeline: score(&predictions)?,
        popular: score(&baseline_popular(&full.dataset, &users))?,
        recency: score(&baseline_recency(&full.dataset, &users))?,
        predictions,
        models,
        test_truth,
    };
    info!(
        "scores: pipeline {:.2}, popular {:.2}, recency {:.2}",
        outcome.pipeline.total, outcome.popular.total, outcome.recency.total
    );
    Ok(outcome)
}
