//! Gradient boosted regression trees with binary logistic loss.

pub mod loss;
pub mod tree;

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{read_file, write_file};
use crate::error::{Error, Result};
use crate::matrix::{FeatureMatrix, FeatureSchema};

pub use tree::{Node, RegressionTree};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Margins are clamped to this before the sigmoid so probabilities stay inside (0, 1).
const MARGIN_LIMIT: f64 = 30.0;
const PRIOR_LIMIT: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub max_depth: u32,
    /// Minimum hessian sum in each child of a split.
    pub min_child_weight: f64,
    pub eta: f64,
    /// Minimum loss reduction for a split.
    pub gamma: f64,
    pub num_round: u32,
    /// L2 penalty on leaf weights.
    pub lambda: f64,
    /// Recorded with the model. Training draws no random numbers.
    pub seed: u64,
    pub early_stopping_rounds: Option<u32>,
    /// Starting margin; the clamped log-odds of the positive rate when unset.
    pub base_margin: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_depth: 5,
            min_child_weight: 5.0,
            eta: 0.1,
            gamma: 1.0,
            num_round: 1000,
            lambda: 1.0,
            seed: 0,
            early_stopping_rounds: Some(50),
            base_margin: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.max_depth < 1 {
            return bad("max_depth must be at least 1");
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return bad("eta must lie in (0, 1]");
        }
        if self.gamma.is_nan() || self.gamma < 0.0 {
            return bad("gamma must be non-negative");
        }
        if self.lambda.is_nan() || self.lambda < 0.0 {
            return bad("lambda must be non-negative");
        }
        if self.min_child_weight.is_nan() || self.min_child_weight < 0.0 {
            return bad("min_child_weight must be non-negative");
        }
        if self.base_margin.is_some_and(|m| !m.is_finite()) {
            return bad("base_margin must be finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub format_version: u32,
    pub config: TrainConfig,
    pub schema: FeatureSchema,
    pub base_margin: f64,
    pub trees: Vec<RegressionTree>,
    /// Mean training logloss before the first tree and after each one.
    pub train_logloss: Vec<f64>,
    /// Same for the validation matrix, when one was given.
    pub valid_logloss: Vec<f64>,
    /// Number of trees kept after early stopping.
    pub best_rounds: Option<usize>,
    #[serde(default)]
    pub provenance: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Importance {
    pub feature: String,
    pub group: String,
    pub count: u64,
}

pub fn train(train: &FeatureMatrix, valid: Option<&FeatureMatrix>, config: &TrainConfig) -> Result<GbdtModel> {
    config.validate()?;
    let labels = train.labels.as_deref().ok_or(Error::EmptyTrainingMatrix)?;
    if train.n_rows() == 0 {
        return Err(Error::EmptyTrainingMatrix);
    }
    let valid_labels = match valid {
        Some(v) => {
            train.schema.ensure_same(&v.schema)?;
            Some(
                v.labels
                    .as_deref()
                    .ok_or_else(|| Error::SchemaMismatch("validation matrix has no labels".into()))?,
            )
        }
        None => None,
    };

    let n = train.n_rows();
    let positives = labels.iter().filter(|&&y| y == 1).count();
    let base_margin = config
        .base_margin
        .unwrap_or_else(|| loss::clamped_logit(positives as f64 / n as f64, PRIOR_LIMIT));
    let columns = tree::Columns::new(n, train.n_cols(), |r, c| train.get(r, c));

    let mut margins = vec![base_margin; n];
    let mut valid_margins = valid.map(|v| vec![base_margin; v.n_rows()]).unwrap_or_default();
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];

    let mut model = GbdtModel {
        format_version: MODEL_FORMAT_VERSION,
        config: config.clone(),
        schema: train.schema.clone(),
        base_margin,
        trees: Vec::new(),
        train_logloss: vec![loss::mean_logloss(&margins, labels)],
        valid_logloss: valid_labels
            .map(|l| vec![loss::mean_logloss(&valid_margins, l)])
            .unwrap_or_default(),
        best_rounds: None,
        provenance: None,
    };
    let mut best_valid = (0usize, model.valid_logloss.first().copied().unwrap_or(f64::INFINITY));

    for round in 1..=config.num_round as usize {
        grad.par_iter_mut()
            .zip(hess.par_iter_mut())
            .zip(margins.par_iter())
            .zip(labels.par_iter())
            .for_each(|(((g, h), &m), &y)| {
                *g = loss::gradient(m, y as f64);
                *h = loss::hessian(m);
            });
        let tree = tree::grow(&columns, &grad, &hess, config);
        margins
            .par_iter_mut()
            .enumerate()
            .for_each(|(r, m)| *m += tree.predict(train.row(r)));
        model.train_logloss.push(loss::mean_logloss(&margins, labels));

        if let (Some(v), Some(vl)) = (valid, valid_labels) {
            valid_margins
                .par_iter_mut()
                .enumerate()
                .for_each(|(r, m)| *m += tree.predict(v.row(r)));
            let current = loss::mean_logloss(&valid_margins, vl);
            model.valid_logloss.push(current);
            if current < best_valid.1 {
                best_valid = (round, current);
            }
        }
        model.trees.push(tree);
        log::debug!("round {round}: train logloss {:.6}", model.train_logloss[round]);

        if let (Some(patience), Some(_)) = (config.early_stopping_rounds, valid) {
            if round - best_valid.0 >= patience as usize {
                log::info!("early stop at round {round}, keeping {} trees", best_valid.0);
                model.trees.truncate(best_valid.0);
                model.best_rounds = Some(best_valid.0);
                break;
            }
        }
    }
    if valid.is_some() && model.best_rounds.is_none() {
        model.best_rounds = Some(model.trees.len());
    }
    Ok(model)
}

impl GbdtModel {
    /// Raw score: base margin plus every tree's leaf value, summed in tree order.
    pub fn predict_margin(&self, row: &[f64]) -> f64 {
        self.trees.iter().fold(self.base_margin, |m, t| m + t.predict(row))
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        loss::sigmoid(self.predict_margin(row).clamp(-MARGIN_LIMIT, MARGIN_LIMIT))
    }

    pub fn predict_proba(&self, matrix: &FeatureMatrix) -> Result<Vec<f64>> {
        self.schema.ensure_same(&matrix.schema)?;
        Ok((0..matrix.n_rows())
            .into_par_iter()
            .map(|r| self.predict_row(matrix.row(r)))
            .collect())
    }

    /// Number of splits on each feature, in schema order.
    pub fn split_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.schema.len()];
        for tree in &self.trees {
            for (f, _) in tree.splits() {
                counts[f as usize] += 1;
            }
        }
        counts
    }

    pub fn feature_importance(&self) -> Vec<Importance> {
        self.schema
            .features()
            .iter()
            .zip(self.split_counts())
            .map(|(f, count)| Importance {
                feature: f.name.clone(),
                group: f.group.clone(),
                count,
            })
            .collect()
    }

    /// Split counts summed per group, groups in schema order.
    pub fn group_importance(&self) -> Vec<(String, u64)> {
        let mut out: Vec<(String, u64)> = Vec::new();
        for imp in self.feature_importance() {
            match out.iter_mut().find(|(g, _)| *g == imp.group) {
                Some((_, c)) => *c += imp.count,
                None => out.push((imp.group, imp.count)),
            }
        }
        out
    }

    pub fn importance_tsv(&self) -> String {
        let mut out = String::from("feature\tgroup\tcount\n");
        for imp in self.feature_importance() {
            let _ = writeln!(out, "{}\t{}\t{}", imp.feature, imp.group, imp.count);
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::ModelFormat(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let probe: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::ModelFormat(e.to_string()))?;
        match probe.get("format_version").and_then(|v| v.as_u64()) {
            Some(v) if v == MODEL_FORMAT_VERSION as u64 => {}
            Some(v) => return Err(Error::ModelFormat(format!("unsupported model version {v}"))),
            None => return Err(Error::ModelFormat("missing format_version".into())),
        }
        let model: GbdtModel = serde_json::from_value(probe).map_err(|e| Error::ModelFormat(e.to_string()))?;
        for (t, tree) in model.trees.iter().enumerate() {
            tree.validate(model.schema.len())
                .map_err(|e| Error::ModelFormat(format!("tree {t}: {e}")))?;
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_json()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&read_file(path)?)
    }
}
