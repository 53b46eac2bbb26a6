use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _, Result};
use jobrec::candidates::{coverage, load_candidates, save_candidates, CandidateGenerator};
use jobrec::config::PipelineConfig;
use jobrec::dataset::{temporal_split, write_dataset, GroundTruth, KindCodes, UserId};
use jobrec::evaluation::{sample_users, total_score};
use jobrec::experiment::{train_model, Variant};
use jobrec::features::FeatureContext;
use jobrec::gbdt::GbdtModel;
use jobrec::pipeline::{
    baseline_popular, baseline_recency, blend, load_predictions, predictions_by_user, save_predictions, scores_to_tsv,
};
use jobrec::provenance::{Provenance, VariantInfo};
use jobrec::synth::{generate, SynthConfig};
use log::{info, warn};

pub struct Context {
    pub config: PipelineConfig,
    config_hash: String,
}

impl Context {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        let config_hash = config.hash()?;
        Ok(Context { config, config_hash })
    }

    fn header(&self, stage: &str, lineage: &str) -> String {
        Provenance::new(stage, self.config.seed, &self.config_hash, lineage).header()
    }

    pub fn synth(&self, users: u32, items: u32, weeks: u32, out: &Path) -> Result<()> {
        let config = SynthConfig {
            users,
            items,
            weeks,
            seed: self.config.seed,
            ..SynthConfig::default()
        };
        let generated = generate(&config)?;
        std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        write_dataset(&generated.dataset, out, &KindCodes::default())?;
        info!("wrote synthetic dataset to {}", out.display());
        Ok(())
    }

    pub fn split(&self, data: &Path, holdout_weeks: u32, out: &Path, truth_path: &Path) -> Result<()> {
        let (source, parent) = Variant::load(data)?;
        let split = temporal_split(&source.dataset, holdout_weeks)?;
        let truth = jobrec::dataset::build_ground_truth(&split.holdout, &source.dataset.target_users);
        let anchor = split.boundary.unwrap_or(source.anchor);
        let info = VariantInfo::new(&parent, holdout_weeks, anchor);
        std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        write_dataset(&split.train, out, &KindCodes::default())?;
        info.save(out)?;
        truth.save(truth_path, Some(&self.header("split", &info.lineage)))?;
        info!(
            "split {}: {} truth users, {} truth items",
            out.display(),
            truth.len(),
            truth.total_items()
        );
        Ok(())
    }

    pub fn candidates(&self, data: &Path, truth: Option<&Path>, out: &Path) -> Result<()> {
        let (variant, lineage) = Variant::load(data)?;
        let truth = truth.map(|p| self.load_truth(p, &lineage)).transpose()?;
        let users: Vec<UserId> = match &truth {
            Some(t) => t.users().collect(),
            None => variant.dataset.target_users.iter().copied().collect(),
        };
        let generator = CandidateGenerator::new(&variant.dataset, self.config.candidates);
        let lists = generator.generate_all(&users);
        if let Some(t) = &truth {
            info!("candidate coverage {:.4}", coverage(&lists, t)?);
        }
        save_candidates(out, &lists, Some(&self.header("candidates", &lineage)))?;
        info!("wrote candidates for {} users to {}", lists.len(), out.display());
        Ok(())
    }

    pub fn features(&self, data: &Path, candidates: &Path, truth: Option<&Path>, out: &Path) -> Result<()> {
        let (variant, lineage) = Variant::load(data)?;
        let lists = self.load_lists(candidates, &lineage)?;
        let truth = truth.map(|p| self.load_truth(p, &lineage)).transpose()?;
        let ctx = FeatureContext::new(&variant.dataset, variant.anchor);
        let matrix = ctx.build_matrix(&lists, truth.as_ref())?;
        matrix.save(out, Some(&self.header("features", &lineage)))?;
        info!("wrote {} x {} matrix to {}", matrix.n_rows(), matrix.n_cols(), out.display());
        Ok(())
    }

    pub fn train(
        &self,
        data: &Path,
        candidates: &Path,
        truth: &Path,
        index: u32,
        out: &Path,
        importance: Option<&Path>,
    ) -> Result<()> {
        let (variant, lineage) = Variant::load(data)?;
        let lists = self.load_lists(candidates, &lineage)?;
        let truth = self.load_truth(truth, &lineage)?;
        let ctx = FeatureContext::new(&variant.dataset, variant.anchor);
        let mut model = train_model(&ctx, &lists, &truth, &self.config.experiment(), index)?;
        model.provenance = Some(self.header("train", &lineage));
        model.save(out)?;
        if let Some(path) = importance {
            std::fs::write(path, model.importance_tsv()).with_context(|| format!("writing {}", path.display()))?;
        }
        info!("model {index}: {} trees, saved to {}", model.trees.len(), out.display());
        Ok(())
    }

    pub fn blend(
        &self,
        data: &Path,
        candidates: &Path,
        models: &[PathBuf],
        out: &Path,
        scores: Option<&Path>,
    ) -> Result<()> {
        let (variant, lineage) = Variant::load(data)?;
        let lists = self.load_lists(candidates, &lineage)?;
        let models = models
            .iter()
            .map(|p| GbdtModel::load(p).with_context(|| format!("loading {}", p.display())))
            .collect::<Result<Vec<_>>>()?;
        let ctx = FeatureContext::new(&variant.dataset, variant.anchor);
        let predictions = blend(&ctx, &variant.dataset, &lists, &models)?;
        let header = self.header(if models.len() == 1 { "predict" } else { "blend" }, &lineage);
        save_predictions(out, &predictions, Some(&header))?;
        if let Some(path) = scores {
            std::fs::write(path, scores_to_tsv(&predictions, Some(&header)))
                .with_context(|| format!("writing {}", path.display()))?;
        }
        info!("wrote predictions for {} users to {}", predictions.len(), out.display());
        Ok(())
    }

    pub fn baseline(&self, data: &Path, recency: bool, out: &Path) -> Result<()> {
        let (variant, lineage) = Variant::load(data)?;
        let users: Vec<UserId> = variant.dataset.target_users.iter().copied().collect();
        let (stage, predictions) = if recency {
            ("baseline-recency", baseline_recency(&variant.dataset, &users))
        } else {
            ("baseline-popular", baseline_popular(&variant.dataset, &users))
        };
        save_predictions(out, &predictions, Some(&self.header(stage, &lineage)))?;
        info!("wrote {stage} for {} users to {}", predictions.len(), out.display());
        Ok(())
    }

    /// One `total` line per submission.
    pub fn evaluate(
        &self,
        predictions: &[PathBuf],
        truth_path: &Path,
        report: Option<&Path>,
        sample_fraction: Option<f64>,
        force: bool,
    ) -> Result<Vec<String>> {
        let mut truth = GroundTruth::load(truth_path)?;
        let truth_prov = Provenance::read(truth_path)?;
        if let Some(fraction) = sample_fraction {
            if !(fraction > 0.0 && fraction <= 1.0) {
                bail!("sample fraction must lie in (0, 1]");
            }
            truth = sample_users(&truth, fraction, self.config.seed);
            info!("scoring a {fraction} sample: {} users", truth.len());
        }
        let mut lines = Vec::new();
        for (k, path) in predictions.iter().enumerate() {
            let prov = Provenance::read(path)?;
            match (&prov, &truth_prov) {
                (Some(p), Some(t)) if !p.compatible(t) => {
                    let msg = format!(
                        "{} (lineage {}) does not match {} (lineage {})",
                        path.display(),
                        p.lineage,
                        truth_path.display(),
                        t.lineage
                    );
                    if !force {
                        bail!("{msg}; pass --force to score anyway");
                    }
                    warn!("{msg}");
                }
                (Some(p), Some(t)) if p.config != t.config => {
                    warn!("{} was produced under a different config", path.display());
                }
                (None, _) | (_, None) => warn!("missing provenance header; lineage not checked"),
                _ => {}
            }
            let preds = load_predictions(path)?;
            let score = total_score(&predictions_by_user(&preds), &truth, self.config.recall)?;
            if k == 0 {
                if let Some(out) = report {
                    std::fs::write(out, score.to_tsv()).with_context(|| format!("writing {}", out.display()))?;
                }
            }
            lines.push(format!("total\t{:.4}\t{}", score.total, path.display()));
        }
        Ok(lines)
    }

    /// Hold out the last week of `data`, train on the week before it, and
    /// score the pipeline and both baselines on the held-out week.
    pub fn run(&self, data: &Path, work: &Path) -> Result<Vec<String>> {
        std::fs::create_dir_all(work).with_context(|| format!("creating {}", work.display()))?;
        let full = work.join("full");
        let train = work.join("train");
        let test_truth = work.join("test_truth.tsv");
        let train_truth = work.join("train_truth.tsv");
        self.split(data, 1, &full, &test_truth)?;
        self.split(&full, 1, &train, &train_truth)?;

        let train_candidates = work.join("train_candidates.tsv");
        self.candidates(&train, Some(&train_truth), &train_candidates)?;
        let models: Vec<PathBuf> = (0..self.config.models)
            .map(|k| work.join(format!("model_{k}.json")))
            .collect();
        for (k, model) in models.iter().enumerate() {
            let importance = work.join(format!("model_{k}.importance.tsv"));
            self.train(
                &train,
                &train_candidates,
                &train_truth,
                k as u32,
                model,
                Some(&importance),
            )?;
        }

        let candidates = work.join("candidates.tsv");
        let predictions = work.join("predictions.tsv");
        self.candidates(&full, None, &candidates)?;
        self.blend(
            &full,
            &candidates,
            &models,
            &predictions,
            Some(&work.join("scores.tsv")),
        )?;
        let popular = work.join("baseline_popular.tsv");
        let recency = work.join("baseline_recency.tsv");
        self.baseline(&full, false, &popular)?;
        self.baseline(&full, true, &recency)?;
        self.evaluate(
            &[predictions, popular, recency],
            &test_truth,
            Some(&work.join("report.tsv")),
            None,
            false,
        )
    }

    fn load_lists(&self, path: &Path, lineage: &str) -> Result<Vec<jobrec::candidates::CandidateList>> {
        check_lineage(path, lineage)?;
        Ok(load_candidates(path)?)
    }

    fn load_truth(&self, path: &Path, lineage: &str) -> Result<GroundTruth> {
        check_lineage(path, lineage)?;
        Ok(GroundTruth::load(path)?)
    }
}

/// Inputs built on one dataset must not be combined with another.
fn check_lineage(path: &Path, lineage: &str) -> Result<()> {
    match Provenance::read(path)? {
        Some(p) if p.lineage != lineage => bail!(
            "{} was built on dataset lineage {}, expected {lineage}",
            path.display(),
            p.lineage
        ),
        Some(_) => Ok(()),
        None => {
            warn!("{} has no provenance header", path.display());
            Ok(())
        }
    }
}
