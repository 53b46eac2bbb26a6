//! Training-file construction, scoring, top-30 selection, blending and baselines.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::candidates::{recency_order, CandidateList};
use crate::dataset::{data_rows, read_file, write_file, Dataset, GroundTruth, ItemId, UserId};
use crate::error::{Error, Result};
use crate::evaluation::{validate_prediction, MAX_PREDICTIONS};
use crate::features::FeatureContext;
use crate::gbdt::GbdtModel;
use crate::hashing;
use crate::matrix::FeatureMatrix;

/// Negatives kept per user by `TrainingMode::Paper`.
pub const NEGATIVES_PER_USER: usize = 5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainingMode {
    /// Half the eligible users for training, half for validation; all
    /// positives and up to five negatives each.
    #[default]
    Paper,
    /// Every eligible user, all positives and a quarter of the negatives.
    Extended,
}

impl std::str::FromStr for TrainingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "paper" => Ok(TrainingMode::Paper),
            "extended" => Ok(TrainingMode::Extended),
            other => Err(format!("unknown training mode {other:?} (paper|extended)")),
        }
    }
}

/// Chosen (item, label) rows per user.
pub type RowSelection = BTreeMap<UserId, Vec<(ItemId, bool)>>;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingSelection {
    pub train: RowSelection,
    pub valid: RowSelection,
}

impl TrainingSelection {
    pub fn row_count(&self) -> usize {
        self.train.values().chain(self.valid.values()).map(Vec::len).sum()
    }
}

/// Eligible users (non-empty ground truth) ordered by a seeded hash.
fn shuffled_users(truth: &GroundTruth, seed: u64) -> Vec<UserId> {
    let mut users: Vec<UserId> = truth.users().collect();
    users.sort_by_key(|&u| (hashing::mix(seed, u as u64), u));
    users
}

fn sample_rows(list: Option<&CandidateList>, positives: &BTreeSet<ItemId>, keep: impl Fn(usize) -> usize, rng_seed: u64) -> Vec<(ItemId, bool)> {
    let Some(list) = list else {
        return Vec::new();
    };
    let (pos, neg): (Vec<ItemId>, Vec<ItemId>) = list.items().partition(|i| positives.contains(i));
    let k = keep(neg.len()).min(neg.len());
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut picked: Vec<ItemId> = rand::seq::index::sample(&mut rng, neg.len(), k)
        .into_iter()
        .map(|ix| neg[ix])
        .collect();
    picked.sort_unstable();
    let mut rows: Vec<(ItemId, bool)> = pos.into_iter().map(|i| (i, true)).collect();
    rows.extend(picked.into_iter().map(|i| (i, false)));
    rows.sort_unstable_by_key(|&(i, _)| i);
    rows
}

/// Pick training rows from training-split candidates and ground truth.
pub fn build_training_file(
    lists: &[CandidateList],
    truth: &GroundTruth,
    mode: TrainingMode,
    seed: u64,
) -> Result<TrainingSelection> {
    if truth.is_empty() {
        return Err(Error::NoEligibleUsers);
    }
    let by_user: HashMap<UserId, &CandidateList> = lists.iter().map(|l| (l.user, l)).collect();
    let rows_for = |u: UserId, keep: &dyn Fn(usize) -> usize| {
        let positives = truth.get(u).expect("eligible users come from the ground truth");
        sample_rows(by_user.get(&u).copied(), positives, keep, hashing::mix(seed, u as u64))
    };
    let mut selection = TrainingSelection::default();
    match mode {
        TrainingMode::Paper => {
            let users = shuffled_users(truth, seed);
            let half = users.len().div_ceil(2);
            for (rank, &u) in users.iter().enumerate() {
                let rows = rows_for(u, &|_| NEGATIVES_PER_USER);
                if rank < half {
                    selection.train.insert(u, rows);
                } else {
                    selection.valid.insert(u, rows);
                }
            }
        }
        TrainingMode::Extended => {
            for u in truth.users() {
                selection.train.insert(u, rows_for(u, &|n| n / 4));
            }
        }
    }
    Ok(selection)
}

/// Labelled matrices for the selected rows; validation is `None` when empty.
pub fn training_matrices(
    ctx: &FeatureContext,
    lists: &[CandidateList],
    selection: &TrainingSelection,
) -> Result<(FeatureMatrix, Option<FeatureMatrix>)> {
    let build = |rows: &RowSelection| {
        let chosen: Vec<CandidateList> = lists.iter().filter(|l| rows.contains_key(&l.user)).cloned().collect();
        ctx.build_selected(&chosen, true, |l| rows.get(&l.user).cloned().unwrap_or_default())
    };
    let train = build(&selection.train)?;
    if train.n_rows() == 0 {
        return Err(Error::EmptyTrainingMatrix);
    }
    let valid = if selection.valid.values().any(|v| !v.is_empty()) {
        Some(build(&selection.valid)?)
    } else {
        None
    };
    Ok((train, valid))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub user: UserId,
    pub items: Vec<ItemId>,
    pub scores: Vec<f64>,
}

/// Sort by probability (desc, ties by item id), drop `excluded`, keep the top 30.
pub fn select_top(user: UserId, mut scored: Vec<(ItemId, f64)>, excluded: impl Fn(ItemId) -> bool) -> Prediction {
    scored.retain(|&(i, _)| !excluded(i));
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(MAX_PREDICTIONS);
    let (items, scores) = scored.into_iter().unzip();
    Prediction { user, items, scores }
}

/// Mean of per-model probabilities; summed in ascending order so the
/// result does not depend on model order.
pub fn mean_probability(probs: &mut [f64]) -> f64 {
    probs.sort_by(f64::total_cmp);
    probs.iter().sum::<f64>() / probs.len() as f64
}

/// Per (user, candidate) probabilities of every model, candidates in list order.
pub fn score_candidates(ctx: &FeatureContext, list: &CandidateList, models: &[GbdtModel]) -> Result<Vec<(ItemId, Vec<f64>)>> {
    if models.is_empty() {
        return Err(Error::InvalidConfig("at least one model is required".into()));
    }
    for m in models {
        m.schema.ensure_same(ctx.schema())?;
    }
    let view = ctx.user_view(list.user);
    list.items()
        .map(|item| {
            let row = ctx.pair_row(&view, list, item)?;
            Ok((item, models.iter().map(|m| m.predict_row(&row)).collect()))
        })
        .collect()
}

/// Blended top-30 per list. With one model this is plain ranking.
pub fn blend(ctx: &FeatureContext, dataset: &Dataset, lists: &[CandidateList], models: &[GbdtModel]) -> Result<Vec<Prediction>> {
    lists
        .par_iter()
        .map(|list| {
            let scored = score_candidates(ctx, list, models)?
                .into_iter()
                .map(|(i, mut p)| (i, mean_probability(&mut p)))
                .collect();
            let deleted = dataset.deleted_items(list.user);
            Ok(select_top(list.user, scored, |i| deleted.contains(&i) || !dataset.is_active(i)))
        })
        .collect()
}

/// Ranking with a single model.
pub fn rank_and_select(ctx: &FeatureContext, dataset: &Dataset, lists: &[CandidateList], model: &GbdtModel) -> Result<Vec<Prediction>> {
    blend(ctx, dataset, lists, std::slice::from_ref(model))
}

/// Most recent positive interactions, padded with recent impressions;
/// deleted and inactive items removed before padding.
pub fn baseline_recency(dataset: &Dataset, users: &[UserId]) -> Vec<Prediction> {
    users
        .par_iter()
        .map(|&u| {
            let deleted = dataset.deleted_items(u);
            let keep = |i: &ItemId| !deleted.contains(i) && dataset.is_active(*i);
            let mut last: HashMap<ItemId, i64> = HashMap::new();
            for e in dataset.events.user_interactions(u).filter(|e| e.kind.is_positive()) {
                let t = last.entry(e.item).or_insert(e.timestamp);
                *t = (*t).max(e.timestamp);
            }
            let mut recent: Vec<(ItemId, i64)> = last.into_iter().collect();
            recent.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
            let mut seen = HashSet::new();
            let mut items: Vec<ItemId> = recent
                .into_iter()
                .map(|(i, _)| i)
                .filter(|i| keep(i) && seen.insert(*i))
                .collect();
            let impressions = recency_order(dataset.events.user_impressions(u).map(|e| (e.item, e.week)));
            items.extend(impressions.into_iter().filter(|i| keep(i) && seen.insert(*i)));
            items.truncate(MAX_PREDICTIONS);
            Prediction {
                user: u,
                scores: (0..items.len()).map(|r| 1.0 / (r + 1) as f64).collect(),
                items,
            }
        })
        .collect()
}

/// The 30 most interacted active items, minus each user's deletes.
pub fn baseline_popular(dataset: &Dataset, users: &[UserId]) -> Vec<Prediction> {
    let mut counts: HashMap<ItemId, u64> = HashMap::new();
    for e in dataset.events.interactions() {
        if e.kind.is_positive() && dataset.is_active(e.item) {
            *counts.entry(e.item).or_default() += 1;
        }
    }
    let mut ranked: Vec<(ItemId, u64)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    users
        .par_iter()
        .map(|&u| {
            let deleted = dataset.deleted_items(u);
            let scored = ranked
                .iter()
                .filter(|(i, _)| !deleted.contains(i))
                .take(MAX_PREDICTIONS)
                .map(|&(i, c)| (i, c as f64))
                .collect();
            select_top(u, scored, |_| false)
        })
        .collect()
}

pub fn predictions_by_user(predictions: &[Prediction]) -> BTreeMap<UserId, Vec<ItemId>> {
    predictions.iter().map(|p| (p.user, p.items.clone())).collect()
}

/// Submission format: `user_id<TAB>item item ...`.
pub fn predictions_to_tsv(predictions: &[Prediction], header: Option<&str>) -> String {
    let mut out = String::new();
    if let Some(h) = header {
        let _ = writeln!(out, "{h}");
    }
    out.push_str("user_id\titems\n");
    let mut sorted: Vec<&Prediction> = predictions.iter().collect();
    sorted.sort_by_key(|p| p.user);
    for p in sorted {
        let items: Vec<String> = p.items.iter().map(|i| i.to_string()).collect();
        let _ = writeln!(out, "{}\t{}", p.user, items.join(" "));
    }
    out
}

/// Probabilities aligned with the submission file.
pub fn scores_to_tsv(predictions: &[Prediction], header: Option<&str>) -> String {
    let mut out = String::new();
    if let Some(h) = header {
        let _ = writeln!(out, "{h}");
    }
    out.push_str("user_id\tscores\n");
    let mut sorted: Vec<&Prediction> = predictions.iter().collect();
    sorted.sort_by_key(|p| p.user);
    for p in sorted {
        let scores: Vec<String> = p.scores.iter().map(|s| s.to_string()).collect();
        let _ = writeln!(out, "{}\t{}", p.user, scores.join(" "));
    }
    out
}

/// Reads the submission format; scores are left empty.
pub fn predictions_from_tsv(text: &str, file: &str) -> Result<Vec<Prediction>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (line, fields) in data_rows(text) {
        let user: UserId = fields[0]
            .parse()
            .map_err(|e| Error::parse(file, line, format!("user id {:?}: {e}", fields[0])))?;
        if !seen.insert(user) {
            return Err(Error::parse(file, line, format!("user {user} listed twice")));
        }
        let items = fields
            .get(1)
            .map(|s| s.split_whitespace().map(|t| t.parse::<ItemId>()).collect::<Result<Vec<_>, _>>())
            .transpose()
            .map_err(|e| Error::parse(file, line, format!("item id: {e}")))?
            .unwrap_or_default();
        validate_prediction(user, &items)?;
        out.push(Prediction {
            user,
            items,
            scores: Vec::new(),
        });
    }
    Ok(out)
}

pub fn save_predictions(path: &Path, predictions: &[Prediction], header: Option<&str>) -> Result<()> {
    write_file(path, &predictions_to_tsv(predictions, header))
}

pub fn load_predictions(path: &Path) -> Result<Vec<Prediction>> {
    predictions_from_tsv(&read_file(path)?, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::candidates::{merge_candidates, RANK_SLOTS};
    use crate::dataset::{EventLog, Impression, Interaction, InteractionKind, Item, User};

    fn list(user: UserId, items: std::ops::RangeInclusive<ItemId>) -> CandidateList {
        merge_candidates(user, &[(RANK_SLOTS[0], items.collect())], |_| true)
    }

    #[test]
    fn paper_mode_counts() {
        let truth = GroundTruth::from_sets([(1, BTreeSet::from([1, 2])), (2, BTreeSet::from([100]))]);
        let lists = vec![list(1, 1..=14), list(2, 1..=3)];
        let sel = build_training_file(&lists, &truth, TrainingMode::Paper, 3).unwrap();
        assert_eq!(sel.train.len(), 1);
        assert_eq!(sel.valid.len(), 1);
        let rows_1 = sel.train.get(&1).or(sel.valid.get(&1)).unwrap();
        assert_eq!(rows_1.iter().filter(|r| r.1).count(), 2);
        assert_eq!(rows_1.iter().filter(|r| !r.1).count(), 5);
        // user 2's ground truth is not among the candidates
        let rows_2 = sel.train.get(&2).or(sel.valid.get(&2)).unwrap();
        assert_eq!(rows_2.len(), 3);
        assert!(rows_2.iter().all(|r| !r.1));
        assert_eq!(sel, build_training_file(&lists, &truth, TrainingMode::Paper, 3).unwrap());
    }

    #[test]
    fn extended_mode_takes_a_quarter() {
        let truth = GroundTruth::from_sets([(1, BTreeSet::from([1]))]);
        let sel = build_training_file(&[list(1, 1..=17)], &truth, TrainingMode::Extended, 0).unwrap();
        let rows = &sel.train[&1];
        assert_eq!(rows.iter().filter(|r| !r.1).count(), 4);
        assert!(sel.valid.is_empty());
        assert!(matches!(
            build_training_file(&[], &GroundTruth::default(), TrainingMode::Paper, 0),
            Err(Error::NoEligibleUsers)
        ));
    }

    #[test]
    fn selection_orders_and_filters() {
        let p = select_top(1, vec![(10, 0.3), (11, 0.7), (12, 0.4)], |_| false);
        assert_eq!(p.items, vec![11, 12, 10]);
        let p = select_top(1, vec![(10, 0.3), (11, 0.7), (12, 0.4)], |i| i == 11);
        assert_eq!(p.items, vec![12, 10]);
        let many: Vec<(ItemId, f64)> = (0..40).map(|i| (i, 0.5)).collect();
        let p = select_top(1, many, |_| false);
        assert_eq!(p.items, (0..30).collect::<Vec<_>>());
    }

    #[test]
    fn blending_mean() {
        assert_eq!(mean_probability(&mut [0.2, 0.6]), 0.4);
        let mut a = [0.1, 0.7, 0.3];
        let mut b = [0.3, 0.1, 0.7];
        assert_eq!(mean_probability(&mut a).to_bits(), mean_probability(&mut b).to_bits());
        assert_eq!(mean_probability(&mut [0.123456789]), 0.123456789);
    }

    fn active(id: ItemId) -> Item {
        Item {
            id,
            active_during_test: true,
            ..Item::default()
        }
    }

    #[test]
    fn recency_baseline_padding() {
        let mut interactions = vec![
            Interaction { user: 1, item: 1, kind: InteractionKind::Click, timestamp: 100 },
            Interaction { user: 1, item: 2, kind: InteractionKind::Click, timestamp: 200 },
        ];
        let impressions: Vec<Impression> = (1..=50).map(|i| Impression { user: 1, item: i, week: i }).collect();
        let mut items: Vec<Item> = (1..=50).map(active).collect();
        items[49].active_during_test = false;
        let ds = Dataset {
            users: [(1, User { id: 1, ..User::default() })].into(),
            items: items.iter().cloned().map(|i| (i.id, i)).collect(),
            events: EventLog::new(interactions.clone(), impressions.clone()),
            target_users: [1].into(),
        };
        let p = &baseline_recency(&ds, &[1])[0];
        assert_eq!(p.items.len(), 30);
        assert_eq!(&p.items[..4], &[2, 1, 49, 48]);

        interactions.push(Interaction { user: 1, item: 1, kind: InteractionKind::Delete, timestamp: 300 });
        interactions.push(Interaction { user: 1, item: 2, kind: InteractionKind::Delete, timestamp: 300 });
        let ds = ds.with_events(EventLog::new(interactions, impressions));
        let p = &baseline_recency(&ds, &[1])[0];
        assert_eq!(&p.items[..2], &[49, 48]);
        assert!(!p.items.contains(&1) && !p.items.contains(&2) && !p.items.contains(&50));
    }

    #[test]
    fn submission_round_trip() {
        let preds = vec![
            Prediction { user: 2, items: vec![5, 3], scores: vec![0.9, 0.1] },
            Prediction { user: 1, items: vec![], scores: vec![] },
        ];
        let text = predictions_to_tsv(&preds, Some("# provenance: stage=test"));
        assert!(text.contains("2\t5 3\n"));
        let back = predictions_from_tsv(&text, "p").unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].items, vec![5, 3]);
        assert!(predictions_from_tsv("user_id\titems\n1\t4 4\n", "p").is_err());
        assert!(scores_to_tsv(&preds, None).contains("2\t0.9 0.1"));
    }
}
