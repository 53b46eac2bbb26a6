//! The challenge scoring function.
//!
//! `userScore = 20·[p@2 + p@4 + us + r] + 10·[p@6 + p@20]` summed over
//! users with ground truth, for predictions of at most 30 items.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::{GroundTruth, ItemId, UserId};
use crate::error::{Error, Result};

pub const MAX_PREDICTIONS: usize = 30;

/// Denominator of the recall term.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecallMode {
    /// hits / min(1, |B|), i.e. the raw hit count.
    Literal,
    /// hits / max(1, |B|).
    #[default]
    Corrected,
}

impl std::str::FromStr for RecallMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "literal" => Ok(RecallMode::Literal),
            "corrected" => Ok(RecallMode::Corrected),
            other => Err(format!("unknown recall mode {other:?} (literal|corrected)")),
        }
    }
}

fn hits(pred: &[ItemId], truth: &BTreeSet<ItemId>, k: usize) -> usize {
    pred.iter().take(k).filter(|i| truth.contains(i)).count()
}

/// |first k ∩ B| / k; slots beyond the prediction length count as misses.
pub fn precision_at_k(pred: &[ItemId], truth: &BTreeSet<ItemId>, k: usize) -> f64 {
    hits(pred, truth, k) as f64 / k as f64
}

pub fn recall_term(pred: &[ItemId], truth: &BTreeSet<ItemId>, mode: RecallMode) -> f64 {
    let h = hits(pred, truth, MAX_PREDICTIONS) as f64;
    match mode {
        RecallMode::Literal => h / truth.len().min(1) as f64,
        RecallMode::Corrected => h / truth.len().max(1) as f64,
    }
}

pub fn user_success(pred: &[ItemId], truth: &BTreeSet<ItemId>) -> f64 {
    if hits(pred, truth, MAX_PREDICTIONS) > 0 {
        1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserScore {
    pub user: UserId,
    pub p2: f64,
    pub p4: f64,
    pub p6: f64,
    pub p20: f64,
    pub recall: f64,
    pub success: f64,
    pub score: f64,
}

pub fn user_score(user: UserId, pred: &[ItemId], truth: &BTreeSet<ItemId>, mode: RecallMode) -> UserScore {
    let p2 = precision_at_k(pred, truth, 2);
    let p4 = precision_at_k(pred, truth, 4);
    let p6 = precision_at_k(pred, truth, 6);
    let p20 = precision_at_k(pred, truth, 20);
    let recall = recall_term(pred, truth, mode);
    let success = user_success(pred, truth);
    UserScore {
        user,
        p2,
        p4,
        p6,
        p20,
        recall,
        success,
        score: 20.0 * (p2 + p4 + success + recall) + 10.0 * (p6 + p20),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub total: f64,
    pub mode: RecallMode,
    /// One row per ground-truth user, ascending id.
    pub users: Vec<UserScore>,
}

impl ScoreReport {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("user_id\tp2\tp4\tp6\tp20\trecall\tuser_success\tuser_score\n");
        for u in &self.users {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                u.user, u.p2, u.p4, u.p6, u.p20, u.recall, u.success, u.score
            );
        }
        let _ = writeln!(out, "total\t\t\t\t\t\t\t{}", self.total);
        out
    }

    pub fn user(&self, user: UserId) -> Option<&UserScore> {
        self.users
            .binary_search_by_key(&user, |u| u.user)
            .ok()
            .map(|i| &self.users[i])
    }
}

/// Rejects predictions longer than 30 or with duplicates.
pub fn validate_prediction(user: UserId, items: &[ItemId]) -> Result<()> {
    if items.len() > MAX_PREDICTIONS {
        return Err(Error::InvalidPrediction {
            user,
            reason: format!("{} items, at most {MAX_PREDICTIONS} allowed", items.len()),
        });
    }
    let mut seen = HashSet::with_capacity(items.len());
    if let Some(dup) = items.iter().find(|i| !seen.insert(**i)) {
        return Err(Error::InvalidPrediction {
            user,
            reason: format!("item {dup} repeated"),
        });
    }
    Ok(())
}

/// Score every ground-truth user; users without a prediction score 0.
/// Predictions for users outside the ground truth are validated but contribute nothing.
pub fn total_score(
    predictions: &BTreeMap<UserId, Vec<ItemId>>,
    truth: &GroundTruth,
    mode: RecallMode,
) -> Result<ScoreReport> {
    for (user, items) in predictions {
        validate_prediction(*user, items)?;
    }
    let users: Vec<UserScore> = truth
        .iter()
        .map(|(user, set)| {
            let pred = predictions.get(&user).map(|v| v.as_slice()).unwrap_or(&[]);
            user_score(user, pred, set, mode)
        })
        .collect();
    let total = users.iter().map(|u| u.score).sum();
    Ok(ScoreReport { total, mode, users })
}

/// A seeded subset of ground-truth users (e.g. a third, like a public leaderboard).
pub fn sample_users(truth: &GroundTruth, fraction: f64, seed: u64) -> GroundTruth {
    let threshold = (fraction.clamp(0.0, 1.0) * u64::MAX as f64) as u64;
    GroundTruth::from_sets(
        truth
            .iter()
            .filter(|(u, _)| fraction >= 1.0 || crate::hashing::mix(seed, *u as u64) < threshold)
            .map(|(u, s)| (u, s.clone())),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(items: &[ItemId]) -> BTreeSet<ItemId> {
        items.iter().copied().collect()
    }

    #[test]
    fn precision_examples() {
        let truth = set(&[1, 2]);
        assert_eq!(precision_at_k(&[1, 2], &truth, 2), 1.0);
        assert_eq!(precision_at_k(&[3, 4], &truth, 2), 0.0);
        assert_eq!(precision_at_k(&[3, 1, 5, 6], &truth, 4), 0.25);
        // short prediction: missing slots are misses
        assert_eq!(precision_at_k(&[1], &truth, 4), 0.25);
    }

    #[test]
    fn recall_modes() {
        let items: Vec<ItemId> = (0..30).collect();
        let truth = set(&items);
        assert_eq!(recall_term(&items, &truth, RecallMode::Literal), 30.0);
        assert_eq!(recall_term(&items, &truth, RecallMode::Corrected), 1.0);
        assert_eq!(recall_term(&[5], &set(&[9]), RecallMode::Literal), 0.0);
        assert_eq!(recall_term(&[5], &set(&[9]), RecallMode::Corrected), 0.0);
        assert_eq!(recall_term(&[5], &set(&[5]), RecallMode::Literal), 1.0);
        assert_eq!(recall_term(&[5], &set(&[5]), RecallMode::Corrected), 1.0);
    }

    #[test]
    fn user_success_boundary() {
        let mut pred: Vec<ItemId> = (100..129).collect();
        pred.push(7);
        assert_eq!(user_success(&pred, &set(&[7])), 1.0);
        assert_eq!(user_success(&pred, &set(&[8])), 0.0);
    }

    #[test]
    fn hand_computed_scores() {
        let s = user_score(1, &[1], &set(&[1]), RecallMode::Corrected);
        let expected = 20.0 * (0.5 + 0.25 + 1.0 + 1.0) + 10.0 * (1.0 / 6.0 + 1.0 / 20.0);
        assert_eq!(s.score, expected);
        assert!((s.score - 57.1667).abs() < 1e-4);

        let items: Vec<ItemId> = (0..30).collect();
        assert_eq!(user_score(1, &items, &set(&items), RecallMode::Corrected).score, 100.0);
        assert_eq!(user_score(1, &items, &set(&items), RecallMode::Literal).score, 680.0);
    }

    #[test]
    fn totals_and_validation() {
        let truth = GroundTruth::from_sets([(1, set(&[1])), (2, set(&[5]))]);
        let empty = BTreeMap::new();
        assert_eq!(total_score(&empty, &truth, RecallMode::Corrected).unwrap().total, 0.0);

        let preds: BTreeMap<UserId, Vec<ItemId>> = [(1, vec![1]), (3, vec![1, 2])].into();
        let report = total_score(&preds, &truth, RecallMode::Corrected).unwrap();
        assert_eq!(report.users.len(), 2);
        assert_eq!(report.total, report.user(1).unwrap().score);
        assert_eq!(report.user(2).unwrap().score, 0.0);

        let dup: BTreeMap<UserId, Vec<ItemId>> = [(1, vec![1, 1])].into();
        assert!(matches!(total_score(&dup, &truth, RecallMode::Corrected), Err(Error::InvalidPrediction { .. })));
        let long: BTreeMap<UserId, Vec<ItemId>> = [(1, (0..31).collect())].into();
        assert!(total_score(&long, &truth, RecallMode::Corrected).is_err());
    }

    #[test]
    fn adding_a_correct_item_never_hurts() {
        let truth = set(&[3, 8, 12]);
        let mut pred: Vec<ItemId> = vec![100, 101, 3];
        let mut last = user_score(1, &pred, &truth, RecallMode::Corrected).score;
        for extra in [8, 12] {
            pred.push(extra);
            let now = user_score(1, &pred, &truth, RecallMode::Corrected).score;
            assert!(now >= last);
            last = now;
        }
    }

    #[test]
    fn sampling_is_seeded_subset() {
        let truth = GroundTruth::from_sets((0..300).map(|u| (u, set(&[1]))));
        let a = sample_users(&truth, 1.0 / 3.0, 5);
        let b = sample_users(&truth, 1.0 / 3.0, 5);
        assert_eq!(a, b);
        assert!(a.len() > 60 && a.len() < 140, "{}", a.len());
        assert!(a.users().all(|u| truth.get(u).is_some()));
        assert_eq!(sample_users(&truth, 1.0, 5).len(), 300);
    }
}
