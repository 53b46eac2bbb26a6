use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use log::warn;

use super::io::{data_rows, read_file, write_file};
use super::{Dataset, EventLog, Impression, Interaction, ItemId, Timestamp, UserId, SECONDS_PER_WEEK};
use crate::error::{Error, Result};

/// Events at or after the split boundary.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HoldoutEvents {
    pub interactions: Vec<Interaction>,
    pub impressions: Vec<Impression>,
}

impl HoldoutEvents {
    pub fn is_empty(&self) -> bool {
        self.interactions.is_empty() && self.impressions.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct SplitOutcome {
    pub train: Dataset,
    pub holdout: HoldoutEvents,
    /// First timestamp that belongs to the holdout; `None` for a zero-week split.
    pub boundary: Option<Timestamp>,
    /// First impression week that belongs to the holdout.
    pub boundary_week: Option<u32>,
}

/// Hold out the last `holdout_weeks` weeks of events.
///
/// Interactions with `timestamp < max_timestamp - holdout_weeks * 604800`
/// stay in training; impressions stay when
/// `week <= max_week - holdout_weeks`.
pub fn temporal_split(dataset: &Dataset, holdout_weeks: u32) -> Result<SplitOutcome> {
    if holdout_weeks == 0 {
        return Ok(SplitOutcome {
            train: dataset.clone(),
            holdout: HoldoutEvents::default(),
            boundary: None,
            boundary_week: None,
        });
    }
    let events = &dataset.events;

    let mut weeks: BTreeSet<u32> = BTreeSet::new();
    weeks.extend(events.min_timestamp().map(super::week_of));
    weeks.extend(events.max_timestamp().map(super::week_of));
    weeks.extend(events.min_week());
    weeks.extend(events.max_week());
    if weeks.len() < 2 {
        return Err(Error::SingleWeek);
    }

    let boundary = events
        .max_timestamp()
        .map(|max| max - holdout_weeks as i64 * SECONDS_PER_WEEK);
    let boundary_week = events
        .max_week()
        .map(|max| (max + 1).saturating_sub(holdout_weeks));

    let (mut train_int, mut hold_int) = (Vec::new(), Vec::new());
    for ev in events.interactions() {
        match boundary {
            Some(b) if ev.timestamp < b => train_int.push(*ev),
            _ => hold_int.push(*ev),
        }
    }
    let (mut train_imp, mut hold_imp) = (Vec::new(), Vec::new());
    for ev in events.impressions() {
        match boundary_week {
            Some(b) if ev.week < b => train_imp.push(*ev),
            _ => hold_imp.push(*ev),
        }
    }
    if train_int.is_empty() && train_imp.is_empty() {
        warn!("temporal split left the training side empty: every event falls in the holdout window");
    }

    Ok(SplitOutcome {
        train: dataset.with_events(EventLog::new(train_int, train_imp)),
        holdout: HoldoutEvents {
            interactions: hold_int,
            impressions: hold_imp,
        },
        boundary,
        boundary_week,
    })
}

/// Items each target user interacted positively with, users with none omitted.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GroundTruth {
    sets: BTreeMap<UserId, BTreeSet<ItemId>>,
}

impl GroundTruth {
    /// Builds from raw sets, dropping empty ones.
    pub fn from_sets(sets: impl IntoIterator<Item = (UserId, BTreeSet<ItemId>)>) -> Self {
        GroundTruth {
            sets: sets.into_iter().filter(|(_, s)| !s.is_empty()).collect(),
        }
    }

    pub fn get(&self, user: UserId) -> Option<&BTreeSet<ItemId>> {
        self.sets.get(&user)
    }

    pub fn contains(&self, user: UserId, item: ItemId) -> bool {
        self.sets.get(&user).is_some_and(|s| s.contains(&item))
    }

    pub fn users(&self) -> impl Iterator<Item = UserId> + '_ {
        self.sets.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (UserId, &BTreeSet<ItemId>)> + '_ {
        self.sets.iter().map(|(u, s)| (*u, s))
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn total_items(&self) -> usize {
        self.sets.values().map(|s| s.len()).sum()
    }

    /// `user_id<TAB>comma-separated items`, one user per line.
    pub fn to_tsv(&self, header: Option<&str>) -> String {
        let mut out = String::new();
        if let Some(h) = header {
            out.push_str(h);
            out.push('\n');
        }
        out.push_str("user_id\titems\n");
        for (user, items) in &self.sets {
            let list: Vec<String> = items.iter().map(|i| i.to_string()).collect();
            let _ = writeln!(out, "{user}\t{}", list.join(","));
        }
        out
    }

    pub fn from_tsv(text: &str, file: &str) -> Result<Self> {
        let mut sets = BTreeMap::new();
        for (line, fields) in data_rows(text) {
            let user: UserId = fields[0]
                .trim()
                .parse()
                .map_err(|_| Error::parse(file, line, "bad user id"))?;
            let items = fields
                .get(1)
                .copied()
                .unwrap_or("")
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| s.trim().parse().map_err(|_| Error::parse(file, line, "bad item id")))
                .collect::<Result<BTreeSet<ItemId>>>()?;
            sets.insert(user, items);
        }
        Ok(GroundTruth::from_sets(sets))
    }

    pub fn save(&self, path: &Path, header: Option<&str>) -> Result<()> {
        write_file(path, &self.to_tsv(header))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_tsv(&read_file(path)?, &path.display().to_string())
    }
}

pub fn build_ground_truth(holdout: &HoldoutEvents, target_users: &BTreeSet<UserId>) -> GroundTruth {
    let mut sets: BTreeMap<UserId, BTreeSet<ItemId>> = BTreeMap::new();
    for ev in &holdout.interactions {
        if ev.kind.is_positive() && target_users.contains(&ev.user) {
            sets.entry(ev.user).or_default().insert(ev.item);
        }
    }
    GroundTruth::from_sets(sets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::InteractionKind::{self, *};
    use proptest::prelude::*;

    fn ev(user: UserId, item: ItemId, kind: InteractionKind, timestamp: i64) -> Interaction {
        Interaction {
            user,
            item,
            kind,
            timestamp,
        }
    }

    fn dataset(interactions: Vec<Interaction>, impressions: Vec<Impression>) -> Dataset {
        Dataset {
            events: EventLog::new(interactions, impressions),
            ..Dataset::default()
        }
    }

    #[test]
    fn boundary_is_one_week_before_max() {
        let ds = dataset(vec![ev(1, 1, Click, 100), ev(1, 2, Click, 700_000)], vec![]);
        let split = temporal_split(&ds, 1).unwrap();
        assert_eq!(split.boundary, Some(95_200));
        assert_eq!(split.train.events.interactions().len(), 1);
        assert_eq!(split.holdout.interactions.len(), 1);
        assert_eq!(split.train.events.max_timestamp(), Some(100));
    }

    #[test]
    fn all_events_in_final_week_leave_train_empty() {
        // two calendar weeks, but both inside the last 604800 seconds
        let ds = dataset(vec![ev(1, 1, Click, 300_000), ev(1, 2, Click, 700_000)], vec![]);
        let split = temporal_split(&ds, 1).unwrap();
        assert!(split.train.events.interactions().is_empty());
        assert_eq!(split.holdout.interactions.len(), 2);
    }

    #[test]
    fn zero_holdout_weeks_is_identity() {
        let ds = dataset(vec![ev(1, 1, Click, 100), ev(1, 2, Click, 700_000)], vec![]);
        let split = temporal_split(&ds, 0).unwrap();
        assert!(split.holdout.is_empty());
        assert_eq!(split.train.events.interactions(), ds.events.interactions());
    }

    #[test]
    fn single_week_is_an_error() {
        let ds = dataset(vec![ev(1, 1, Click, 100), ev(1, 2, Click, 200)], vec![]);
        assert!(matches!(temporal_split(&ds, 1), Err(Error::SingleWeek)));
        assert!(matches!(temporal_split(&Dataset::default(), 1), Err(Error::SingleWeek)));
    }

    #[test]
    fn impressions_split_on_max_week() {
        let imps = vec![
            Impression { user: 1, item: 1, week: 10 },
            Impression { user: 1, item: 2, week: 11 },
            Impression { user: 1, item: 3, week: 12 },
        ];
        let ds = dataset(vec![], imps);
        let split = temporal_split(&ds, 1).unwrap();
        assert_eq!(split.train.events.impressions().len(), 2);
        assert_eq!(split.holdout.impressions, vec![Impression { user: 1, item: 3, week: 12 }]);
        let split = temporal_split(&ds, 2).unwrap();
        assert_eq!(split.train.events.impressions().len(), 1);
    }

    #[test]
    fn ground_truth_excludes_deletes_and_non_targets() {
        let targets: BTreeSet<UserId> = [1].into();
        let holdout = HoldoutEvents {
            interactions: vec![ev(1, 1, Click, 5), ev(1, 2, Delete, 6), ev(2, 1, Click, 7)],
            impressions: vec![],
        };
        let gt = build_ground_truth(&holdout, &targets);
        assert_eq!(gt.len(), 1);
        assert_eq!(gt.get(1).unwrap().iter().copied().collect::<Vec<_>>(), vec![1]);
        assert!(gt.get(2).is_none());

        let holdout = HoldoutEvents {
            interactions: vec![ev(1, 1, Bookmark, 5), ev(1, 1, Reply, 6)],
            impressions: vec![],
        };
        let gt = build_ground_truth(&holdout, &targets);
        assert_eq!(gt.total_items(), 1);
    }

    #[test]
    fn user_with_only_deletes_is_omitted() {
        let targets: BTreeSet<UserId> = [1].into();
        let holdout = HoldoutEvents {
            interactions: vec![ev(1, 2, Delete, 6)],
            impressions: vec![],
        };
        assert!(build_ground_truth(&holdout, &targets).is_empty());
    }

    #[test]
    fn ground_truth_tsv_round_trip() {
        let gt = GroundTruth::from_sets([(3, [1, 2].into()), (5, [9].into()), (6, BTreeSet::new())]);
        assert_eq!(gt.len(), 2);
        let text = gt.to_tsv(Some("# provenance"));
        assert_eq!(GroundTruth::from_tsv(&text, "gt").unwrap(), gt);
    }

    proptest! {
        #[test]
        fn split_partitions_the_event_multiset(
            times in prop::collection::vec(1i64..3_000_000, 2..60),
            weeks in 1u32..4,
        ) {
            let interactions: Vec<Interaction> = times
                .iter()
                .enumerate()
                .map(|(n, &t)| ev((n % 5) as u32, (n % 7) as u32, InteractionKind::ALL[n % 4], t))
                .collect();
            let ds = dataset(interactions.clone(), vec![]);
            match temporal_split(&ds, weeks) {
                Err(Error::SingleWeek) => {}
                Err(e) => panic!("{e}"),
                Ok(split) => {
                    let mut joined: Vec<_> = split.train.events.interactions().to_vec();
                    joined.extend(split.holdout.interactions.iter().copied());
                    joined.sort();
                    let mut original = interactions;
                    original.sort();
                    prop_assert_eq!(joined, original);
                    let b = split.boundary.unwrap();
                    prop_assert!(split.train.events.interactions().iter().all(|e| e.timestamp < b));
                    prop_assert!(split.holdout.interactions.iter().all(|e| e.timestamp >= b));

                    let targets: BTreeSet<UserId> = (0..5).collect();
                    let gt = build_ground_truth(&split.holdout, &targets);
                    for (user, items) in gt.iter() {
                        for item in items {
                            prop_assert!(split.holdout.interactions.iter().any(|e| e.user == user && e.item == *item && e.kind.is_positive()));
                        }
                    }
                }
            }
        }
    }
}
