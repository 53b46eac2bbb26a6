//! Items positively interacted with by the same user within a short window.

use std::collections::{BTreeSet, HashMap};

use crate::dataset::{EventLog, ItemId, Timestamp};

pub const CLUSTER_WINDOW_SECONDS: Timestamp = 600;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ItemClusterIndex {
    links: HashMap<ItemId, BTreeSet<ItemId>>,
}

impl ItemClusterIndex {
    /// Links every pair of distinct items that one user hit at most
    /// `window` seconds apart.
    pub fn build(events: &EventLog, window: Timestamp) -> Self {
        let mut users: Vec<_> = events.interactions().iter().map(|e| e.user).collect();
        users.sort_unstable();
        users.dedup();
        let mut links: HashMap<ItemId, BTreeSet<ItemId>> = HashMap::new();
        for user in users {
            let seq: Vec<_> = events
                .user_interactions(user)
                .filter(|e| e.kind.is_positive())
                .map(|e| (e.timestamp, e.item))
                .collect();
            for (j, &(t0, a)) in seq.iter().enumerate() {
                for &(t1, b) in &seq[j + 1..] {
                    if t1 - t0 > window {
                        break;
                    }
                    if a != b {
                        links.entry(a).or_default().insert(b);
                        links.entry(b).or_default().insert(a);
                    }
                }
            }
        }
        ItemClusterIndex { links }
    }

    pub fn cluster(&self, item: ItemId) -> Option<&BTreeSet<ItemId>> {
        self.links.get(&item)
    }

    pub fn linked(&self, a: ItemId, b: ItemId) -> bool {
        self.links.get(&a).is_some_and(|s| s.contains(&b))
    }

    pub fn items(&self) -> impl Iterator<Item = ItemId> + '_ {
        self.links.keys().copied()
    }

    /// Unordered pairs.
    pub fn pair_count(&self) -> usize {
        self.links.values().map(|s| s.len()).sum::<usize>() / 2
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Interaction, InteractionKind};

    fn ev(user: u32, item: u32, ts: i64) -> Interaction {
        Interaction {
            user,
            item,
            kind: InteractionKind::Click,
            timestamp: ts,
        }
    }

    #[test]
    fn window_boundary() {
        let log = EventLog::new(vec![ev(1, 10, 1000), ev(1, 11, 1599), ev(2, 20, 0), ev(2, 21, 601)], vec![]);
        let idx = ItemClusterIndex::build(&log, CLUSTER_WINDOW_SECONDS);
        assert!(idx.linked(10, 11) && idx.linked(11, 10));
        assert!(!idx.linked(20, 21));
        assert_eq!(idx.pair_count(), 1);
    }

    #[test]
    fn exactly_window_apart_is_inside() {
        let log = EventLog::new(vec![ev(1, 1, 0), ev(1, 2, 600)], vec![]);
        assert!(ItemClusterIndex::build(&log, CLUSTER_WINDOW_SECONDS).linked(1, 2));
    }

    #[test]
    fn deletes_and_self_pairs_are_ignored() {
        let mut del = ev(1, 3, 10);
        del.kind = InteractionKind::Delete;
        let log = EventLog::new(vec![ev(1, 1, 0), ev(1, 1, 5), del], vec![]);
        let idx = ItemClusterIndex::build(&log, CLUSTER_WINDOW_SECONDS);
        assert_eq!(idx.pair_count(), 0);
        assert!(!idx.linked(1, 1));
    }
}
