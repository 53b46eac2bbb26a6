//! Exact set-similarity search over sparse id sets.
//!
//! A [`SparseSetIndex`] maps entities to sorted id sets and keeps the
//! transposed postings. Top-k queries enumerate only entities that share at
//! least one id with the query (through the postings) and score them exactly.

use std::cmp::Ordering;
use std::collections::HashMap;

use crate::dataset::{Dataset, ItemId, TokenSet, UserId};

/// A scored entity returned by a top-k query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: u32,
    pub score: f64,
}

/// Descending score, then ascending id.
pub fn neighbor_order(a: &Neighbor, b: &Neighbor) -> Ordering {
    b.score.total_cmp(&a.score).then(a.id.cmp(&b.id))
}

/// Size of the intersection of two ascending, duplicate-free slices.
pub fn intersection_len(a: &[u32], b: &[u32]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// |A ∩ B| / |A ∪ B| over ascending duplicate-free slices; 0 when both are empty.
pub fn jaccard(a: &[u32], b: &[u32]) -> f64 {
    let inter = intersection_len(a, b);
    jaccard_from_counts(inter, a.len(), b.len())
}

pub(crate) fn jaccard_from_counts(inter: usize, a: usize, b: usize) -> f64 {
    let union = a + b - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

fn top_k(mut scored: Vec<Neighbor>, k: usize) -> Vec<Neighbor> {
    scored.sort_by(neighbor_order);
    scored.truncate(k);
    scored
}

#[derive(Debug, Clone, Default)]
pub struct SparseSetIndex {
    forward: HashMap<u32, Vec<u32>>,
    inverted: HashMap<u32, Vec<u32>>,
}

impl SparseSetIndex {
    /// Build from `(entity, id)` pairs; repeated pairs collapse.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (u32, u32)>) -> Self {
        let mut forward: HashMap<u32, Vec<u32>> = HashMap::new();
        for (entity, id) in pairs {
            forward.entry(entity).or_default().push(id);
        }
        for set in forward.values_mut() {
            set.sort_unstable();
            set.dedup();
        }
        Self::from_forward(forward)
    }

    pub fn from_sets<'a>(sets: impl IntoIterator<Item = (u32, &'a [u32])>) -> Self {
        Self::from_pairs(
            sets.into_iter()
                .flat_map(|(entity, ids)| ids.iter().map(move |&id| (entity, id))),
        )
    }

    fn from_forward(mut forward: HashMap<u32, Vec<u32>>) -> Self {
        forward.retain(|_, s| !s.is_empty());
        let mut inverted: HashMap<u32, Vec<u32>> = HashMap::new();
        let mut entities: Vec<u32> = forward.keys().copied().collect();
        entities.sort_unstable();
        for entity in entities {
            for &id in &forward[&entity] {
                inverted.entry(id).or_default().push(entity);
            }
        }
        SparseSetIndex { forward, inverted }
    }

    /// The transposed index (ids become entities).
    pub fn transpose(&self) -> SparseSetIndex {
        SparseSetIndex {
            forward: self.inverted.clone(),
            inverted: self.forward.clone(),
        }
    }

    /// Sorted id set of an entity (empty if unknown).
    pub fn set(&self, entity: u32) -> &[u32] {
        self.forward.get(&entity).map(|s| s.as_slice()).unwrap_or(&[])
    }

    /// Sorted entities containing `id`.
    pub fn postings(&self, id: u32) -> &[u32] {
        self.inverted.get(&id).map(|s| s.as_slice()).unwrap_or(&[])
    }

    pub fn entities(&self) -> Vec<u32> {
        let mut out: Vec<u32> = self.forward.keys().copied().collect();
        out.sort_unstable();
        out
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    /// Intersection size with `query` for every entity sharing at least one id.
    pub fn overlap_counts(&self, query: &[u32]) -> HashMap<u32, u32> {
        let mut counts: HashMap<u32, u32> = HashMap::new();
        for &id in query {
            for &entity in self.postings(id) {
                *counts.entry(entity).or_insert(0) += 1;
            }
        }
        counts
    }

    /// Jaccard between `query` and every entity sharing an id with it.
    /// `query` must be ascending and duplicate-free.
    pub fn jaccard_scores(&self, query: &[u32], exclude: Option<u32>) -> HashMap<u32, f64> {
        let mut counts = self.overlap_counts(query);
        if let Some(e) = exclude {
            counts.remove(&e);
        }
        counts
            .into_iter()
            .map(|(entity, inter)| {
                let score = jaccard_from_counts(inter as usize, query.len(), self.set(entity).len());
                (entity, score)
            })
            .collect()
    }

    /// The `k` other entities most Jaccard-similar to `entity`.
    pub fn top_k_jaccard(&self, entity: u32, k: usize) -> Vec<Neighbor> {
        let query = self.set(entity);
        if query.is_empty() || k == 0 {
            return Vec::new();
        }
        let scored = self
            .jaccard_scores(query, Some(entity))
            .into_iter()
            .map(|(id, score)| Neighbor { id, score })
            .collect();
        top_k(scored, k)
    }

    /// The `k` entities with the largest `|query ∩ set|`, score ≥ 1.
    pub fn top_k_overlap(&self, query: &[u32], k: usize) -> Vec<Neighbor> {
        if query.is_empty() || k == 0 {
            return Vec::new();
        }
        let scored = self
            .overlap_counts(query)
            .into_iter()
            .map(|(id, n)| Neighbor { id, score: n as f64 })
            .collect();
        top_k(scored, k)
    }
}

/// Which events define a user's item set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventSource {
    Interactions,
    Impressions,
}

/// Which item text field a token query runs against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenField {
    Tags,
    Title,
}

/// User↔item incidence for both event sources.
///
/// Interactions count only positive kinds; repeated events collapse.
#[derive(Debug, Clone, Default)]
pub struct SimilarityIndex {
    interactions: SparseSetIndex,
    impressions: SparseSetIndex,
    item_users: SparseSetIndex,
    item_impression_users: SparseSetIndex,
}

impl SimilarityIndex {
    pub fn build(dataset: &Dataset) -> Self {
        let interactions = SparseSetIndex::from_pairs(
            dataset
                .events
                .interactions()
                .iter()
                .filter(|e| e.kind.is_positive())
                .map(|e| (e.user, e.item)),
        );
        let impressions =
            SparseSetIndex::from_pairs(dataset.events.impressions().iter().map(|e| (e.user, e.item)));
        let item_users = interactions.transpose();
        let item_impression_users = impressions.transpose();
        SimilarityIndex {
            interactions,
            impressions,
            item_users,
            item_impression_users,
        }
    }

    /// Users → item sets for a source.
    pub fn user_sets(&self, source: EventSource) -> &SparseSetIndex {
        match source {
            EventSource::Interactions => &self.interactions,
            EventSource::Impressions => &self.impressions,
        }
    }

    /// Items → user sets for a source.
    pub fn item_sets(&self, source: EventSource) -> &SparseSetIndex {
        match source {
            EventSource::Interactions => &self.item_users,
            EventSource::Impressions => &self.item_impression_users,
        }
    }

    /// Int_u or Imp_u as a sorted set.
    pub fn user_items(&self, user: UserId, source: EventSource) -> &[ItemId] {
        self.user_sets(source).set(user)
    }

    /// Users who positively interacted with `item`.
    pub fn item_users(&self, item: ItemId) -> &[UserId] {
        self.item_users.set(item)
    }

    pub fn top_k_similar_users(&self, user: UserId, source: EventSource, k: usize) -> Vec<Neighbor> {
        self.user_sets(source).top_k_jaccard(user, k)
    }

    /// Items ranked by Jaccard between their sets of positively-interacting users.
    pub fn top_k_similar_items(&self, item: ItemId, k: usize) -> Vec<Neighbor> {
        self.item_users.top_k_jaccard(item, k)
    }
}

/// Token postings for the tags and title fields over a scope of items.
#[derive(Debug, Clone, Default)]
pub struct ItemTokenIndex {
    tags: SparseSetIndex,
    title: SparseSetIndex,
}

impl ItemTokenIndex {
    pub fn build(dataset: &Dataset, in_scope: impl Fn(ItemId) -> bool) -> Self {
        let scoped: Vec<_> = dataset.items.values().filter(|i| in_scope(i.id)).collect();
        ItemTokenIndex {
            tags: SparseSetIndex::from_sets(scoped.iter().map(|i| (i.id, i.tags.as_slice()))),
            title: SparseSetIndex::from_sets(scoped.iter().map(|i| (i.id, i.title.as_slice()))),
        }
    }

    pub fn field(&self, field: TokenField) -> &SparseSetIndex {
        match field {
            TokenField::Tags => &self.tags,
            TokenField::Title => &self.title,
        }
    }

    pub fn top_k_by_token_overlap(&self, query: &TokenSet, field: TokenField, k: usize) -> Vec<Neighbor> {
        self.field(field).top_k_overlap(query.as_slice(), k)
    }
}
