//! Brute-force reference implementations and random fixtures.
//!
//! Everything here works straight from the flat dataset tables so that it
//! shares no code path with the indexed implementations under test.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use jobrec::candidates::OverlapVariant;
use jobrec::dataset::{
    week_of, Dataset, EventLog, Impression, Interaction, InteractionKind, Item, ItemId, TokenSet, User, UserId,
};
use jobrec::similarity::{EventSource, TokenField};
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const EPOCH: i64 = 1_451_865_600;

// ---------------------------------------------------------------------------
// scoring

/// Challenge user score, written out term by term.
pub fn naive_user_score(pred: &[ItemId], truth: &BTreeSet<ItemId>, literal_recall: bool) -> f64 {
    let hit = |pos: usize| pos < pred.len() && truth.contains(&pred[pos]);
    let precision = |k: usize| (0..k).filter(|&p| hit(p)).count() as f64 / k as f64;
    let hits = (0..30).filter(|&p| hit(p)).count() as f64;
    let denom = if literal_recall {
        truth.len().min(1)
    } else {
        truth.len().max(1)
    } as f64;
    let recall = hits / denom;
    let success = if hits > 0.0 { 1.0 } else { 0.0 };
    20.0 * (precision(2) + precision(4) + recall + success) + 10.0 * (precision(6) + precision(20))
}

pub fn naive_total(
    preds: &BTreeMap<UserId, Vec<ItemId>>,
    truth: &BTreeMap<UserId, BTreeSet<ItemId>>,
    literal_recall: bool,
) -> f64 {
    let mut total = 0.0;
    for (user, set) in truth {
        let empty = Vec::new();
        let pred = preds.get(user).unwrap_or(&empty);
        total += naive_user_score(pred, set, literal_recall);
    }
    total
}

// ---------------------------------------------------------------------------
// fixtures

pub struct FixtureShape {
    pub users: u32,
    pub items: u32,
    pub weeks: u32,
    pub vocab: u32,
    pub max_events: u32,
    pub active_share: f64,
}

fn tokens(rng: &mut ChaCha8Rng, max: usize, vocab: u32) -> TokenSet {
    let n = rng.random_range(0..=max);
    (0..n).map(|_| rng.random_range(1..=vocab)).collect()
}

/// Random dataset with ids `1..=users` and `1..=items`.
pub fn random_dataset(rng: &mut ChaCha8Rng, shape: &FixtureShape) -> Dataset {
    let users: BTreeMap<UserId, User> = (1..=shape.users)
        .map(|id| {
            let user = User {
                id,
                jobroles: tokens(rng, 5, shape.vocab),
                career_level: rng.random_range(0..=6),
                discipline_id: rng.random_range(1..=5),
                industry_id: rng.random_range(1..=5),
                country: rng.random_range(1..=3),
                region: rng.random_range(0..=4),
                ..User::default()
            };
            (id, user)
        })
        .collect();
    let items: BTreeMap<ItemId, Item> = (1..=shape.items)
        .map(|id| {
            let item = Item {
                id,
                title: tokens(rng, 5, shape.vocab),
                tags: tokens(rng, 6, shape.vocab),
                career_level: rng.random_range(0..=6),
                discipline_id: rng.random_range(1..=5),
                industry_id: rng.random_range(1..=5),
                country: rng.random_range(1..=3),
                region: rng.random_range(0..=4),
                created_at: Some(EPOCH + rng.random_range(0..shape.weeks as i64 * 604_800)),
                active_during_test: rng.random_bool(shape.active_share),
                ..Item::default()
            };
            (id, item)
        })
        .collect();

    let item_ids: Vec<ItemId> = items.keys().copied().collect();
    let mut interactions = Vec::new();
    let mut impressions = Vec::new();
    let first_week = week_of(EPOCH);
    for &user in users.keys() {
        for _ in 0..rng.random_range(0..=shape.max_events) {
            let r: f64 = rng.random();
            let kind = if r < 0.7 {
                InteractionKind::Click
            } else if r < 0.8 {
                InteractionKind::Bookmark
            } else if r < 0.9 {
                InteractionKind::Reply
            } else {
                InteractionKind::Delete
            };
            interactions.push(Interaction {
                user,
                item: *item_ids.choose(rng).unwrap(),
                kind,
                timestamp: EPOCH + rng.random_range(0..shape.weeks as i64 * 604_800),
            });
        }
        for _ in 0..rng.random_range(0..=shape.max_events) {
            impressions.push(Impression {
                user,
                item: *item_ids.choose(rng).unwrap(),
                week: first_week + rng.random_range(0..shape.weeks),
            });
        }
    }
    let target_users = users.keys().copied().filter(|_| rng.random_bool(0.5)).collect();
    Dataset {
        users,
        items,
        events: EventLog::new(interactions, impressions),
        target_users,
    }
}

// ---------------------------------------------------------------------------
// similarity

/// (user, item) pairs of a source: positive interactions or impressions.
pub fn source_pairs(ds: &Dataset, source: EventSource) -> Vec<(UserId, ItemId)> {
    match source {
        EventSource::Interactions => ds
            .events
            .interactions()
            .iter()
            .filter(|e| e.kind != InteractionKind::Delete)
            .map(|e| (e.user, e.item))
            .collect(),
        EventSource::Impressions => ds.events.impressions().iter().map(|e| (e.user, e.item)).collect(),
    }
}

pub fn user_item_sets(ds: &Dataset, source: EventSource) -> BTreeMap<UserId, BTreeSet<ItemId>> {
    let mut out: BTreeMap<UserId, BTreeSet<ItemId>> = BTreeMap::new();
    for (u, i) in source_pairs(ds, source) {
        out.entry(u).or_default().insert(i);
    }
    out
}

pub fn item_user_sets(ds: &Dataset) -> BTreeMap<ItemId, BTreeSet<UserId>> {
    let mut out: BTreeMap<ItemId, BTreeSet<UserId>> = BTreeMap::new();
    for (u, i) in source_pairs(ds, EventSource::Interactions) {
        out.entry(i).or_default().insert(u);
    }
    out
}

/// All-pairs Jaccard, sorted by score desc then id asc, truncated to `k`.
pub fn brute_top_k_jaccard(sets: &BTreeMap<u32, BTreeSet<u32>>, entity: u32, k: usize) -> Vec<(u32, f64)> {
    let Some(a) = sets.get(&entity) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for (&other, b) in sets {
        if other == entity {
            continue;
        }
        let inter = a.intersection(b).count();
        if inter == 0 {
            continue;
        }
        let union = a.union(b).count();
        out.push((other, inter as f64 / union as f64));
    }
    sort_scored(&mut out);
    out.truncate(k);
    out
}

pub fn sort_scored(v: &mut [(u32, f64)]) {
    v.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
}

pub fn field(item: &Item, f: TokenField) -> &TokenSet {
    match f {
        TokenField::Tags => &item.tags,
        TokenField::Title => &item.title,
    }
}

fn overlap(a: &TokenSet, b: &TokenSet) -> usize {
    a.as_slice().iter().filter(|t| b.as_slice().contains(t)).count()
}

/// Active items by token overlap with `query`, overlap ≥ 1.
pub fn brute_top_k_overlap(ds: &Dataset, query: &TokenSet, f: TokenField, k: usize) -> Vec<(u32, f64)> {
    let mut out: Vec<(u32, f64)> = ds
        .items
        .values()
        .filter(|i| i.active_during_test)
        .map(|i| (i.id, overlap(query, field(i, f)) as f64))
        .filter(|&(_, s)| s > 0.0)
        .collect();
    sort_scored(&mut out);
    out.truncate(k);
    out
}

// ---------------------------------------------------------------------------
// candidate generators

fn active(ds: &Dataset, item: ItemId) -> bool {
    ds.items.get(&item).is_some_and(|i| i.active_during_test)
}

/// Items of one user ordered by last week seen, then count, then id.
pub fn naive_recency(ds: &Dataset, user: UserId, source: EventSource) -> Vec<ItemId> {
    let events: Vec<(ItemId, u32)> = match source {
        EventSource::Interactions => ds
            .events
            .interactions()
            .iter()
            .filter(|e| e.user == user && e.kind != InteractionKind::Delete)
            .map(|e| (e.item, week_of(e.timestamp)))
            .collect(),
        EventSource::Impressions => ds
            .events
            .impressions()
            .iter()
            .filter(|e| e.user == user)
            .map(|e| (e.item, e.week))
            .collect(),
    };
    let mut stats: BTreeMap<ItemId, (u32, usize)> = BTreeMap::new();
    for (item, week) in events {
        let s = stats.entry(item).or_insert((0, 0));
        s.0 = s.0.max(week);
        s.1 += 1;
    }
    let mut v: Vec<(ItemId, (u32, usize))> = stats.into_iter().collect();
    v.sort_by(|a, b| (b.1).0.cmp(&(a.1).0).then((b.1).1.cmp(&(a.1).1)).then(a.0.cmp(&b.0)));
    v.into_iter().map(|x| x.0).collect()
}

pub fn naive_recent(ds: &Dataset, user: UserId, source: EventSource, cap: usize) -> Vec<ItemId> {
    naive_recency(ds, user, source)
        .into_iter()
        .filter(|&i| active(ds, i))
        .take(cap)
        .collect()
}

pub fn naive_similar_users(ds: &Dataset, user: UserId, source: EventSource, neighbors: usize, cap: usize) -> Vec<ItemId> {
    let sets = user_item_sets(ds, source);
    let mut out = Vec::new();
    for (n, _) in brute_top_k_jaccard(&sets, user, neighbors) {
        for item in naive_recency(ds, n, source) {
            if out.len() < cap && active(ds, item) && !out.contains(&item) {
                out.push(item);
            }
        }
    }
    out
}

pub fn naive_content(ds: &Dataset, user: UserId, source: EventSource, variant: OverlapVariant, cap: usize) -> Vec<ItemId> {
    let (from, to) = variant.fields();
    let basis = user_item_sets(ds, source).remove(&user).unwrap_or_default();
    let mut scored: Vec<(u32, f64)> = Vec::new();
    for cand in ds.items.values().filter(|i| i.active_during_test) {
        let best = basis
            .iter()
            .filter_map(|b| ds.items.get(b))
            .map(|b| overlap(field(b, from), field(cand, to)))
            .max()
            .unwrap_or(0);
        if best > 0 {
            scored.push((cand.id, best as f64));
        }
    }
    sort_scored(&mut scored);
    scored.into_iter().take(cap).map(|x| x.0).collect()
}

pub fn naive_jobroles(ds: &Dataset, user: UserId, f: TokenField, cap: usize) -> Vec<ItemId> {
    let Some(u) = ds.users.get(&user) else {
        return Vec::new();
    };
    brute_top_k_overlap(ds, &u.jobroles, f, cap)
        .into_iter()
        .map(|x| x.0)
        .collect()
}

pub fn naive_popular(ds: &Dataset, cap: usize) -> Vec<ItemId> {
    let mut counts: HashMap<ItemId, usize> = HashMap::new();
    for e in ds.events.interactions() {
        if e.kind != InteractionKind::Delete && active(ds, e.item) {
            *counts.entry(e.item).or_insert(0) += 1;
        }
    }
    let mut v: Vec<(u32, f64)> = counts.into_iter().map(|(i, c)| (i, c as f64)).collect();
    sort_scored(&mut v);
    v.into_iter().take(cap).map(|x| x.0).collect()
}
