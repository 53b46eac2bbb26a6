//! Per (user, candidate item) features.
//!
//! Every time-dependent feature is measured from the variant's anchor
//! timestamp, so a training split anchored at its boundary and the full
//! data anchored at its last event produce values on the same scale.

mod cluster;

use std::collections::HashMap;

use rayon::prelude::*;

use crate::candidates::{CandidateEntry, CandidateList, RANK_SLOTS};
use crate::dataset::{
    week_of, weekday_of, Dataset, GroundTruth, InteractionKind, Item, ItemId, Timestamp, User, UserId,
    SECONDS_PER_WEEK,
};
use crate::error::{Error, Result};
use crate::matrix::{FeatureDef, FeatureMatrix, FeatureSchema};
use crate::similarity::{EventSource, SimilarityIndex};

pub use cluster::{ItemClusterIndex, CLUSTER_WINDOW_SECONDS};

/// Value for undefined non-negative features.
pub const MISSING: f64 = -1.0;
/// Value for missing coordinates and signed differences.
pub const MISSING_SIGNED: f64 = -999.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureGroup {
    EventBased,
    Popularity,
    CollaborativeFiltering,
    UserTotals,
    Recency,
    MaxCommonTokens,
    CandidatePosition,
    UserItemCounts,
    ItemProperties,
    ContentSimilarity,
    GeoDistance,
    ItemCluster,
}

impl FeatureGroup {
    pub const ALL: [FeatureGroup; 12] = [
        FeatureGroup::EventBased,
        FeatureGroup::Popularity,
        FeatureGroup::CollaborativeFiltering,
        FeatureGroup::UserTotals,
        FeatureGroup::Recency,
        FeatureGroup::MaxCommonTokens,
        FeatureGroup::CandidatePosition,
        FeatureGroup::UserItemCounts,
        FeatureGroup::ItemProperties,
        FeatureGroup::ContentSimilarity,
        FeatureGroup::GeoDistance,
        FeatureGroup::ItemCluster,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureGroup::EventBased => "event_based",
            FeatureGroup::Popularity => "item_popularity",
            FeatureGroup::CollaborativeFiltering => "collaborative_filtering",
            FeatureGroup::UserTotals => "user_total_events",
            FeatureGroup::Recency => "recency",
            FeatureGroup::MaxCommonTokens => "max_common_tokens",
            FeatureGroup::CandidatePosition => "candidate_position",
            FeatureGroup::UserItemCounts => "user_item_events",
            FeatureGroup::ItemProperties => "item_properties",
            FeatureGroup::ContentSimilarity => "content_similarity",
            FeatureGroup::GeoDistance => "geo_distance",
            FeatureGroup::ItemCluster => "item_cluster",
        }
    }
}

type Defs<const N: usize> = [(&'static str, f64); N];

const EVENT_BASED: Defs<19> = [
    ("int_match_career_level", MISSING),
    ("int_match_discipline", MISSING),
    ("int_match_industry", MISSING),
    ("int_match_country", MISSING),
    ("int_match_region", MISSING),
    ("int_match_tags", MISSING),
    ("int_match_title", MISSING),
    ("imp_match_career_level", MISSING),
    ("imp_match_discipline", MISSING),
    ("imp_match_industry", MISSING),
    ("imp_match_country", MISSING),
    ("imp_match_region", MISSING),
    ("imp_match_tags", MISSING),
    ("imp_match_title", MISSING),
    ("users_match_career_level", MISSING),
    ("users_match_discipline", MISSING),
    ("users_match_industry", MISSING),
    ("users_match_country", MISSING),
    ("users_match_region", MISSING),
];

const POPULARITY: Defs<16> = [
    ("item_positive_count", MISSING),
    ("item_click_count", MISSING),
    ("item_bookmark_count", MISSING),
    ("item_reply_count", MISSING),
    ("item_delete_count", MISSING),
    ("item_unique_users", MISSING),
    ("item_impression_count", MISSING),
    ("item_last_week_count", MISSING),
    ("item_week_trend", MISSING),
    ("item_trend_mon", MISSING),
    ("item_trend_tue", MISSING),
    ("item_trend_wed", MISSING),
    ("item_trend_thu", MISSING),
    ("item_trend_fri", MISSING),
    ("item_trend_sat", MISSING),
    ("item_trend_sun", MISSING),
];

const COLLABORATIVE: Defs<3> = [
    ("cf_max_item_jaccard", MISSING),
    ("cf_max_user_jaccard", MISSING),
    ("cf_max_user_jaccard_imp", MISSING),
];

const USER_TOTALS: Defs<11> = [
    ("user_positive_events", MISSING),
    ("user_unique_items", MISSING),
    ("user_last_week_events", MISSING),
    ("user_last_week_unique", MISSING),
    ("user_click_count", MISSING),
    ("user_bookmark_count", MISSING),
    ("user_reply_count", MISSING),
    ("user_delete_count", MISSING),
    ("user_impressions", MISSING),
    ("user_unique_impressions", MISSING),
    ("user_impressions_last_week", MISSING),
];

const RECENCY: Defs<6> = [
    ("secs_since_user_event", MISSING),
    ("secs_since_user_item_event", MISSING),
    ("secs_since_item_event", MISSING),
    ("weeks_since_user_impression", MISSING),
    ("weeks_since_user_item_impression", MISSING),
    ("weeks_since_item_impression", MISSING),
];

const COMMON_TOKENS: Defs<4> = [
    ("max_common_tags_int", MISSING),
    ("max_common_title_int", MISSING),
    ("max_common_tags_imp", MISSING),
    ("max_common_title_imp", MISSING),
];

const USER_ITEM: Defs<6> = [
    ("ui_positive_count", MISSING),
    ("ui_count_user_last_week", MISSING),
    ("ui_count_last_week", MISSING),
    ("ui_delete_count", MISSING),
    ("ui_impression_weeks", MISSING),
    ("ui_impressed_last_week", MISSING),
];

const ITEM_PROPERTIES: Defs<11> = [
    ("item_career_level", MISSING),
    ("item_discipline", MISSING),
    ("item_industry", MISSING),
    ("item_country", MISSING),
    ("item_region", MISSING),
    ("item_employment", MISSING),
    ("item_latitude", MISSING_SIGNED),
    ("item_longitude", MISSING_SIGNED),
    ("item_created_at", MISSING),
    ("item_age", MISSING_SIGNED),
    ("item_tag_count", MISSING),
];

const CONTENT: Defs<7> = [
    ("career_level_diff", MISSING_SIGNED),
    ("jobroles_title_overlap", MISSING),
    ("jobroles_tags_overlap", MISSING),
    ("same_discipline", MISSING),
    ("same_industry", MISSING),
    ("same_country", MISSING),
    ("same_region", MISSING),
];

const GEO: Defs<1> = [("min_distance_to_clicked", MISSING)];

const CLUSTER: Defs<2> = [("in_click_cluster", MISSING), ("click_cluster_links", MISSING)];

/// Rank columns, then the number of generators that proposed the item.
pub const POSITION_WIDTH: usize = RANK_SLOTS.len() + 1;

impl FeatureSchema {
    /// The column layout produced by [`FeatureContext`].
    pub fn standard() -> FeatureSchema {
        fn push(out: &mut Vec<FeatureDef>, group: FeatureGroup, defs: &[(&str, f64)]) {
            out.extend(defs.iter().map(|&(n, s)| FeatureDef::new(n, group.name(), s)));
        }
        let mut defs = Vec::new();
        push(&mut defs, FeatureGroup::EventBased, &EVENT_BASED);
        push(&mut defs, FeatureGroup::Popularity, &POPULARITY);
        push(&mut defs, FeatureGroup::CollaborativeFiltering, &COLLABORATIVE);
        push(&mut defs, FeatureGroup::UserTotals, &USER_TOTALS);
        push(&mut defs, FeatureGroup::Recency, &RECENCY);
        push(&mut defs, FeatureGroup::MaxCommonTokens, &COMMON_TOKENS);
        for slot in RANK_SLOTS {
            defs.push(FeatureDef::new(
                format!("rank_{}", slot.name()),
                FeatureGroup::CandidatePosition.name(),
                MISSING,
            ));
        }
        defs.push(FeatureDef::new(
            "candidate_sources",
            FeatureGroup::CandidatePosition.name(),
            MISSING,
        ));
        push(&mut defs, FeatureGroup::UserItemCounts, &USER_ITEM);
        push(&mut defs, FeatureGroup::ItemProperties, &ITEM_PROPERTIES);
        push(&mut defs, FeatureGroup::ContentSimilarity, &CONTENT);
        push(&mut defs, FeatureGroup::GeoDistance, &GEO);
        push(&mut defs, FeatureGroup::ItemCluster, &CLUSTER);
        FeatureSchema::new(defs).expect("standard feature names are unique")
    }
}

fn item_attrs(i: &Item) -> [u32; 5] {
    [i.career_level, i.discipline_id, i.industry_id, i.country, i.region]
}

fn user_attrs(u: &User) -> [u32; 5] {
    [u.career_level, u.discipline_id, u.industry_id, u.country, u.region]
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        MISSING
    } else {
        num as f64 / den as f64
    }
}

fn smoothed_trend(recent: u32, before: u32) -> f64 {
    (recent as f64 + 1.0) / (before as f64 + 1.0)
}

#[derive(Debug, Clone, Default)]
struct ItemStats {
    positives: u32,
    kinds: [u32; 4],
    impressions: u32,
    last_week: u32,
    previous_week: u32,
    weekday_last: [u32; 7],
    weekday_previous: [u32; 7],
    last_positive: Option<Timestamp>,
    last_impression_week: Option<u32>,
    /// Attribute value histograms of the distinct users who positively interacted.
    user_attrs: [HashMap<u32, u32>; 5],
}

#[derive(Debug, Clone, Copy, Default)]
struct UserItemStats {
    positives: u32,
    last_positive: Option<Timestamp>,
    in_user_week: u32,
    in_data_week: u32,
    deletes: u32,
    impression_weeks: u32,
    last_impression_week: Option<u32>,
}

/// Shared, read-only state for one dataset variant.
pub struct FeatureContext<'a> {
    dataset: &'a Dataset,
    anchor: Timestamp,
    anchor_week: u32,
    similarity: SimilarityIndex,
    clusters: ItemClusterIndex,
    items: HashMap<ItemId, ItemStats>,
    schema: FeatureSchema,
}

/// Everything about one user that is reused across their candidates.
pub struct UserView<'a> {
    pub user: UserId,
    profile: Option<&'a User>,
    items: &'a [ItemId],
    impressions: &'a [ItemId],
    int_items: Vec<&'a Item>,
    imp_items: Vec<&'a Item>,
    int_attrs: [HashMap<u32, u32>; 5],
    imp_attrs: [HashMap<u32, u32>; 5],
    positive_events: u32,
    kinds: [u32; 4],
    last_week_events: u32,
    last_week_unique: u32,
    impression_rows: u32,
    impressions_last_week: u32,
    last_positive: Option<Timestamp>,
    last_impression_week: Option<u32>,
    per_item: HashMap<ItemId, UserItemStats>,
    item_jaccard: HashMap<ItemId, f64>,
    user_jaccard: HashMap<UserId, f64>,
    user_jaccard_imp: HashMap<UserId, f64>,
    cluster_links: HashMap<ItemId, u32>,
}

/// Keys, row-major values and labels for one user.
type RowBlock = (Vec<(UserId, ItemId)>, Vec<f64>, Vec<u8>);

impl<'a> FeatureContext<'a> {
    /// Anchored at the variant's last interaction.
    pub fn for_dataset(dataset: &'a Dataset) -> Self {
        Self::new(dataset, dataset.events.max_timestamp().unwrap_or(0))
    }

    pub fn new(dataset: &'a Dataset, anchor: Timestamp) -> Self {
        let similarity = SimilarityIndex::build(dataset);
        let clusters = ItemClusterIndex::build(&dataset.events, CLUSTER_WINDOW_SECONDS);
        let items = Self::item_stats(dataset, &similarity, anchor);
        FeatureContext {
            dataset,
            anchor,
            anchor_week: week_of(anchor),
            similarity,
            clusters,
            items,
            schema: FeatureSchema::standard(),
        }
    }

    fn item_stats(dataset: &Dataset, similarity: &SimilarityIndex, anchor: Timestamp) -> HashMap<ItemId, ItemStats> {
        let mut stats: HashMap<ItemId, ItemStats> = HashMap::new();
        for e in dataset.events.interactions() {
            let s = stats.entry(e.item).or_default();
            s.kinds[e.kind.index()] += 1;
            if !e.kind.is_positive() {
                continue;
            }
            s.positives += 1;
            s.last_positive = s.last_positive.max(Some(e.timestamp));
            let age = anchor - e.timestamp;
            if (0..SECONDS_PER_WEEK).contains(&age) {
                s.last_week += 1;
                s.weekday_last[weekday_of(e.timestamp)] += 1;
            } else if (SECONDS_PER_WEEK..2 * SECONDS_PER_WEEK).contains(&age) {
                s.previous_week += 1;
                s.weekday_previous[weekday_of(e.timestamp)] += 1;
            }
        }
        for e in dataset.events.impressions() {
            let s = stats.entry(e.item).or_default();
            s.impressions += 1;
            s.last_impression_week = s.last_impression_week.max(Some(e.week));
        }
        for (&item, s) in stats.iter_mut() {
            for &u in similarity.item_users(item) {
                if let Some(profile) = dataset.user(u) {
                    for (k, v) in user_attrs(profile).into_iter().enumerate() {
                        *s.user_attrs[k].entry(v).or_default() += 1;
                    }
                }
            }
        }
        stats
    }

    pub fn anchor(&self) -> Timestamp {
        self.anchor
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn clusters(&self) -> &ItemClusterIndex {
        &self.clusters
    }

    pub fn similarity(&self) -> &SimilarityIndex {
        &self.similarity
    }

    fn in_data_week(&self, ts: Timestamp) -> bool {
        (0..SECONDS_PER_WEEK).contains(&(self.anchor - ts))
    }

    pub fn user_view(&self, user: UserId) -> UserView<'_> {
        let ds = self.dataset;
        let sim = &self.similarity;
        let items = sim.user_items(user, EventSource::Interactions);
        let impressions = sim.user_items(user, EventSource::Impressions);
        let int_items: Vec<&Item> = items.iter().filter_map(|&i| ds.item(i)).collect();
        let imp_items: Vec<&Item> = impressions.iter().filter_map(|&i| ds.item(i)).collect();
        let histogram = |list: &[&Item]| {
            let mut h: [HashMap<u32, u32>; 5] = Default::default();
            for item in list {
                for (k, v) in item_attrs(item).into_iter().enumerate() {
                    *h[k].entry(v).or_default() += 1;
                }
            }
            h
        };

        let mut per_item: HashMap<ItemId, UserItemStats> = HashMap::new();
        let mut kinds = [0u32; 4];
        let mut positive_events = 0;
        let mut last_week_events = 0;
        let mut last_week_items = Vec::new();
        let mut last_positive = None;
        for e in ds.events.user_interactions(user) {
            kinds[e.kind.index()] += 1;
            let s = per_item.entry(e.item).or_default();
            if e.kind == InteractionKind::Delete {
                s.deletes += 1;
                continue;
            }
            positive_events += 1;
            s.positives += 1;
            s.last_positive = s.last_positive.max(Some(e.timestamp));
            last_positive = last_positive.max(Some(e.timestamp));
            if self.in_data_week(e.timestamp) {
                last_week_events += 1;
                s.in_data_week += 1;
                last_week_items.push(e.item);
            }
        }
        if let Some(last) = last_positive {
            for e in ds.events.user_interactions(user) {
                if e.kind.is_positive() && (0..SECONDS_PER_WEEK).contains(&(last - e.timestamp)) {
                    per_item.entry(e.item).or_default().in_user_week += 1;
                }
            }
        }
        last_week_items.sort_unstable();
        last_week_items.dedup();

        let mut impression_rows = 0;
        let mut impressions_last_week = 0;
        let mut last_impression_week = None;
        for e in ds.events.user_impressions(user) {
            impression_rows += 1;
            if e.week == self.anchor_week {
                impressions_last_week += 1;
            }
            last_impression_week = last_impression_week.max(Some(e.week));
            let s = per_item.entry(e.item).or_default();
            s.impression_weeks += 1;
            s.last_impression_week = s.last_impression_week.max(Some(e.week));
        }

        let item_index = sim.item_sets(EventSource::Interactions);
        let mut item_jaccard: HashMap<ItemId, f64> = HashMap::new();
        for &seen in items {
            for (other, score) in item_index.jaccard_scores(item_index.set(seen), Some(seen)) {
                let slot = item_jaccard.entry(other).or_insert(0.0);
                if score > *slot {
                    *slot = score;
                }
            }
        }
        let user_jaccard = sim
            .user_sets(EventSource::Interactions)
            .jaccard_scores(items, Some(user));
        let user_jaccard_imp = sim
            .user_sets(EventSource::Impressions)
            .jaccard_scores(impressions, Some(user));

        let mut cluster_links: HashMap<ItemId, u32> = HashMap::new();
        for &seen in items {
            for &linked in self.clusters.cluster(seen).into_iter().flatten() {
                *cluster_links.entry(linked).or_default() += 1;
            }
        }

        UserView {
            user,
            profile: ds.user(user),
            items,
            impressions,
            int_attrs: histogram(&int_items),
            imp_attrs: histogram(&imp_items),
            int_items,
            imp_items,
            positive_events,
            kinds,
            last_week_events,
            last_week_unique: last_week_items.len() as u32,
            impression_rows,
            impressions_last_week,
            last_positive,
            last_impression_week,
            per_item,
            item_jaccard,
            user_jaccard,
            user_jaccard_imp,
            cluster_links,
        }
    }

    fn item_stats_of(&self, item: ItemId) -> Option<&ItemStats> {
        self.items.get(&item)
    }

    /// Share of the user's interacted / impressed items that agree with `item`
    /// on each attribute, then the share of the item's users that agree with the user.
    pub fn event_match_features(&self, view: &UserView, item: ItemId) -> [f64; EVENT_BASED.len()] {
        let mut out = [MISSING; EVENT_BASED.len()];
        let Some(target) = self.dataset.item(item) else {
            return out;
        };
        let attrs = item_attrs(target);
        for (offset, list, hist) in [(0, &view.int_items, &view.int_attrs), (7, &view.imp_items, &view.imp_attrs)] {
            let n = list.len();
            for k in 0..5 {
                out[offset + k] = ratio(hist[k].get(&attrs[k]).copied().unwrap_or(0) as usize, n);
            }
            let tags = list.iter().filter(|i| i.tags.intersection_len(&target.tags) > 0).count();
            let title = list.iter().filter(|i| i.title.intersection_len(&target.title) > 0).count();
            out[offset + 5] = ratio(tags, n);
            out[offset + 6] = ratio(title, n);
        }
        if let (Some(profile), Some(stats)) = (view.profile, self.item_stats_of(item)) {
            let n = self.similarity.item_users(item).len();
            for (k, v) in user_attrs(profile).into_iter().enumerate() {
                out[14 + k] = ratio(stats.user_attrs[k].get(&v).copied().unwrap_or(0) as usize, n);
            }
        }
        out
    }

    pub fn popularity_features(&self, item: ItemId) -> [f64; POPULARITY.len()] {
        let empty = ItemStats::default();
        let s = self.item_stats_of(item).unwrap_or(&empty);
        let mut out = [0.0; POPULARITY.len()];
        out[0] = s.positives as f64;
        for k in 0..4 {
            out[1 + k] = s.kinds[k] as f64;
        }
        out[5] = self.similarity.item_users(item).len() as f64;
        out[6] = s.impressions as f64;
        out[7] = s.last_week as f64;
        out[8] = smoothed_trend(s.last_week, s.previous_week);
        for d in 0..7 {
            out[9 + d] = smoothed_trend(s.weekday_last[d], s.weekday_previous[d]);
        }
        out
    }

    /// Best Jaccard between `item` and another interacted item, and between
    /// the user and another user of `item` (interactions, then impressions).
    pub fn cf_similarity_features(&self, view: &UserView, item: ItemId) -> [f64; COLLABORATIVE.len()] {
        let others = view.items.iter().filter(|&&i| i != item).count();
        let item_side = if others == 0 {
            MISSING
        } else {
            view.item_jaccard.get(&item).copied().unwrap_or(0.0)
        };
        let best_user = |users: &[UserId], scores: &HashMap<UserId, f64>| {
            users
                .iter()
                .filter(|&&u| u != view.user)
                .map(|u| scores.get(u).copied().unwrap_or(0.0))
                .fold(None, |acc: Option<f64>, s| Some(acc.map_or(s, |a| a.max(s))))
                .unwrap_or(MISSING)
        };
        [
            item_side,
            best_user(self.similarity.item_users(item), &view.user_jaccard),
            best_user(
                self.similarity.item_sets(EventSource::Impressions).set(item),
                &view.user_jaccard_imp,
            ),
        ]
    }

    pub fn user_activity_features(&self, view: &UserView) -> [f64; USER_TOTALS.len()] {
        [
            view.positive_events as f64,
            view.items.len() as f64,
            view.last_week_events as f64,
            view.last_week_unique as f64,
            view.kinds[0] as f64,
            view.kinds[1] as f64,
            view.kinds[2] as f64,
            view.kinds[3] as f64,
            view.impression_rows as f64,
            view.impressions.len() as f64,
            view.impressions_last_week as f64,
        ]
    }

    pub fn recency_features(&self, view: &UserView, item: ItemId) -> [f64; RECENCY.len()] {
        let secs = |ts: Option<Timestamp>| ts.map_or(MISSING, |t| (self.anchor - t) as f64);
        let weeks = |w: Option<u32>| w.map_or(MISSING, |w| self.anchor_week as f64 - w as f64);
        let ui = view.per_item.get(&item).copied().unwrap_or_default();
        let stats = self.item_stats_of(item);
        [
            secs(view.last_positive),
            secs(ui.last_positive),
            secs(stats.and_then(|s| s.last_positive)),
            weeks(view.last_impression_week),
            weeks(ui.last_impression_week),
            weeks(stats.and_then(|s| s.last_impression_week)),
        ]
    }

    /// Largest tag / title overlap between `item` and any interacted or
    /// impressed item, the item itself included.
    pub fn common_token_features(&self, view: &UserView, item: ItemId) -> [f64; COMMON_TOKENS.len()] {
        let Some(target) = self.dataset.item(item) else {
            return [MISSING; COMMON_TOKENS.len()];
        };
        let best = |list: &[&Item], tags: bool| {
            list.iter()
                .map(|i| {
                    if tags {
                        i.tags.intersection_len(&target.tags)
                    } else {
                        i.title.intersection_len(&target.title)
                    }
                })
                .max()
                .map_or(MISSING, |m| m as f64)
        };
        [
            best(&view.int_items, true),
            best(&view.int_items, false),
            best(&view.imp_items, true),
            best(&view.imp_items, false),
        ]
    }

    pub fn candidate_position_features(
        &self,
        list: &CandidateList,
        item: ItemId,
    ) -> Result<[f64; POSITION_WIDTH]> {
        let entry: &CandidateEntry = list.entry(item).ok_or(Error::MissingCandidate { user: list.user, item })?;
        let mut out = [MISSING; POSITION_WIDTH];
        for (k, rank) in entry.ranks.iter().enumerate() {
            if let Some(r) = rank {
                out[k] = *r as f64;
            }
        }
        out[RANK_SLOTS.len()] = entry.source_count() as f64;
        Ok(out)
    }

    pub fn user_item_recent_count(&self, view: &UserView, item: ItemId) -> [f64; USER_ITEM.len()] {
        let s = view.per_item.get(&item).copied().unwrap_or_default();
        [
            s.positives as f64,
            s.in_user_week as f64,
            s.in_data_week as f64,
            s.deletes as f64,
            s.impression_weeks as f64,
            f64::from(u8::from(s.last_impression_week == Some(self.anchor_week))),
        ]
    }

    pub fn item_property_features(&self, item: ItemId) -> [f64; ITEM_PROPERTIES.len()] {
        let Some(i) = self.dataset.item(item) else {
            return ITEM_PROPERTIES.map(|(_, s)| s);
        };
        let (lat, lon) = i
            .location
            .map_or((MISSING_SIGNED, MISSING_SIGNED), |g| (g.latitude, g.longitude));
        [
            i.career_level as f64,
            i.discipline_id as f64,
            i.industry_id as f64,
            i.country as f64,
            i.region as f64,
            i.employment as f64,
            lat,
            lon,
            i.created_at.map_or(MISSING, |t| t as f64),
            i.created_at.map_or(MISSING_SIGNED, |t| (self.anchor - t) as f64),
            i.tags.len() as f64,
        ]
    }

    pub fn content_similarity_features(&self, view: &UserView, item: ItemId) -> [f64; CONTENT.len()] {
        let (Some(u), Some(i)) = (view.profile, self.dataset.item(item)) else {
            return CONTENT.map(|(_, s)| s);
        };
        let same = |a: u32, b: u32| f64::from(u8::from(a == b));
        [
            i.career_level as f64 - u.career_level as f64,
            u.jobroles.intersection_len(&i.title) as f64,
            u.jobroles.intersection_len(&i.tags) as f64,
            same(u.discipline_id, i.discipline_id),
            same(u.industry_id, i.industry_id),
            same(u.country, i.country),
            same(u.region, i.region),
        ]
    }

    /// Euclidean distance in degrees to the closest interacted item with coordinates.
    pub fn geo_distance_feature(&self, view: &UserView, item: ItemId) -> [f64; GEO.len()] {
        let Some(here) = self.dataset.item(item).and_then(|i| i.location) else {
            return [MISSING];
        };
        let best = view
            .int_items
            .iter()
            .filter_map(|i| i.location)
            .map(|g| g.distance(&here))
            .fold(None, |acc: Option<f64>, d| Some(acc.map_or(d, |a| a.min(d))));
        [best.unwrap_or(MISSING)]
    }

    pub fn cluster_features(&self, view: &UserView, item: ItemId) -> [f64; CLUSTER.len()] {
        let links = view.cluster_links.get(&item).copied().unwrap_or(0);
        [f64::from(u8::from(links > 0)), links as f64]
    }

    /// One row in schema order.
    pub fn pair_row(&self, view: &UserView, list: &CandidateList, item: ItemId) -> Result<Vec<f64>> {
        let mut row = Vec::with_capacity(self.schema.len());
        row.extend(self.event_match_features(view, item));
        row.extend(self.popularity_features(item));
        row.extend(self.cf_similarity_features(view, item));
        row.extend(self.user_activity_features(view));
        row.extend(self.recency_features(view, item));
        row.extend(self.common_token_features(view, item));
        row.extend(self.candidate_position_features(list, item)?);
        row.extend(self.user_item_recent_count(view, item));
        row.extend(self.item_property_features(item));
        row.extend(self.content_similarity_features(view, item));
        row.extend(self.geo_distance_feature(view, item));
        row.extend(self.cluster_features(view, item));
        debug_assert_eq!(row.len(), self.schema.len());
        Ok(row)
    }

    /// Every candidate of every list, labelled from `truth` when given.
    pub fn build_matrix(&self, lists: &[CandidateList], truth: Option<&GroundTruth>) -> Result<FeatureMatrix> {
        self.build_selected(lists, truth.is_some(), |list| {
            list.items()
                .map(|i| (i, truth.is_some_and(|t| t.contains(list.user, i))))
                .collect()
        })
    }

    /// Rows chosen per list by `select` as (item, label) pairs; users in list order.
    pub fn build_selected<F>(&self, lists: &[CandidateList], labelled: bool, select: F) -> Result<FeatureMatrix>
    where
        F: Fn(&CandidateList) -> Vec<(ItemId, bool)> + Sync,
    {
        let blocks: Vec<Result<RowBlock>> = lists
            .par_iter()
            .map(|list| {
                let picked = select(list);
                let view = self.user_view(list.user);
                let mut keys = Vec::with_capacity(picked.len());
                let mut values = Vec::with_capacity(picked.len() * self.schema.len());
                let mut labels = Vec::with_capacity(picked.len());
                for (item, label) in picked {
                    values.extend(self.pair_row(&view, list, item)?);
                    keys.push((list.user, item));
                    labels.push(u8::from(label));
                }
                Ok((keys, values, labels))
            })
            .collect();
        let mut keys = Vec::new();
        let mut values = Vec::new();
        let mut labels = Vec::new();
        for block in blocks {
            let (k, v, l) = block?;
            keys.extend(k);
            values.extend(v);
            labels.extend(l);
        }
        FeatureMatrix::new(self.schema.clone(), keys, values, labelled.then_some(labels))
    }
}
