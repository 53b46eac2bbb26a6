//! Entities, event log and the temporal train/holdout split.
//!
//! Interactions carry unix-second timestamps, impressions only a week index.
//! Both are placed on one Monday-aligned week scale (see [`week_of`]) so
//! that "most recent week" means the same thing for either event source.

mod io;
mod split;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

pub(crate) use io::{data_rows, read_file, write_file};
pub use io::{iso_week_index, iso_year_week, DatasetPaths};
pub use io::{load_dataset, write_dataset, KindCodes, LoadOptions, LoadReport, ReferencePolicy};
pub use split::{build_ground_truth, temporal_split, GroundTruth, HoldoutEvents, SplitOutcome};

pub type UserId = u32;
pub type ItemId = u32;
pub type Token = u32;
pub type Timestamp = i64;

pub const SECONDS_PER_DAY: i64 = 86_400;
pub const SECONDS_PER_WEEK: i64 = 604_800;

/// Monday-aligned week number since the unix epoch (1970-01-01 was a Thursday).
pub fn week_of(ts: Timestamp) -> u32 {
    (ts.div_euclid(SECONDS_PER_DAY) + 3).div_euclid(7) as u32
}

/// Day of week, 0 = Monday.
pub fn weekday_of(ts: Timestamp) -> usize {
    (ts.div_euclid(SECONDS_PER_DAY) + 3).rem_euclid(7) as usize
}

/// Sorted, duplicate-free set of integer tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSet(Vec<Token>);

impl TokenSet {
    pub fn new(mut tokens: Vec<Token>) -> Self {
        tokens.sort_unstable();
        tokens.dedup();
        TokenSet(tokens)
    }

    pub fn as_slice(&self) -> &[Token] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, token: Token) -> bool {
        self.0.binary_search(&token).is_ok()
    }

    pub fn intersection_len(&self, other: &TokenSet) -> usize {
        crate::similarity::intersection_len(&self.0, &other.0)
    }
}

impl FromIterator<Token> for TokenSet {
    fn from_iter<I: IntoIterator<Item = Token>>(iter: I) -> Self {
        TokenSet::new(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct User {
    pub id: UserId,
    pub jobroles: TokenSet,
    pub career_level: u32,
    pub discipline_id: u32,
    pub industry_id: u32,
    pub country: u32,
    pub region: u32,
    pub experience_n_entries_class: u32,
    pub experience_years_experience: u32,
    pub experience_years_in_current: u32,
    pub edu_degree: u32,
    pub edu_fieldofstudies: TokenSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub latitude: f64,
    pub longitude: f64,
}

impl GeoPoint {
    /// Plain Euclidean distance in degrees.
    pub fn distance(&self, other: &GeoPoint) -> f64 {
        (self.latitude - other.latitude).hypot(self.longitude - other.longitude)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub id: ItemId,
    pub title: TokenSet,
    pub tags: TokenSet,
    pub career_level: u32,
    pub discipline_id: u32,
    pub industry_id: u32,
    pub country: u32,
    pub region: u32,
    pub employment: u32,
    pub location: Option<GeoPoint>,
    pub created_at: Option<Timestamp>,
    pub active_during_test: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum InteractionKind {
    Click,
    Bookmark,
    Reply,
    Delete,
}

impl InteractionKind {
    pub const ALL: [InteractionKind; 4] = [
        InteractionKind::Click,
        InteractionKind::Bookmark,
        InteractionKind::Reply,
        InteractionKind::Delete,
    ];

    /// Click, bookmark and reply count as positive feedback.
    pub fn is_positive(self) -> bool {
        !matches!(self, InteractionKind::Delete)
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Interaction {
    pub user: UserId,
    pub item: ItemId,
    pub kind: InteractionKind,
    pub timestamp: Timestamp,
}

impl Interaction {
    pub fn week(&self) -> u32 {
        week_of(self.timestamp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Impression {
    pub user: UserId,
    pub item: ItemId,
    pub week: u32,
}

/// Flat event lists plus per-user and per-item adjacency.
///
/// Index entries are positions into the flat lists. Per-user interaction
/// positions are ordered by `(timestamp, position)`, everything else by
/// position.
#[derive(Debug, Clone, Default)]
pub struct EventLog {
    interactions: Vec<Interaction>,
    impressions: Vec<Impression>,
    interactions_by_user: HashMap<UserId, Vec<u32>>,
    interactions_by_item: HashMap<ItemId, Vec<u32>>,
    impressions_by_user: HashMap<UserId, Vec<u32>>,
    impressions_by_item: HashMap<ItemId, Vec<u32>>,
    max_timestamp: Option<Timestamp>,
    min_timestamp: Option<Timestamp>,
    max_week: Option<u32>,
    min_week: Option<u32>,
}

impl EventLog {
    pub fn new(interactions: Vec<Interaction>, impressions: Vec<Impression>) -> Self {
        let mut interactions_by_user: HashMap<UserId, Vec<u32>> = HashMap::new();
        let mut interactions_by_item: HashMap<ItemId, Vec<u32>> = HashMap::new();
        for (pos, ev) in interactions.iter().enumerate() {
            interactions_by_user.entry(ev.user).or_default().push(pos as u32);
            interactions_by_item.entry(ev.item).or_default().push(pos as u32);
        }
        for positions in interactions_by_user.values_mut() {
            positions.sort_by_key(|&p| (interactions[p as usize].timestamp, p));
        }

        let mut impressions_by_user: HashMap<UserId, Vec<u32>> = HashMap::new();
        let mut impressions_by_item: HashMap<ItemId, Vec<u32>> = HashMap::new();
        for (pos, ev) in impressions.iter().enumerate() {
            impressions_by_user.entry(ev.user).or_default().push(pos as u32);
            impressions_by_item.entry(ev.item).or_default().push(pos as u32);
        }

        let max_timestamp = interactions.iter().map(|e| e.timestamp).max();
        let min_timestamp = interactions.iter().map(|e| e.timestamp).min();
        let max_week = impressions.iter().map(|e| e.week).max();
        let min_week = impressions.iter().map(|e| e.week).min();

        EventLog {
            interactions,
            impressions,
            interactions_by_user,
            interactions_by_item,
            impressions_by_user,
            impressions_by_item,
            max_timestamp,
            min_timestamp,
            max_week,
            min_week,
        }
    }

    pub fn interactions(&self) -> &[Interaction] {
        &self.interactions
    }

    pub fn impressions(&self) -> &[Impression] {
        &self.impressions
    }

    /// Interactions of `user` in chronological order.
    pub fn user_interactions(&self, user: UserId) -> impl Iterator<Item = &Interaction> + '_ {
        Self::resolve(&self.interactions, self.interactions_by_user.get(&user))
    }

    pub fn item_interactions(&self, item: ItemId) -> impl Iterator<Item = &Interaction> + '_ {
        Self::resolve(&self.interactions, self.interactions_by_item.get(&item))
    }

    pub fn user_impressions(&self, user: UserId) -> impl Iterator<Item = &Impression> + '_ {
        Self::resolve(&self.impressions, self.impressions_by_user.get(&user))
    }

    pub fn item_impressions(&self, item: ItemId) -> impl Iterator<Item = &Impression> + '_ {
        Self::resolve(&self.impressions, self.impressions_by_item.get(&item))
    }

    fn resolve<'a, T>(events: &'a [T], positions: Option<&'a Vec<u32>>) -> impl Iterator<Item = &'a T> + 'a {
        positions
            .map(|p| p.as_slice())
            .unwrap_or(&[])
            .iter()
            .map(move |&p| &events[p as usize])
    }

    /// Maximal interaction timestamp in the log.
    pub fn max_timestamp(&self) -> Option<Timestamp> {
        self.max_timestamp
    }

    pub fn min_timestamp(&self) -> Option<Timestamp> {
        self.min_timestamp
    }

    pub fn max_week(&self) -> Option<u32> {
        self.max_week
    }

    pub fn min_week(&self) -> Option<u32> {
        self.min_week
    }

    /// Last week covered by any event, from either source.
    pub fn last_week(&self) -> Option<u32> {
        self.max_timestamp.map(week_of).max(self.max_week)
    }
}

/// Users, items and events of one dataset variant (full data or a training split).
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub users: BTreeMap<UserId, User>,
    pub items: BTreeMap<ItemId, Item>,
    pub events: EventLog,
    pub target_users: BTreeSet<UserId>,
}

impl Dataset {
    pub fn user(&self, id: UserId) -> Option<&User> {
        self.users.get(&id)
    }

    pub fn item(&self, id: ItemId) -> Option<&Item> {
        self.items.get(&id)
    }

    pub fn is_active(&self, id: ItemId) -> bool {
        self.items.get(&id).is_some_and(|i| i.active_during_test)
    }

    /// Items the user deleted.
    pub fn deleted_items(&self, user: UserId) -> BTreeSet<ItemId> {
        self.events
            .user_interactions(user)
            .filter(|e| e.kind == InteractionKind::Delete)
            .map(|e| e.item)
            .collect()
    }

    /// Same entities, different events.
    pub fn with_events(&self, events: EventLog) -> Dataset {
        Dataset {
            users: self.users.clone(),
            items: self.items.clone(),
            events,
            target_users: self.target_users.clone(),
        }
    }
}
