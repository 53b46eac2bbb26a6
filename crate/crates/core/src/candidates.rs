//! Per-user candidate preselection.
//!
//! Nine generator categories each propose up to `per_category` items; the
//! two content-overlap categories run four scoring variants each, giving 15
//! ranked lists ([`RANK_SLOTS`]). Lists are merged into one deduplicated
//! [`CandidateList`] that remembers every rank an item earned.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, ItemId, Token, UserId};
use crate::error::{Error, Result};
use crate::similarity::{EventSource, ItemTokenIndex, SimilarityIndex, TokenField};
use crate::dataset::GroundTruth;

pub const DEFAULT_PER_CATEGORY: usize = 60;
pub const DEFAULT_NEIGHBORS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum GeneratorId {
    RecentInteractions = 1,
    RecentImpressions = 2,
    SimilarUserInteractions = 3,
    SimilarUserImpressions = 4,
    ContentKnnInteractions = 5,
    ContentKnnImpressions = 6,
    JobrolesTags = 7,
    JobrolesTitle = 8,
    GlobalPopular = 9,
}

impl GeneratorId {
    pub const ALL: [GeneratorId; 9] = [
        GeneratorId::RecentInteractions,
        GeneratorId::RecentImpressions,
        GeneratorId::SimilarUserInteractions,
        GeneratorId::SimilarUserImpressions,
        GeneratorId::ContentKnnInteractions,
        GeneratorId::ContentKnnImpressions,
        GeneratorId::JobrolesTags,
        GeneratorId::JobrolesTitle,
        GeneratorId::GlobalPopular,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            GeneratorId::RecentInteractions => "recent_interactions",
            GeneratorId::RecentImpressions => "recent_impressions",
            GeneratorId::SimilarUserInteractions => "similar_user_interactions",
            GeneratorId::SimilarUserImpressions => "similar_user_impressions",
            GeneratorId::ContentKnnInteractions => "content_knn_interactions",
            GeneratorId::ContentKnnImpressions => "content_knn_impressions",
            GeneratorId::JobrolesTags => "jobroles_tags",
            GeneratorId::JobrolesTitle => "jobroles_title",
            GeneratorId::GlobalPopular => "global_popular",
        }
    }
}

/// How a candidate item `i` is scored against a basis item `i'`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OverlapVariant {
    /// |tags(i') ∩ tags(i)|
    TagsTags,
    /// |title(i') ∩ title(i)|
    TitleTitle,
    /// |title(i') ∩ tags(i)|
    TitleToTags,
    /// |tags(i') ∩ title(i)|
    TagsToTitle,
}

impl OverlapVariant {
    pub const ALL: [OverlapVariant; 4] = [
        OverlapVariant::TagsTags,
        OverlapVariant::TitleTitle,
        OverlapVariant::TitleToTags,
        OverlapVariant::TagsToTitle,
    ];

    /// (field read from the basis item, field read from the candidate)
    pub fn fields(self) -> (TokenField, TokenField) {
        match self {
            OverlapVariant::TagsTags => (TokenField::Tags, TokenField::Tags),
            OverlapVariant::TitleTitle => (TokenField::Title, TokenField::Title),
            OverlapVariant::TitleToTags => (TokenField::Title, TokenField::Tags),
            OverlapVariant::TagsToTitle => (TokenField::Tags, TokenField::Title),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            OverlapVariant::TagsTags => "tags_tags",
            OverlapVariant::TitleTitle => "title_title",
            OverlapVariant::TitleToTags => "title_tags",
            OverlapVariant::TagsToTitle => "tags_title",
        }
    }
}

/// One ranked list: a generator plus, for the content categories, its scoring variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RankSlot {
    pub generator: GeneratorId,
    pub variant: Option<OverlapVariant>,
}

const fn slot(generator: GeneratorId, variant: Option<OverlapVariant>) -> RankSlot {
    RankSlot { generator, variant }
}

pub const SLOT_COUNT: usize = 15;

pub const RANK_SLOTS: [RankSlot; SLOT_COUNT] = {
    use GeneratorId::*;
    use OverlapVariant::*;
    [
        slot(RecentInteractions, None),
        slot(RecentImpressions, None),
        slot(SimilarUserInteractions, None),
        slot(SimilarUserImpressions, None),
        slot(ContentKnnInteractions, Some(TagsTags)),
        slot(ContentKnnInteractions, Some(TitleTitle)),
        slot(ContentKnnInteractions, Some(TitleToTags)),
        slot(ContentKnnInteractions, Some(TagsToTitle)),
        slot(ContentKnnImpressions, Some(TagsTags)),
        slot(ContentKnnImpressions, Some(TitleTitle)),
        slot(ContentKnnImpressions, Some(TitleToTags)),
        slot(ContentKnnImpressions, Some(TagsToTitle)),
        slot(JobrolesTags, None),
        slot(JobrolesTitle, None),
        slot(GlobalPopular, None),
    ]
};

impl RankSlot {
    pub fn index(self) -> usize {
        RANK_SLOTS
            .iter()
            .position(|s| *s == self)
            .expect("every slot is listed in RANK_SLOTS")
    }

    pub fn name(self) -> String {
        match self.variant {
            None => self.generator.name().to_string(),
            Some(v) => format!("{}:{}", self.generator.name(), v.name()),
        }
    }

    pub fn from_name(name: &str) -> Option<RankSlot> {
        RANK_SLOTS.iter().copied().find(|s| s.name() == name)
    }
}

/// A candidate item with the 1-based rank it earned in each slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CandidateEntry {
    pub item: ItemId,
    pub ranks: [Option<u16>; SLOT_COUNT],
}

impl CandidateEntry {
    pub fn rank(&self, slot: RankSlot) -> Option<u16> {
        self.ranks[slot.index()]
    }

    pub fn source_count(&self) -> usize {
        self.ranks.iter().filter(|r| r.is_some()).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateList {
    pub user: UserId,
    /// Ascending item id, no duplicates.
    pub entries: Vec<CandidateEntry>,
}

impl CandidateList {
    pub fn entry(&self, item: ItemId) -> Option<&CandidateEntry> {
        self.entries
            .binary_search_by_key(&item, |e| e.item)
            .ok()
            .map(|i| &self.entries[i])
    }

    pub fn items(&self) -> impl Iterator<Item = ItemId> + '_ {
        self.entries.iter().map(|e| e.item)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CandidateConfig {
    /// Items kept per ranked list.
    pub per_category: usize,
    /// Similar users expanded by the collaborative categories.
    pub neighbors: usize,
}

impl Default for CandidateConfig {
    fn default() -> Self {
        CandidateConfig {
            per_category: DEFAULT_PER_CATEGORY,
            neighbors: DEFAULT_NEIGHBORS,
        }
    }
}

/// Distinct items ordered by most recent week (desc), occurrence count (desc), id (asc).
pub fn recency_order(events: impl IntoIterator<Item = (ItemId, u32)>) -> Vec<ItemId> {
    let mut stats: HashMap<ItemId, (u32, u32)> = HashMap::new();
    for (item, week) in events {
        let e = stats.entry(item).or_insert((week, 0));
        e.0 = e.0.max(week);
        e.1 += 1;
    }
    let mut items: Vec<(ItemId, (u32, u32))> = stats.into_iter().collect();
    items.sort_by(|(ia, (wa, ca)), (ib, (wb, cb))| wb.cmp(wa).then(cb.cmp(ca)).then(ia.cmp(ib)));
    items.into_iter().map(|(i, _)| i).collect()
}

fn ranked_by_score(scores: HashMap<ItemId, u32>, cap: usize) -> Vec<ItemId> {
    let mut scored: Vec<(ItemId, u32)> = scores.into_iter().filter(|(_, s)| *s > 0).collect();
    scored.sort_by(|(ia, sa), (ib, sb)| sb.cmp(sa).then(ia.cmp(ib)));
    scored.truncate(cap);
    scored.into_iter().map(|(i, _)| i).collect()
}

/// Shared, immutable state for generating candidates on one dataset variant.
pub struct CandidateGenerator<'a> {
    dataset: &'a Dataset,
    config: CandidateConfig,
    sims: SimilarityIndex,
    active_tokens: ItemTokenIndex,
    recent_interactions: HashMap<UserId, Vec<ItemId>>,
    recent_impressions: HashMap<UserId, Vec<ItemId>>,
    popular: Vec<ItemId>,
}

impl<'a> CandidateGenerator<'a> {
    pub fn new(dataset: &'a Dataset, config: CandidateConfig) -> Self {
        let sims = SimilarityIndex::build(dataset);
        let active_tokens = ItemTokenIndex::build(dataset, |i| dataset.is_active(i));

        let users: Vec<UserId> = dataset.users.keys().copied().collect();
        let (recent_interactions, recent_impressions) = rayon::join(
            || {
                users
                    .par_iter()
                    .map(|&u| {
                        let events = dataset
                            .events
                            .user_interactions(u)
                            .filter(|e| e.kind.is_positive())
                            .map(|e| (e.item, e.week()));
                        (u, recency_order(events))
                    })
                    .filter(|(_, v)| !v.is_empty())
                    .collect()
            },
            || {
                users
                    .par_iter()
                    .map(|&u| (u, recency_order(dataset.events.user_impressions(u).map(|e| (e.item, e.week)))))
                    .filter(|(_, v)| !v.is_empty())
                    .collect()
            },
        );

        let popular = Self::popular_items(dataset, config.per_category);

        CandidateGenerator {
            dataset,
            config,
            sims,
            active_tokens,
            recent_interactions,
            recent_impressions,
            popular,
        }
    }

    fn popular_items(dataset: &Dataset, cap: usize) -> Vec<ItemId> {
        let mut counts: HashMap<ItemId, u32> = HashMap::new();
        for e in dataset.events.interactions() {
            if e.kind.is_positive() && dataset.is_active(e.item) {
                *counts.entry(e.item).or_insert(0) += 1;
            }
        }
        ranked_by_score(counts, cap)
    }

    pub fn config(&self) -> &CandidateConfig {
        &self.config
    }

    pub fn similarity(&self) -> &SimilarityIndex {
        &self.sims
    }

    fn recent(&self, user: UserId, source: EventSource) -> &[ItemId] {
        let map = match source {
            EventSource::Interactions => &self.recent_interactions,
            EventSource::Impressions => &self.recent_impressions,
        };
        map.get(&user).map(|v| v.as_slice()).unwrap_or(&[])
    }

    fn active_prefix(&self, items: &[ItemId]) -> Vec<ItemId> {
        items
            .iter()
            .copied()
            .filter(|&i| self.dataset.is_active(i))
            .take(self.config.per_category)
            .collect()
    }

    /// Int_u by most recent week, then interaction count.
    pub fn gen_recent_interactions(&self, user: UserId) -> Vec<ItemId> {
        self.active_prefix(self.recent(user, EventSource::Interactions))
    }

    /// Imp_u by most recent week, then impression count.
    pub fn gen_recent_impressions(&self, user: UserId) -> Vec<ItemId> {
        self.active_prefix(self.recent(user, EventSource::Impressions))
    }

    /// Items of the most similar users, neighbor by neighbor, each in that neighbor's recency order.
    pub fn gen_similar_user_items(&self, user: UserId, source: EventSource) -> Vec<ItemId> {
        let cap = self.config.per_category;
        let mut out = Vec::new();
        let mut seen = HashSet::new();
        for n in self.sims.top_k_similar_users(user, source, self.config.neighbors) {
            for &item in self.recent(n.id, source) {
                if out.len() == cap {
                    return out;
                }
                if self.dataset.is_active(item) && seen.insert(item) {
                    out.push(item);
                }
            }
        }
        out
    }

    /// max over basis items i' of the variant's overlap with candidate i, for all active i.
    pub fn max_overlap_scores(&self, basis: &[ItemId], variant: OverlapVariant) -> HashMap<ItemId, u32> {
        max_overlap_scores(self.dataset, &self.active_tokens, basis, variant)
    }

    /// Four overlap rankings (in [`OverlapVariant::ALL`] order) against the user's source items.
    pub fn gen_content_knn(&self, user: UserId, source: EventSource) -> [Vec<ItemId>; 4] {
        let basis = self.sims.user_items(user, source);
        OverlapVariant::ALL.map(|v| ranked_by_score(self.max_overlap_scores(basis, v), self.config.per_category))
    }

    /// Active items by |jobroles(u) ∩ field(i)|.
    pub fn gen_jobroles_match(&self, user: UserId, field: TokenField) -> Vec<ItemId> {
        let Some(u) = self.dataset.user(user) else {
            return Vec::new();
        };
        self.active_tokens
            .top_k_by_token_overlap(&u.jobroles, field, self.config.per_category)
            .into_iter()
            .map(|n| n.id)
            .collect()
    }

    /// Globally most interacted active items; identical for every user.
    pub fn gen_popular(&self) -> &[ItemId] {
        &self.popular
    }

    /// All 15 ranked lists for a user, in [`RANK_SLOTS`] order.
    pub fn generate(&self, user: UserId) -> Vec<(RankSlot, Vec<ItemId>)> {
        let [ti, tt, tlt, ttl] = self.gen_content_knn(user, EventSource::Interactions);
        let [pi, pt, plt, ptl] = self.gen_content_knn(user, EventSource::Impressions);
        let lists = [
            self.gen_recent_interactions(user),
            self.gen_recent_impressions(user),
            self.gen_similar_user_items(user, EventSource::Interactions),
            self.gen_similar_user_items(user, EventSource::Impressions),
            ti,
            tt,
            tlt,
            ttl,
            pi,
            pt,
            plt,
            ptl,
            self.gen_jobroles_match(user, TokenField::Tags),
            self.gen_jobroles_match(user, TokenField::Title),
            self.popular.clone(),
        ];
        RANK_SLOTS.into_iter().zip(lists).collect()
    }

    pub fn candidates_for(&self, user: UserId) -> CandidateList {
        merge_candidates(user, &self.generate(user), |i| self.dataset.is_active(i))
    }

    /// Candidate lists for `users`, computed in parallel, returned in input order.
    pub fn generate_all(&self, users: &[UserId]) -> Vec<CandidateList> {
        users.par_iter().map(|&u| self.candidates_for(u)).collect()
    }
}

/// max over `basis` of the variant's overlap, for every item in `index` sharing a token.
pub fn max_overlap_scores(
    dataset: &Dataset,
    index: &ItemTokenIndex,
    basis: &[ItemId],
    variant: OverlapVariant,
) -> HashMap<ItemId, u32> {
    let (query_field, target_field) = variant.fields();
    let target = index.field(target_field);
    let mut best: HashMap<ItemId, u32> = HashMap::new();
    for &b in basis {
        let Some(item) = dataset.item(b) else { continue };
        let query: &[Token] = match query_field {
            TokenField::Tags => item.tags.as_slice(),
            TokenField::Title => item.title.as_slice(),
        };
        for (cand, n) in target.overlap_counts(query) {
            let e = best.entry(cand).or_insert(0);
            *e = (*e).max(n);
        }
    }
    best
}

/// Union of generator outputs with per-slot provenance; only admitted items are kept.
pub fn merge_candidates(
    user: UserId,
    outputs: &[(RankSlot, Vec<ItemId>)],
    admit: impl Fn(ItemId) -> bool,
) -> CandidateList {
    let mut merged: BTreeMap<ItemId, [Option<u16>; SLOT_COUNT]> = BTreeMap::new();
    for (slot, items) in outputs {
        let idx = slot.index();
        for (pos, &item) in items.iter().enumerate() {
            if !admit(item) {
                continue;
            }
            let ranks = merged.entry(item).or_insert([None; SLOT_COUNT]);
            if ranks[idx].is_none() {
                ranks[idx] = Some((pos + 1) as u16);
            }
        }
    }
    CandidateList {
        user,
        entries: merged
            .into_iter()
            .map(|(item, ranks)| CandidateEntry { item, ranks })
            .collect(),
    }
}

/// Fraction of ground-truth pairs that appear among the candidates.
pub fn coverage(candidates: &[CandidateList], truth: &GroundTruth) -> Result<f64> {
    let total = truth.total_items();
    if total == 0 {
        return Err(Error::EmptyGroundTruth);
    }
    let by_user: HashMap<UserId, &CandidateList> = candidates.iter().map(|c| (c.user, c)).collect();
    let hits: usize = truth
        .iter()
        .map(|(u, items)| match by_user.get(&u) {
            Some(list) => items.iter().filter(|&&i| list.entry(i).is_some()).count(),
            None => 0,
        })
        .sum();
    Ok(hits as f64 / total as f64)
}

/// `user_id, item_id`, then one rank column per slot (empty when absent).
pub fn candidates_to_tsv(lists: &[CandidateList], header: Option<&str>) -> String {
    let mut out = String::new();
    if let Some(h) = header {
        out.push_str(h);
        out.push('\n');
    }
    out.push_str("user_id\titem_id");
    for s in RANK_SLOTS {
        out.push('\t');
        out.push_str(&s.name());
    }
    out.push('\n');
    for list in lists {
        for e in &list.entries {
            let _ = write!(out, "{}\t{}", list.user, e.item);
            for r in e.ranks {
                out.push('\t');
                if let Some(r) = r {
                    let _ = write!(out, "{r}");
                }
            }
            out.push('\n');
        }
    }
    out
}

pub fn candidates_from_tsv(text: &str, file: &str) -> Result<Vec<CandidateList>> {
    let mut header = text.lines().filter(|l| !l.starts_with('#'));
    let columns: Vec<&str> = header.next().unwrap_or("").split('\t').collect();
    if columns.len() != SLOT_COUNT + 2 || columns[2..].iter().zip(RANK_SLOTS).any(|(c, s)| *c != s.name()) {
        return Err(Error::parse(file, 1, "candidate columns do not match the generator slots"));
    }
    let mut lists: Vec<CandidateList> = Vec::new();
    for (line, fields) in crate::dataset::data_rows(text) {
        if fields.len() != SLOT_COUNT + 2 {
            return Err(Error::parse(file, line, format!("expected {} columns", SLOT_COUNT + 2)));
        }
        let parse = |s: &str| s.trim().parse::<u32>().map_err(|_| Error::parse(file, line, format!("bad id {s:?}")));
        let user = parse(fields[0])?;
        let item = parse(fields[1])?;
        let mut ranks = [None; SLOT_COUNT];
        for (slot, raw) in ranks.iter_mut().zip(&fields[2..]) {
            if !raw.is_empty() {
                *slot = Some(
                    raw.parse::<u16>()
                        .map_err(|_| Error::parse(file, line, format!("bad rank {raw:?}")))?,
                );
            }
        }
        match lists.last_mut() {
            Some(l) if l.user == user => {
                if l.entries.last().is_some_and(|e| e.item >= item) {
                    return Err(Error::parse(file, line, "items must be ascending within a user"));
                }
                l.entries.push(CandidateEntry { item, ranks });
            }
            _ => lists.push(CandidateList {
                user,
                entries: vec![CandidateEntry { item, ranks }],
            }),
        }
    }
    Ok(lists)
}

pub fn save_candidates(path: &Path, lists: &[CandidateList], header: Option<&str>) -> Result<()> {
    crate::dataset::write_file(path, &candidates_to_tsv(lists, header))
}

pub fn load_candidates(path: &Path) -> Result<Vec<CandidateList>> {
    candidates_from_tsv(&crate::dataset::read_file(path)?, &path.display().to_string())
}
