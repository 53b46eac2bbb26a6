//! Seeded synthetic data with planted topic structure.
//!
//! Users and items each belong to latent topics with their own tag and
//! title vocabularies. Each week a user is shown a noisy mix of on-topic
//! and random items, then clicks through sessions made of re-clicks,
//! previously shown items and fresh items, the latter either on-topic or
//! drawn uniformly from everything live. Items live for a few weeks and
//! lose popularity with age.

use std::collections::{BTreeMap, BTreeSet};

use rand::distr::weighted::WeightedIndex;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::dataset::{
    week_of, Dataset, EventLog, GeoPoint, Impression, Interaction, InteractionKind, Item, ItemId, TokenSet, User,
    UserId, SECONDS_PER_WEEK,
};
use crate::error::{Error, Result};

/// Monday 2016-01-04 00:00 UTC.
pub const EPOCH: i64 = 1_451_865_600;

const TAG_VOCAB: u32 = 40;
const TITLE_VOCAB: u32 = 30;
const GENERIC_TOKENS: u32 = 20;
const GENERIC_BASE: u32 = 90_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub users: u32,
    pub items: u32,
    pub weeks: u32,
    pub seed: u64,
    pub topics: u32,
    /// Share of users listed as targets.
    pub target_fraction: f64,
    /// Median sessions per active week.
    pub sessions_per_week: f64,
    pub reclick_rate: f64,
    /// Share of clicks drawn from recently shown items.
    pub impression_click_rate: f64,
    /// Share of fresh clicks landing on a uniformly random live item.
    pub explore_rate: f64,
    pub delete_rate: f64,
    /// Weekly popularity decay of an item after creation.
    pub popularity_decay: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            users: 2000,
            items: 3000,
            weeks: 12,
            seed: 0,
            topics: 25,
            target_fraction: 0.5,
            sessions_per_week: 0.9,
            reclick_rate: 0.1,
            impression_click_rate: 0.2,
            explore_rate: 0.45,
            delete_rate: 0.03,
            popularity_decay: 0.85,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.users < 10 || self.items < 10 {
            return Err(Error::InvalidConfig("synthetic data needs at least 10 users and 10 items".into()));
        }
        if self.weeks < 3 {
            return Err(Error::InvalidConfig("synthetic data needs at least 3 weeks".into()));
        }
        if self.topics < 1 {
            return Err(Error::InvalidConfig("at least one topic is required".into()));
        }
        let unit = [
            self.target_fraction,
            self.reclick_rate,
            self.impression_click_rate,
            self.explore_rate,
            self.delete_rate,
            self.popularity_decay,
        ];
        if unit.iter().any(|p| !(0.0..=1.0).contains(p)) || self.reclick_rate + self.impression_click_rate > 1.0 {
            return Err(Error::InvalidConfig("synthetic rates must be probabilities".into()));
        }
        if self.sessions_per_week.is_nan() || self.sessions_per_week <= 0.0 {
            return Err(Error::InvalidConfig("sessions_per_week must be positive".into()));
        }
        Ok(())
    }
}

/// The generated data and the latent topics behind it.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub dataset: Dataset,
    /// (primary, secondary) topic per user.
    pub user_topics: BTreeMap<UserId, (u32, u32)>,
    pub item_topics: BTreeMap<ItemId, u32>,
}

struct ItemPlan {
    topic: u32,
    first_week: i64,
    last_week: i64,
    popularity: f64,
}

fn tag_token(topic: u32, k: u32) -> u32 {
    topic * 100 + k + 1
}

fn title_token(topic: u32, k: u32) -> u32 {
    50_000 + topic * 100 + k + 1
}

fn pick_tokens(rng: &mut ChaCha8Rng, n: usize, make: impl Fn(u32) -> u32, vocab: u32) -> Vec<u32> {
    let mut out = BTreeSet::new();
    while out.len() < n.min(vocab as usize) {
        // skewed towards low ids so a topic has a few common tokens
        let k = ((rng.random::<f64>().powi(2)) * vocab as f64) as u32;
        out.insert(make(k.min(vocab - 1)));
    }
    out.into_iter().collect()
}

fn country(rng: &mut ChaCha8Rng) -> u32 {
    let r: f64 = rng.random();
    if r < 0.8 {
        1
    } else if r < 0.95 {
        2
    } else {
        3
    }
}

pub fn generate(config: &SynthConfig) -> Result<SynthOutput> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let k = config.topics;
    let weeks = config.weeks as i64;
    let topic_discipline: Vec<u32> = (0..k).map(|t| t % 20 + 1).collect();
    let topic_industry: Vec<u32> = (0..k).map(|_| rng.random_range(1..=25)).collect();
    let pop_dist = LogNormal::new(0.0, 1.0).expect("valid lognormal");
    let geo_noise = Normal::new(0.0, 1.5).expect("valid normal");

    let mut items = BTreeMap::new();
    let mut plans = BTreeMap::new();
    for id in 1..=config.items {
        let topic = rng.random_range(0..k);
        let first_week = rng.random_range(-4..weeks);
        let last_week = first_week + rng.random_range(3..=12);
        let n_tags = rng.random_range(3..=6);
        let mut tags = pick_tokens(&mut rng, n_tags, |x| tag_token(topic, x), TAG_VOCAB);
        if rng.random_bool(0.3) {
            tags.push(GENERIC_BASE + rng.random_range(0..GENERIC_TOKENS));
        }
        let n_title = rng.random_range(2..=4);
        let title = pick_tokens(&mut rng, n_title, |x| title_token(topic, x), TITLE_VOCAB);
        let country = country(&mut rng);
        let location = rng.random_bool(0.9).then(|| GeoPoint {
            latitude: 48.0 + 3.0 * country as f64 + geo_noise.sample(&mut rng),
            longitude: 8.0 + 2.0 * country as f64 + geo_noise.sample(&mut rng),
        });
        let region = location.map_or(0, |g| (g.latitude.rem_euclid(1.0) * 16.0) as u32 + 1);
        let discipline_id = if rng.random_bool(0.8) {
            topic_discipline[topic as usize]
        } else {
            rng.random_range(1..=20)
        };
        let industry_id = if rng.random_bool(0.6) {
            topic_industry[topic as usize]
        } else {
            rng.random_range(1..=25)
        };
        items.insert(
            id,
            Item {
                id,
                title: TokenSet::new(title),
                tags: TokenSet::new(tags),
                career_level: rng.random_range(1..=6),
                discipline_id,
                industry_id,
                country,
                region,
                employment: rng.random_range(1..=5),
                location,
                created_at: Some(EPOCH + first_week * SECONDS_PER_WEEK + rng.random_range(0..SECONDS_PER_WEEK)),
                active_during_test: last_week >= weeks - 1,
            },
        );
        plans.insert(
            id,
            ItemPlan {
                topic,
                first_week,
                last_week,
                popularity: pop_dist.sample(&mut rng),
            },
        );
    }

    let activity = LogNormal::new(config.sessions_per_week.ln(), 0.8).expect("valid lognormal");
    let mut users = BTreeMap::new();
    let mut user_topics = BTreeMap::new();
    let mut rates = BTreeMap::new();
    for id in 1..=config.users {
        let primary = rng.random_range(0..k);
        let secondary = if k > 1 {
            (primary + rng.random_range(1..k)) % k
        } else {
            primary
        };
        let n_roles = rng.random_range(2..=4);
        let mut jobroles = pick_tokens(&mut rng, n_roles, |x| title_token(primary, x), TITLE_VOCAB);
        if rng.random_bool(0.3) {
            jobroles.push(title_token(secondary, rng.random_range(0..TITLE_VOCAB)));
        }
        let discipline_id = if rng.random_bool(0.7) {
            topic_discipline[primary as usize]
        } else {
            rng.random_range(1..=20)
        };
        let industry_id = if rng.random_bool(0.5) {
            topic_industry[primary as usize]
        } else {
            rng.random_range(1..=25)
        };
        let fields: Vec<u32> = (0..rng.random_range(0..=2)).map(|_| rng.random_range(1..=10)).collect();
        users.insert(
            id,
            User {
                id,
                jobroles: TokenSet::new(jobroles),
                career_level: rng.random_range(1..=6),
                discipline_id,
                industry_id,
                country: country(&mut rng),
                region: rng.random_range(1..=16),
                experience_n_entries_class: rng.random_range(0..=3),
                experience_years_experience: rng.random_range(0..=7),
                experience_years_in_current: rng.random_range(0..=7),
                edu_degree: rng.random_range(0..=3),
                edu_fieldofstudies: TokenSet::new(fields),
            },
        );
        user_topics.insert(id, (primary, secondary));
        rates.insert(id, activity.sample(&mut rng).min(6.0));
    }

    let mut interactions = Vec::new();
    let mut impressions = Vec::new();
    let mut history: BTreeMap<UserId, Vec<ItemId>> = BTreeMap::new();
    let mut deleted: BTreeMap<UserId, BTreeSet<ItemId>> = BTreeMap::new();
    let mut shown: BTreeMap<UserId, Vec<(i64, ItemId)>> = BTreeMap::new();

    for w in 0..weeks {
        let alive: Vec<(ItemId, f64)> = plans
            .iter()
            .filter(|(_, p)| p.first_week <= w && w <= p.last_week)
            .map(|(&id, p)| (id, p.popularity * config.popularity_decay.powi((w - p.first_week).max(0) as i32)))
            .collect();
        if alive.is_empty() {
            continue;
        }
        let sampler = |list: &[(ItemId, f64)]| WeightedIndex::new(list.iter().map(|x| x.1)).ok();
        let by_topic: Vec<Vec<(ItemId, f64)>> = (0..k)
            .map(|t| alive.iter().copied().filter(|(id, _)| plans[id].topic == t).collect())
            .collect();
        let topic_samplers: Vec<_> = by_topic.iter().map(|l| sampler(l)).collect();
        let global = sampler(&alive).expect("alive items have positive weight");
        let week_index = week_of(EPOCH) + w as u32;

        for (&u, &rate) in &rates {
            let (primary, secondary) = user_topics[&u];
            let sessions = Poisson::new(rate).map(|p| p.sample(&mut rng) as u32).unwrap_or(0);
            let draw_topic = |rng: &mut ChaCha8Rng, t: u32| -> Option<ItemId> {
                let s = topic_samplers[t as usize].as_ref()?;
                Some(by_topic[t as usize][s.sample(rng)].0)
            };

            if sessions > 0 || rng.random_bool(0.4) {
                let mut week_shown = BTreeSet::new();
                for _ in 0..rng.random_range(5..=15) {
                    let r: f64 = rng.random();
                    let pick = if r < 0.55 {
                        draw_topic(&mut rng, primary)
                    } else if r < 0.75 {
                        draw_topic(&mut rng, secondary)
                    } else {
                        Some(alive[global.sample(&mut rng)].0)
                    };
                    if let Some(i) = pick {
                        week_shown.insert(i);
                    }
                }
                let log = shown.entry(u).or_default();
                for &i in &week_shown {
                    impressions.push(Impression {
                        user: u,
                        item: i,
                        week: week_index,
                    });
                    log.push((w, i));
                }
            }

            let profile = &users[&u];
            for _ in 0..sessions {
                let mut ts = EPOCH + w * SECONDS_PER_WEEK + rng.random_range(0..SECONDS_PER_WEEK - 3600);
                let clicks = 1 + u32::from(rng.random_bool(0.5)) + u32::from(rng.random_bool(0.25));
                for _ in 0..clicks {
                    let gone = deleted.entry(u).or_default();
                    let past = history.entry(u).or_default();
                    let r: f64 = rng.random();
                    let recent_shown: Vec<ItemId> = shown
                        .get(&u)
                        .map(|s| s.iter().filter(|(sw, _)| w - sw <= 1).map(|x| x.1).collect())
                        .unwrap_or_default();
                    let item = if r < config.reclick_rate && !past.is_empty() {
                        let tail = &past[past.len().saturating_sub(8)..];
                        tail.choose(&mut rng).copied()
                    } else if r < config.reclick_rate + config.impression_click_rate && !recent_shown.is_empty() {
                        let weights: Vec<f64> = recent_shown
                            .iter()
                            .map(|i| {
                                let t = plans[i].topic;
                                if t == primary || t == secondary {
                                    4.0
                                } else {
                                    1.0
                                }
                            })
                            .collect();
                        WeightedIndex::new(&weights).ok().map(|s| recent_shown[s.sample(&mut rng)])
                    } else if rng.random_bool(config.explore_rate) {
                        alive.choose(&mut rng).map(|x| x.0)
                    } else {
                        let r2: f64 = rng.random();
                        let topic = if r2 < 0.75 {
                            primary
                        } else {
                            secondary
                        };
                        // best of three by title overlap with the user's job roles
                        (0..3)
                            .filter_map(|_| draw_topic(&mut rng, topic))
                            .max_by_key(|i| (profile.jobroles.intersection_len(&items[i].title), *i))
                    };
                    let Some(item) = item else { continue };
                    if gone.contains(&item) {
                        continue;
                    }
                    let r3: f64 = rng.random();
                    let kind = if r3 < config.delete_rate {
                        InteractionKind::Delete
                    } else if r3 < config.delete_rate + 0.06 {
                        InteractionKind::Bookmark
                    } else if r3 < config.delete_rate + 0.12 {
                        InteractionKind::Reply
                    } else {
                        InteractionKind::Click
                    };
                    interactions.push(Interaction {
                        user: u,
                        item,
                        kind,
                        timestamp: ts,
                    });
                    if kind == InteractionKind::Delete {
                        gone.insert(item);
                        past.retain(|&i| i != item);
                    } else {
                        past.retain(|&i| i != item);
                        past.push(item);
                    }
                    ts += rng.random_range(20..400);
                }
            }
        }
    }

    let mut target_users: BTreeSet<UserId> = users
        .keys()
        .copied()
        .filter(|_| rng.random_bool(config.target_fraction))
        .collect();
    if target_users.is_empty() {
        target_users.insert(1);
    }
    let item_topics = plans.iter().map(|(&id, p)| (id, p.topic)).collect();
    Ok(SynthOutput {
        dataset: Dataset {
            users,
            items,
            events: EventLog::new(interactions, impressions),
            target_users,
        },
        user_topics,
        item_topics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{load_dataset, write_dataset, DatasetPaths, KindCodes, LoadOptions};

    fn small(seed: u64) -> SynthConfig {
        SynthConfig {
            users: 200,
            items: 400,
            weeks: 12,
            seed,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn rejects_tiny_sizes() {
        for cfg in [
            SynthConfig { users: 9, ..small(0) },
            SynthConfig { items: 9, ..small(0) },
            SynthConfig { weeks: 2, ..small(0) },
        ] {
            assert!(matches!(generate(&cfg), Err(Error::InvalidConfig(_))));
        }
    }

    #[test]
    fn deterministic_files_and_consistent_references() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let out = generate(&small(4)).unwrap();
        write_dataset(&out.dataset, a.path(), &KindCodes::default()).unwrap();
        write_dataset(&generate(&small(4)).unwrap().dataset, b.path(), &KindCodes::default()).unwrap();
        let pa = DatasetPaths::in_dir(a.path());
        let pb = DatasetPaths::in_dir(b.path());
        for (x, y) in pa.all().iter().zip(pb.all()) {
            assert!(x.exists());
            assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
        }
        let (loaded, report) = load_dataset(&pa, &LoadOptions::default()).unwrap();
        assert_eq!(report.dropped_interactions, 0);
        assert_eq!(report.dropped_impressions, 0);
        assert_eq!(loaded.events.interactions().len(), out.dataset.events.interactions().len());
        assert_eq!(loaded.events.impressions().len(), out.dataset.events.impressions().len());
        assert!(!loaded.target_users.is_empty());
        assert_ne!(generate(&small(5)).unwrap().dataset.events.interactions(), out.dataset.events.interactions());
    }

    #[test]
    fn clicks_follow_planted_topics() {
        let out = generate(&small(9)).unwrap();
        let last = out.dataset.events.interactions().iter().map(|e| e.week()).max().unwrap();
        let (mut on_topic, mut total) = (0usize, 0usize);
        for e in out.dataset.events.interactions().iter().filter(|e| e.week() == last && e.kind.is_positive()) {
            let (p, s) = out.user_topics[&e.user];
            let t = out.item_topics[&e.item];
            on_topic += usize::from(t == p || t == s);
            total += 1;
        }
        let chance = 2.0 / SynthConfig::default().topics as f64;
        let observed = on_topic as f64 / total as f64;
        assert!(total > 50);
        assert!(observed > 5.0 * chance, "{observed} vs chance {chance}");
    }
}
