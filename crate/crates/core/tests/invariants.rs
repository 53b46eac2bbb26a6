//! Property tests over random fixtures.

mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::*;
use jobrec::candidates::{
    candidates_from_tsv, candidates_to_tsv, merge_candidates, CandidateConfig, CandidateGenerator, RANK_SLOTS,
};
use jobrec::dataset::{build_ground_truth, temporal_split, week_of, GroundTruth, ItemId};
use jobrec::evaluation::{total_score, user_score, validate_prediction, RecallMode};
use jobrec::features::{FeatureContext, ItemClusterIndex, CLUSTER_WINDOW_SECONDS};
use jobrec::gbdt::{self, loss, GbdtModel, Node, TrainConfig};
use jobrec::matrix::{FeatureMatrix, FeatureSchema};
use jobrec::pipeline::{blend, mean_probability, predictions_from_tsv, predictions_to_tsv, select_top};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fixture(seed: u64, users: u32, items: u32) -> jobrec::dataset::Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_dataset(
        &mut rng,
        &FixtureShape {
            users,
            items,
            weeks: 5,
            vocab: 12,
            max_events: 10,
            active_share: 0.7,
        },
    )
}

fn toy_matrix(seed: u64, rows: usize, cols: usize) -> FeatureMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..rows {
        let row: Vec<f64> = (0..cols).map(|_| rng.random_range(0..6) as f64).collect();
        labels.push(u8::from(row[0] + rng.random_range(-2.0..2.0) > 2.5));
        values.extend(row);
    }
    let keys = (0..rows as u32).map(|i| (i / 7 + 1, i + 1)).collect();
    FeatureMatrix::new(FeatureSchema::anonymous(cols), keys, values, Some(labels)).unwrap()
}

fn small_model(seed: u64) -> GbdtModel {
    let m = toy_matrix(seed, 120, 4);
    let cfg = TrainConfig {
        num_round: 8,
        max_depth: 3,
        min_child_weight: 1.0,
        gamma: 0.0,
        early_stopping_rounds: None,
        ..TrainConfig::default()
    };
    gbdt::train(&m, None, &cfg).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn adding_a_correct_item_never_lowers_the_user_score(
        truth in prop::collection::btree_set(1u32..60, 1..20),
        pred in prop::collection::vec(1u32..60, 0..29),
    ) {
        let mut pred: Vec<ItemId> = pred.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        pred.truncate(29);
        let Some(&extra) = truth.iter().find(|i| !pred.contains(i)) else { return Ok(()) };
        let before = user_score(1, &pred, &truth, RecallMode::Corrected).score;
        pred.push(extra);
        let after = user_score(1, &pred, &truth, RecallMode::Corrected).score;
        prop_assert!(after >= before);
    }

    #[test]
    fn total_is_the_sum_over_truth_users(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut preds = BTreeMap::new();
        let mut sets = BTreeMap::new();
        for u in 1..=10u32 {
            if rng.random_bool(0.7) {
                sets.insert(u, (0..rng.random_range(1..10)).map(|_| rng.random_range(1..40)).collect::<BTreeSet<ItemId>>());
            }
            let p: BTreeSet<ItemId> = (0..rng.random_range(0..30)).map(|_| rng.random_range(1..40)).collect();
            preds.insert(u, p.into_iter().collect::<Vec<_>>());
        }
        let report = total_score(&preds, &GroundTruth::from_sets(sets.clone()), RecallMode::Corrected).unwrap();
        let sum: f64 = report.users.iter().map(|s| s.score).sum();
        prop_assert!((report.total - sum).abs() < 1e-9);
        prop_assert_eq!(report.users.len(), sets.len());
    }

    #[test]
    fn overlong_or_repeated_predictions_are_rejected(n in 31usize..40, dup in 0usize..30) {
        let long: Vec<ItemId> = (1..=n as u32).collect();
        prop_assert!(validate_prediction(1, &long).is_err());
        let mut repeated: Vec<ItemId> = (1..=30).collect();
        repeated[(dup + 1) % 30] = repeated[dup % 30];
        prop_assert!(dup % 30 == (dup + 1) % 30 || validate_prediction(1, &repeated).is_err());
    }

    #[test]
    fn merged_lists_keep_every_generator_rank(seed in any::<u64>()) {
        let ds = fixture(seed, 25, 40);
        let config = CandidateConfig { per_category: 8, neighbors: 4 };
        let generator = CandidateGenerator::new(&ds, config);
        for &u in ds.users.keys() {
            let outputs = generator.generate(u);
            let merged = merge_candidates(u, &outputs, |i| ds.is_active(i));
            let ids: Vec<ItemId> = merged.items().collect();
            let unique: BTreeSet<ItemId> = ids.iter().copied().collect();
            prop_assert_eq!(ids.len(), unique.len());
            prop_assert!(ids.len() <= RANK_SLOTS.len() * config.per_category);
            for (slot, items) in &outputs {
                for (pos, item) in items.iter().enumerate() {
                    let entry = merged.entry(*item).expect("generated item is merged");
                    prop_assert_eq!(entry.rank(*slot), Some((pos + 1) as u16));
                }
            }
            for e in &merged.entries {
                prop_assert!(e.source_count() >= 1);
                prop_assert!(RANK_SLOTS.iter().filter_map(|s| e.rank(*s)).all(|r| r as usize <= config.per_category));
            }
        }
    }

    #[test]
    fn candidate_files_round_trip(seed in any::<u64>()) {
        let ds = fixture(seed, 15, 30);
        let users: Vec<_> = ds.users.keys().copied().collect();
        let lists = CandidateGenerator::new(&ds, CandidateConfig::default()).generate_all(&users);
        let text = candidates_to_tsv(&lists, Some("# provenance: stage=t seed=0 config=x lineage=y"));
        let back = candidates_from_tsv(&text, "mem").unwrap();
        let nonempty: Vec<_> = lists.into_iter().filter(|l| !l.is_empty()).collect();
        prop_assert_eq!(back.into_iter().filter(|l| !l.is_empty()).collect::<Vec<_>>(), nonempty);
    }

    #[test]
    fn split_partitions_events_by_week(seed in any::<u64>(), weeks in 1u32..3) {
        let ds = fixture(seed, 20, 30);
        let Ok(split) = temporal_split(&ds, weeks) else { return Ok(()) };
        let Some(boundary) = split.boundary_week else { return Ok(()) };
        prop_assert!(split.train.events.interactions().iter().all(|e| week_of(e.timestamp) < boundary));
        prop_assert!(split.train.events.impressions().iter().all(|e| e.week < boundary));
        prop_assert_eq!(
            split.train.events.interactions().len() + split.holdout.interactions.len(),
            ds.events.interactions().len()
        );
        let truth = build_ground_truth(&split.holdout, &ds.target_users);
        for (u, items) in truth.iter() {
            prop_assert!(ds.target_users.contains(&u));
            prop_assert!(!items.is_empty());
        }
    }

    #[test]
    fn clusters_are_symmetric_and_irreflexive(seed in any::<u64>()) {
        let ds = fixture(seed, 20, 25);
        let clusters = ItemClusterIndex::build(&ds.events, CLUSTER_WINDOW_SECONDS);
        for a in clusters.items() {
            let linked = clusters.cluster(a).unwrap();
            prop_assert!(!linked.contains(&a));
            for &b in linked {
                prop_assert!(clusters.linked(b, a));
            }
        }
    }

    #[test]
    fn features_are_pure_functions_of_their_inputs(seed in any::<u64>()) {
        let ds = fixture(seed, 12, 20);
        let users: Vec<_> = ds.users.keys().copied().collect();
        let lists = CandidateGenerator::new(&ds, CandidateConfig::default()).generate_all(&users);
        let a = FeatureContext::for_dataset(&ds).build_matrix(&lists, None).unwrap();
        let b = FeatureContext::for_dataset(&ds).build_matrix(&lists, None).unwrap();
        prop_assert_eq!(a.keys, b.keys);
        prop_assert!(a.values.iter().zip(&b.values).all(|(x, y)| x.to_bits() == y.to_bits()));
        prop_assert_eq!(a.schema.len(), FeatureSchema::standard().len());
    }

    #[test]
    fn matrix_files_round_trip_bit_exactly(seed in any::<u64>()) {
        let mut m = toy_matrix(seed, 30, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in m.values.iter_mut() {
            *v += rng.random_range(-1e-3..1e-3);
        }
        let text = m.to_tsv(None);
        let back = FeatureMatrix::from_tsv(&text, m.schema.clone(), "mem").unwrap();
        prop_assert_eq!(back.keys, m.keys);
        prop_assert_eq!(back.labels, m.labels);
        prop_assert!(back.values.iter().zip(&m.values).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn model_output_is_sigmoid_of_base_plus_leaves(seed in any::<u64>()) {
        let model = small_model(seed);
        let m = toy_matrix(seed ^ 1, 40, 4);
        let probs = model.predict_proba(&m).unwrap();
        for (r, p) in probs.iter().enumerate() {
            let margin = model.base_margin + model.trees.iter().map(|t| t.predict(m.row(r))).sum::<f64>();
            prop_assert!((p - loss::sigmoid(margin.clamp(-30.0, 30.0))).abs() < 1e-12);
        }
        for t in &model.trees {
            prop_assert!(t.depth() <= 3);
        }
        let internal = model
            .trees
            .iter()
            .flat_map(|t| t.nodes.iter())
            .filter(|n| matches!(n, Node::Split { .. }))
            .count() as u64;
        prop_assert_eq!(model.split_counts().iter().sum::<u64>(), internal);
        let back = GbdtModel::from_json(&model.to_json().unwrap()).unwrap();
        prop_assert_eq!(back.predict_proba(&m).unwrap(), probs);
    }

    #[test]
    fn selection_is_sorted_and_duplicate_free(scores in prop::collection::vec((1u32..200, 0.0f64..1.0), 0..80)) {
        let mut seen = BTreeSet::new();
        let scored: Vec<(ItemId, f64)> = scores.into_iter().filter(|(i, _)| seen.insert(*i)).collect();
        let p = select_top(1, scored, |i| i % 7 == 0);
        prop_assert!(p.items.len() <= 30);
        prop_assert!(p.items.iter().all(|i| i % 7 != 0));
        prop_assert!(p.scores.windows(2).all(|w| w[0] >= w[1]));
        let unique: BTreeSet<_> = p.items.iter().collect();
        prop_assert_eq!(unique.len(), p.items.len());
        let text = predictions_to_tsv(std::slice::from_ref(&p), None);
        let back = predictions_from_tsv(&text, "mem").unwrap();
        prop_assert_eq!(&back.first().map(|b| b.items.clone()).unwrap_or_default(), &p.items);
    }

    #[test]
    fn blending_ignores_model_order(probs in prop::collection::vec(0.0f64..1.0, 1..6), rot in 0usize..6) {
        let mut a = probs.clone();
        let mut b = probs.clone();
        b.rotate_left(rot % probs.len());
        prop_assert_eq!(mean_probability(&mut a).to_bits(), mean_probability(&mut b).to_bits());
    }
}

#[test]
fn blend_output_is_independent_of_model_order() {
    let ds = fixture(3, 30, 40);
    let users: Vec<_> = ds.users.keys().copied().collect();
    let lists = CandidateGenerator::new(&ds, CandidateConfig::default()).generate_all(&users);
    let ctx = FeatureContext::for_dataset(&ds);
    let m = ctx.build_matrix(&lists, None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let labels: Vec<u8> = (0..m.n_rows()).map(|_| u8::from(rng.random_bool(0.2))).collect();
    let labelled = FeatureMatrix::new(m.schema.clone(), m.keys.clone(), m.values.clone(), Some(labels)).unwrap();
    let models: Vec<GbdtModel> = [0.05, 0.1, 0.3]
        .iter()
        .map(|&eta| {
            let cfg = TrainConfig {
                eta,
                num_round: 10,
                min_child_weight: 1.0,
                early_stopping_rounds: None,
                ..TrainConfig::default()
            };
            gbdt::train(&labelled, None, &cfg).unwrap()
        })
        .collect();
    let forward = blend(&ctx, &ds, &lists, &models).unwrap();
    let reversed: Vec<GbdtModel> = models.iter().rev().cloned().collect();
    assert_eq!(forward, blend(&ctx, &ds, &lists, &reversed).unwrap());
}
