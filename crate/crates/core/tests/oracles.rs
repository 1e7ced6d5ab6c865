mod common;

use common::{check_tree, mixed_window, naive_path_length, pairwise_auc, rng};
use dlshiforest::{
    auc, build_forest, path_length, Forest, ForestConfig, LabeledScore, Normalizer, ScoreParams,
};
use proptest::prelude::*;
use rand::Rng;

fn params(g: f64) -> ScoreParams {
    ScoreParams {
        granularity: g,
        ..ScoreParams::default()
    }
}

#[test]
fn path_length_matches_naive_traversal_with_granularity() {
    let mut r = rng(101);
    for round in 0..40u64 {
        let m = r.random_range(1..6);
        let w = r.random_range(8..200);
        let window = mixed_window(w, m, &mut r);
        let forest = build_forest(&window, 5, round).unwrap();
        for g in [0.5, 1.0, 1.7] {
            for tree in forest.trees() {
                for _ in 0..10 {
                    let x: Vec<f64> = if r.random_bool(0.5) {
                        window[r.random_range(0..w)].clone()
                    } else {
                        (0..m).map(|_| r.random_range(-6.0..6.0)).collect()
                    };
                    assert_eq!(
                        path_length(&x, tree, &params(g)).unwrap(),
                        naive_path_length(&x, tree, g, 2)
                    );
                }
            }
        }
    }
}

#[test]
fn wider_branching_normalizer_still_matches() {
    let mut r = rng(5);
    let window = mixed_window(300, 4, &mut r);
    let forest = build_forest(&window, 10, 9).unwrap();
    let p = ScoreParams {
        branching_factor: 5,
        normalizer: Normalizer::PerTree,
        ..ScoreParams::default()
    };
    for tree in forest.trees() {
        for x in window.iter().take(50) {
            assert_eq!(
                path_length(x, tree, &p).unwrap(),
                naive_path_length(x, tree, 1.0, 5)
            );
        }
    }
}

#[test]
fn unsampled_forests_are_well_formed() {
    let mut r = rng(77);
    for seed in 0..20 {
        let w = r.random_range(2..300);
        let window = mixed_window(w, 3, &mut r);
        let config = ForestConfig {
            num_trees: 8,
            seed,
            sampling_enabled: false,
            ..ForestConfig::default()
        };
        let forest = Forest::build(&window, &config).unwrap();
        for tree in forest.trees() {
            assert_eq!(tree.sample_size(), w);
            check_tree(tree).unwrap();
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn auc_matches_pairwise_oracle(
        raw in prop::collection::vec((0u8..20, any::<bool>()), 2..150)
    ) {
        let has_both = raw.iter().any(|(_, l)| *l) && raw.iter().any(|(_, l)| !*l);
        prop_assume!(has_both);
        let scores: Vec<f64> = raw.iter().map(|(s, _)| *s as f64 / 20.0).collect();
        let labels: Vec<bool> = raw.iter().map(|(_, l)| *l).collect();
        let records: Vec<LabeledScore> = scores
            .iter()
            .zip(&labels)
            .map(|(&s, &l)| LabeledScore::new(s, l))
            .collect();
        let got = auc(&records).unwrap();
        prop_assert!((got - pairwise_auc(&scores, &labels)).abs() < 1e-12);
    }
}
