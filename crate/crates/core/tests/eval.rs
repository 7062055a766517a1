mod common;

use common::*;
use dytgraph::eval::{auc, evaluate, macro_auc, mom_baseline, mom_membership, TieMode};
use dytgraph::model::PredictionMatrix;
use dytgraph::numeric::DenseMatrix;
use dytgraph::snapshots::build_windows;
use proptest::prelude::*;

fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (1usize..120).prop_flat_map(|n| {
        (
            prop::collection::vec(prop_oneof![(0i32..5).prop_map(|v| v as f64), -10.0f64..10.0], n),
            prop::collection::vec(any::<bool>(), n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn auc_matches_pairwise_counting((scores, labels) in instance()) {
        prop_assert_eq!(auc(&scores, &labels, TieMode::Half), pairwise_auc(&scores, &labels, false));
        prop_assert_eq!(auc(&scores, &labels, TieMode::Strict), pairwise_auc(&scores, &labels, true));
    }

    #[test]
    fn auc_is_invariant_under_increasing_maps((scores, labels) in instance(), a in 0.1f64..5.0, b in -3.0f64..3.0) {
        let mapped: Vec<f64> = scores.iter().map(|s| (a * s + b).tanh() * 7.0 + s.exp()).collect();
        prop_assert_eq!(auc(&scores, &labels, TieMode::Half), auc(&mapped, &labels, TieMode::Half));
        let flipped: Vec<bool> = labels.iter().map(|l| !l).collect();
        let negated: Vec<f64> = scores.iter().map(|s| -s).collect();
        prop_assert_eq!(auc(&scores, &labels, TieMode::Half), auc(&negated, &flipped, TieMode::Half));
    }

    #[test]
    fn auc_complements_under_label_flip((scores, labels) in instance()) {
        let flipped: Vec<bool> = labels.iter().map(|l| !l).collect();
        if let (Some(x), Some(y)) = (auc(&scores, &labels, TieMode::Half), auc(&scores, &flipped, TieMode::Half)) {
            prop_assert!((x + y - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn macro_auc_skips_undefined_communities_and_masked_pairs() {
    let pred = DenseMatrix::from_rows(&[vec![0.9, 0.1, 0.5], vec![0.3, 0.2, 0.1], vec![0.1, 0.6, 0.4]]).unwrap();
    let labels = DenseMatrix::from_rows(&[vec![1.0, 0.0, 1.0], vec![1.0, 1.0, 1.0], vec![1.0, 0.0, 0.0]]).unwrap();
    let mut mask = DenseMatrix::filled(3, 3, 1.0);
    mask.set(0, 2, 0.0);
    let got = macro_auc(&pred, &labels, &mask, TieMode::Half).unwrap();
    assert!((got - (1.0 + 0.0) / 2.0).abs() < 1e-15);
    assert_eq!(macro_auc(&pred, &labels, &DenseMatrix::zeros(3, 3), TieMode::Half), None);
}

#[test]
fn mom_baseline_ranks_by_previous_month() {
    let mut r = rng(21);
    let cube = random_cube(&mut r, 14, 3, 8);
    let dataset = dataset_from_cube(&cube);
    let base = mom_baseline(&dataset, 14, 50.0).unwrap();
    let member = mom_membership(&dataset, 14, 50.0).unwrap();
    for c in 0..3 {
        let prev = &cube[12][c];
        for i in 0..8 {
            for j in 0..8 {
                if prev[i] > prev[j] {
                    assert!(base.scores.get(c, i) > base.scores.get(c, j));
                }
            }
        }
        assert!(base.scores.row(c).iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(base.ranked[c], brute_rank_list(prev, 50));
        for j in 0..8 {
            assert_eq!(member.scores.get(c, j) == 1.0, base.ranked[c].contains(&j));
        }
    }
}

#[test]
fn report_top_lists_follow_scores() {
    let mut r = rng(22);
    let cube = random_cube(&mut r, 13, 2, 6);
    let dataset = dataset_from_cube(&cube);
    let sample = build_windows(&dataset, 12, 50.0).unwrap().test.remove(0);
    let scores = random_matrix(&mut r, 2, 6, 1.0).map(|v| (v + 1.0) / 2.0);
    let pred = PredictionMatrix::new(13, scores.clone());
    let report = evaluate("m", &pred, &sample, dataset.catalogs(), 3, TieMode::Half).unwrap();
    for (c, row) in report.communities.iter().enumerate() {
        assert_eq!(row.top.len(), 3);
        assert!(row.top.windows(2).all(|w| w[0].1 >= w[1].1));
        let best = (0..6).max_by(|&a, &b| scores.get(c, a).total_cmp(&scores.get(c, b))).unwrap();
        assert_eq!(row.top[0].0, dataset.catalogs().attribute(best));
        assert_eq!(row.positives + row.negatives, 6);
    }
    assert_eq!(report.to_ndjson().lines().count(), 2);
}
