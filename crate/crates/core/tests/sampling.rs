use std::collections::HashSet;

use linksteal_core::graph::synthetic::PlantedPartition;
use linksteal_core::graph::Graph;
use linksteal_core::pairs::{
    sample_pairs, shadow_sameclass_pairs, split_pairs, KnowledgeBudget, LabelingSource, LinkLabel, PairError,
    ShadowLabel,
};
use proptest::prelude::*;

fn fixtures() -> Vec<(Graph<f64>, usize)> {
    vec![
        (PlantedPartition { avg_degree: 8.0, ..PlantedPartition::new("dense", 20, 2, 3) }.generate(), 40),
        (PlantedPartition { avg_degree: 4.0, seed: 2, ..PlantedPartition::new("sparse", 300, 4, 3) }.generate(), 200),
        (PlantedPartition { avg_degree: 6.0, seed: 3, ..PlantedPartition::new("mid", 900, 6, 3) }.generate(), 500),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn balanced_correct_and_disjoint(seed in any::<u64>(), frac in 0.05f64..0.95) {
        for (g, budget) in fixtures() {
            let set = sample_pairs(&g, KnowledgeBudget::new(budget), seed).unwrap();
            prop_assert_eq!(set.n_link, budget);
            prop_assert_eq!(set.n_unlink, budget);
            for p in &set.pairs {
                prop_assert!(p.u < p.v);
                prop_assert_eq!(g.has_edge(p.u, p.v), p.link_label == Some(LinkLabel::Link));
            }
            let keys: HashSet<_> = set.pairs.iter().map(|p| p.key()).collect();
            prop_assert_eq!(keys.len(), set.len());

            let (train, test) = split_pairs(&set, frac, seed).unwrap();
            let expected = (frac * set.len() as f64).round() as usize;
            prop_assert_eq!(train.len(), expected);
            prop_assert_eq!(train.len() + test.len(), set.len());
            // Stratified: each stratum gets its floor share or one more.
            let per = frac * budget as f64;
            prop_assert!(train.n_link as f64 >= per.floor() && train.n_link as f64 <= per.floor() + 1.0);
            prop_assert!(train.n_unlink as f64 >= per.floor() && train.n_unlink as f64 <= per.floor() + 1.0);
            let tk: HashSet<_> = train.pairs.iter().map(|p| p.key()).collect();
            prop_assert!(test.pairs.iter().all(|p| !tk.contains(&p.key())));
        }
    }

    #[test]
    fn shadow_pairs_follow_categories(seed in any::<u64>()) {
        let (g, _) = fixtures().remove(1);
        let set = shadow_sameclass_pairs(&g, None, 150, seed, LabelingSource::GroundTruthClass).unwrap();
        prop_assert_eq!(set.n_link, 150);
        prop_assert_eq!(set.n_unlink, 150);
        for p in &set.pairs {
            prop_assert!(p.link_label.is_none());
            let same = g.labels()[p.u] == g.labels()[p.v];
            prop_assert_eq!(p.shadow_label, Some(if same { ShadowLabel::Same } else { ShadowLabel::Different }));
        }
    }
}

#[test]
fn same_seed_same_pairs() {
    let (g, budget) = fixtures().remove(2);
    let a = sample_pairs(&g, KnowledgeBudget::new(budget), 17).unwrap();
    let b = sample_pairs(&g, KnowledgeBudget::new(budget), 17).unwrap();
    let c = sample_pairs(&g, KnowledgeBudget::new(budget), 18).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(split_pairs(&a, 0.8, 1).unwrap(), split_pairs(&b, 0.8, 1).unwrap());
}

#[test]
fn budget_beyond_edges_is_an_error() {
    let (g, _) = fixtures().remove(0);
    let err = sample_pairs(&g, KnowledgeBudget::new(g.edge_count() + 1), 0).unwrap_err();
    assert!(matches!(err, PairError::BudgetExceedsEdges { .. }), "{err:?}");
}
