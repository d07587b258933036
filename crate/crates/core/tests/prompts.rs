use linksteal_core::gnn::PosteriorMatrix;
use linksteal_core::graph::{Graph, NodeText};
use linksteal_core::pairs::{LinkLabel, NodePair, PairSet, LabelingSource};
use linksteal_core::prompt::{
    build_finetune_set, build_inference_records, export_jsonl, format_probabilities, import_jsonl, truncate_abstract,
    PromptConfig, TemplateVersion, TRUNCATION_MARKER,
};
use ndarray::{arr1, Array2};
use proptest::prelude::*;

fn text() -> impl Strategy<Value = String> {
    prop_oneof![
        "[a-zA-Z ,.]{0,40}",
        "\\PC{0,60}",
        Just("quotes \" and \\ backslashes\nand newlines\ttabs".to_string()),
    ]
}

/// A 6-node graph with arbitrary text and arbitrary 3-class posteriors.
fn fixture() -> impl Strategy<Value = (Graph<f64>, PosteriorMatrix<f64>)> {
    (prop::collection::vec((text(), text()), 6), prop::collection::vec(prop::collection::vec(0.01f64..1.0, 3), 6)).prop_map(
        |(texts, raw)| {
            let g = Graph::from_parts("fx", Array2::<f64>::zeros((6, 2)), vec![0, 1, 2, 0, 1, 2], 3, vec![(0, 1), (2, 3), (4, 5)])
                .with_text(texts.into_iter().map(|(t, a)| Some(NodeText { title: t, abstract_text: a })).collect());
            let mut rows = Array2::<f64>::zeros((6, 3));
            for (i, r) in raw.iter().enumerate() {
                let s: f64 = r.iter().sum();
                for (c, v) in r.iter().enumerate() {
                    rows[[i, c]] = v / s;
                }
            }
            (g, PosteriorMatrix::new(rows, "test", "fx").unwrap())
        },
    )
}

fn all_pairs() -> PairSet {
    let mut pairs = Vec::new();
    for u in 0..6 {
        for v in u + 1..6 {
            let l = if v == u + 1 && u % 2 == 0 { LinkLabel::Link } else { LinkLabel::Unlink };
            pairs.push(NodePair::new(u, v, "fx").with_link(l));
        }
    }
    PairSet::from_pairs(pairs, 0, "fx", LabelingSource::GroundTruthLink)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn text_off_rendering_is_contained((g, p) in fixture(), precision in 1usize..6, max_chars in 1usize..50) {
        let on = PromptConfig { probability_precision: precision, max_abstract_chars: max_chars, ..Default::default() };
        prop_assert_eq!(on.template, TemplateVersion::V2);
        let off = PromptConfig { include_text: false, ..on.clone() };
        let pairs = all_pairs();
        let a = build_finetune_set(&pairs, &on, &g, &p).unwrap();
        let b = build_finetune_set(&pairs, &off, &g, &p).unwrap();
        for (x, y) in a.records.iter().zip(&b.records) {
            prop_assert!(x.user_text().unwrap().contains(y.user_text().unwrap()));
            prop_assert_eq!(x.answer(), y.answer());
        }
    }

    #[test]
    fn jsonl_round_trip_is_byte_identical((g, p) in fixture(), v1 in any::<bool>()) {
        let cfg = PromptConfig { template: if v1 { TemplateVersion::V1 } else { TemplateVersion::V2 }, ..Default::default() };
        let pairs = all_pairs();
        let mut records = build_finetune_set(&pairs, &cfg, &g, &p).unwrap().records;
        records.extend(build_inference_records(&pairs, &cfg, &g, &p).unwrap());
        let dir = tempfile::tempdir().unwrap();
        let (first, second) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
        prop_assert_eq!(export_jsonl(&records, &first).unwrap(), 30);
        let back = import_jsonl(&first).unwrap();
        prop_assert_eq!(&back.records, &records);
        export_jsonl(&back.records, &second).unwrap();
        prop_assert_eq!(std::fs::read(&first).unwrap(), std::fs::read(&second).unwrap());
    }

    #[test]
    fn rendering_is_deterministic((g, p) in fixture()) {
        let cfg = PromptConfig::default();
        let a = build_finetune_set(&all_pairs(), &cfg, &g, &p).unwrap();
        let b = build_finetune_set(&all_pairs(), &cfg, &g, &p).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn truncation_keeps_a_prefix(s in "\\PC{0,80}", max in 0usize..60) {
        let (t, cut) = truncate_abstract(&s, max);
        let n = s.chars().count();
        prop_assert_eq!(cut, n > max);
        if cut {
            prop_assert_eq!(t.chars().count(), max + 1);
            prop_assert!(t.ends_with(TRUNCATION_MARKER));
            prop_assert!(s.starts_with(&t[..t.len() - TRUNCATION_MARKER.len_utf8()]));
        } else {
            prop_assert_eq!(t, s);
        }
    }

    #[test]
    fn probabilities_use_fixed_precision(v in prop::collection::vec(0.0f64..=1.0, 1..10), precision in 1usize..8) {
        let s = format_probabilities(arr1(&v).view(), precision);
        let inner = s.strip_prefix('[').and_then(|x| x.strip_suffix(']')).unwrap();
        for (tok, x) in inner.split(", ").zip(&v) {
            let (_, frac) = tok.split_once('.').unwrap();
            prop_assert_eq!(frac.len(), precision);
            let parsed: f64 = tok.parse().unwrap();
            prop_assert!((parsed - x).abs() <= 0.5 * 10f64.powi(-(precision as i32)) + 1e-15);
        }
    }
}

#[test]
fn rounding_examples() {
    assert_eq!(format_probabilities(arr1(&[0.125, 0.375, 0.5]).view(), 2), "[0.12, 0.38, 0.50]");
    assert_eq!(format_probabilities(arr1(&[-0.0, 1.0]).view(), 1), "[0.0, 1.0]");
    assert_eq!(format_probabilities(arr1(&[0.0500001, 0.0749, 0.8750999]).view(), 2), "[0.05, 0.07, 0.88]");
}
