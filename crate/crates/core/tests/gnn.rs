use linksteal_core::baselines::{similarity_attack, MetricKind};
use linksteal_core::gnn::{accuracy_on, forward, train_target, Arch, ModelConfig, TargetModel};
use linksteal_core::graph::synthetic::PlantedPartition;
use linksteal_core::graph::{load_dataset, train_test_node_split, Graph};
use linksteal_core::pairs::{sample_pairs, split_pairs, KnowledgeBudget, LinkLabel, PairSet};
use ndarray::{array, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Path graph 0-1-2, two features, two classes.
fn path3() -> Graph<f64> {
    Graph::from_parts("path3", array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]], vec![0, 1, 0], 2, vec![(0, 1), (1, 2)])
}

fn fixed_gcn() -> TargetModel<f64> {
    let cfg = ModelConfig { hidden_dim: 2, ..ModelConfig::with_arch(Arch::Gcn) };
    let mut m = TargetModel::init(&cfg, 2, 2, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    m.layers[0].params = vec![array![[0.5, -1.0], [1.5, 0.25]], array![[0.1, -0.2]]];
    m.layers[1].params = vec![array![[1.0, -1.0], [-0.5, 2.0]], array![[0.0, 0.3]]];
    m
}

#[test]
fn gcn_forward_matches_hand_computation() {
    // Degrees with self-loops: 2, 3, 2.
    let d = [2f64, 3.0, 2.0];
    let mut a = [[0.0; 3]; 3];
    for (i, j) in [(0, 0), (1, 1), (2, 2), (0, 1), (1, 0), (1, 2), (2, 1)] {
        a[i][j] = 1.0 / (d[i] * d[j]).sqrt();
    }
    let x = [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
    let w0 = [[0.5, -1.0], [1.5, 0.25]];
    let b0 = [0.1, -0.2];
    let w1 = [[1.0, -1.0], [-0.5, 2.0]];
    let b1 = [0.0, 0.3];
    let layer = |h: &[[f64; 2]; 3], w: &[[f64; 2]; 2], b: &[f64; 2], relu: bool| {
        let mut out = [[0.0; 2]; 3];
        for i in 0..3 {
            for c in 0..2 {
                let mut s = b[c];
                for j in 0..3 {
                    for k in 0..2 {
                        s += a[i][j] * h[j][k] * w[k][c];
                    }
                }
                out[i][c] = if relu { s.max(0.0) } else { s };
            }
        }
        out
    };
    let z = layer(&layer(&x, &w0, &b0, true), &w1, &b1, false);
    let p = forward(&fixed_gcn(), &path3()).unwrap();
    for i in 0..3 {
        let m = z[i][0].max(z[i][1]);
        let e = [(z[i][0] - m).exp(), (z[i][1] - m).exp()];
        for c in 0..2 {
            let want = e[c] / (e[0] + e[1]);
            assert!((p.rows()[[i, c]] - want).abs() < 1e-12, "node {i} class {c}");
        }
    }
}

#[test]
fn posteriors_are_permutation_equivariant() {
    let g: Graph<f64> = PlantedPartition { avg_degree: 3.0, ..PlantedPartition::new("perm", 40, 3, 5) }.generate();
    let mut order: Vec<usize> = (0..g.node_count()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(4));
    let permuted = g.induced_subgraph(&order, "perm");
    for arch in [Arch::Gcn, Arch::Sage, Arch::Gat] {
        let cfg = ModelConfig { hidden_dim: 6, ..ModelConfig::with_arch(arch) };
        let model = TargetModel::init(&cfg, 5, 3, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let p = forward(&model, &g).unwrap();
        let q = forward(&model, &permuted).unwrap();
        for (new, &old) in order.iter().enumerate() {
            for c in 0..3 {
                assert!((q.rows()[[new, c]] - p.rows()[[old, c]]).abs() < 1e-12, "{arch} node {old}");
            }
        }
    }
}

#[test]
fn f32_and_f64_models_agree() {
    let g64: Graph<f64> = PlantedPartition::new("prec", 50, 3, 6).generate();
    let g32: Graph<f32> = PlantedPartition::new("prec", 50, 3, 6).generate();
    let split = train_test_node_split(&g64, (0.6, 0.2, 0.2), 0).unwrap();
    let cfg = ModelConfig { epochs: 20, dropout: 0.0, ..Default::default() };
    let m64 = train_target(&g64, &split, &cfg).unwrap();
    let m32 = train_target(&g32, &split, &cfg).unwrap();
    let (p64, p32) = (forward(&m64, &g64).unwrap(), forward(&m32, &g32).unwrap());
    let worst = p64.rows().iter().zip(p32.rows().iter()).map(|(a, b)| (a - *b as f64).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-3, "{worst}");
}

#[test]
fn shuffled_labels_give_a_chance_level_attack() {
    let g: Graph<f64> = PlantedPartition { avg_degree: 6.0, ..PlantedPartition::new("null", 1500, 5, 16) }.generate();
    let split = train_test_node_split(&g, (0.6, 0.2, 0.2), 0).unwrap();
    let p = forward(&train_target(&g, &split, &ModelConfig { epochs: 60, ..Default::default() }).unwrap(), &g).unwrap();
    let set = sample_pairs(&g, KnowledgeBudget::new(2000), 0).unwrap();
    let (train, test) = split_pairs(&set, 0.5, 0).unwrap();

    let real = similarity_attack(&train, &test, &p, MetricKind::Cosine).unwrap().report.accuracy;
    assert!(real > 0.7, "real labels should be learnable, got {real}");

    let shuffle = |s: &PairSet, seed: u64| {
        let mut labels: Vec<LinkLabel> = s.pairs.iter().map(|p| p.link_label.unwrap()).collect();
        labels.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let pairs = s.pairs.iter().zip(labels).map(|(p, l)| p.clone().with_link(l)).collect();
        PairSet::from_pairs(pairs, seed, s.source_graph.clone(), s.labeling_source)
    };
    let mut accs = Vec::new();
    for seed in 0..5 {
        accs.push(similarity_attack(&shuffle(&train, seed), &shuffle(&test, seed + 100), &p, MetricKind::Cosine).unwrap().report.accuracy);
    }
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    assert!((mean - 0.5).abs() < 0.04, "shuffled-label accuracy {mean} ({accs:?})");
}

#[test]
fn cora_target_beats_majority() {
    let dir = std::env::var_os("LINKSTEAL_DATA_DIR")
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data"))
        .join("cora");
    if !dir.join("meta.json").is_file() {
        eprintln!("Cora not found at {}; skipping", dir.display());
        return;
    }
    let g = load_dataset::<f64>(&dir).unwrap();
    assert_eq!((g.node_count(), g.num_categories(), g.feature_dim()), (2708, 7, 1433));
    let split = train_test_node_split(&g, (0.6, 0.2, 0.2), 0).unwrap();
    let m = train_target(&g, &split, &ModelConfig::default()).unwrap();
    let acc = accuracy_on(&m, &g, &split.test_node_ids).unwrap();
    let majority = g.majority_share(&split.test_node_ids);
    assert!(acc > majority + 0.3, "accuracy {acc} vs majority {majority}");
}

#[test]
fn posterior_rows_are_distributions() {
    let g: Graph<f64> = PlantedPartition::new("rows", 80, 4, 8).generate();
    for arch in [Arch::Gcn, Arch::Sage, Arch::Gat] {
        let m = TargetModel::init(&ModelConfig::with_arch(arch), 8, 4, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let p = forward(&m, &g).unwrap();
        let rows: &Array2<f64> = p.rows();
        for r in rows.rows() {
            assert!((r.sum() - 1.0).abs() < 1e-12);
            assert!(r.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }
}
