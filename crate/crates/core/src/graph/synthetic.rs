//! Seeded planted-partition graphs for fixtures and scale tests.

use std::collections::BTreeSet;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Graph, NodeText};
use crate::scalar::Scalar;

const SYLLABLES: [&str; 16] = [
    "ka", "lo", "mi", "ten", "sor", "vel", "ra", "quo", "ni", "dex", "pha", "lum", "tor", "zi", "bel", "gan",
];

#[derive(Debug, Clone)]
pub struct PlantedPartition {
    pub name: String,
    pub nodes: usize,
    pub classes: usize,
    pub feature_dim: usize,
    pub avg_degree: f64,
    /// Probability that a generated edge joins two nodes of the same class.
    pub homophily: f64,
    /// Standard deviation of per-node feature noise around the class centroid.
    pub feature_noise: f64,
    pub with_text: bool,
    pub seed: u64,
}

impl PlantedPartition {
    pub fn new(name: impl Into<String>, nodes: usize, classes: usize, feature_dim: usize) -> Self {
        PlantedPartition {
            name: name.into(),
            nodes,
            classes,
            feature_dim,
            avg_degree: 4.0,
            homophily: 0.8,
            feature_noise: 1.0,
            with_text: false,
            seed: 0,
        }
    }

    pub fn generate<T: Scalar>(&self) -> Graph<T> {
        assert!(self.classes >= 1 && self.nodes >= 1, "need at least one node and one class");
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let labels: Vec<usize> = (0..self.nodes).map(|_| rng.random_range(0..self.classes)).collect();
        let mut members = vec![Vec::new(); self.classes];
        for (v, &c) in labels.iter().enumerate() {
            members[c].push(v);
        }

        let centroids: Vec<Vec<f64>> = (0..self.classes)
            .map(|_| (0..self.feature_dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let mut features = Array2::<T>::zeros((self.nodes, self.feature_dim));
        for (v, &c) in labels.iter().enumerate() {
            for j in 0..self.feature_dim {
                let noise: f64 = rng.sample(StandardNormal);
                features[[v, j]] = T::lit(centroids[c][j] + self.feature_noise * noise);
            }
        }

        let max_edges = self.nodes * (self.nodes - 1) / 2;
        let target = ((self.nodes as f64 * self.avg_degree / 2.0).round() as usize).min(max_edges);
        let mut edges = BTreeSet::new();
        let mut attempts = 0usize;
        while edges.len() < target && attempts < target.saturating_mul(50) + 1000 {
            attempts += 1;
            let u = rng.random_range(0..self.nodes);
            let same = &members[labels[u]];
            let v = if rng.random_bool(self.homophily.clamp(0.0, 1.0)) && same.len() > 1 {
                same[rng.random_range(0..same.len())]
            } else {
                rng.random_range(0..self.nodes)
            };
            if u != v {
                edges.insert((u.min(v), u.max(v)));
            }
        }

        let mut graph = Graph::from_parts(self.name.clone(), features, labels.clone(), self.classes, edges);
        if self.with_text {
            let text = labels
                .iter()
                .enumerate()
                .map(|(v, &c)| {
                    let words = rng.random_range(12..40);
                    let body: Vec<String> = (0..words).map(|_| topic_word(c, &mut rng)).collect();
                    Some(NodeText {
                        title: format!("On {} and {} ({v})", topic_word(c, &mut rng), topic_word(c, &mut rng)),
                        abstract_text: body.join(" "),
                    })
                })
                .collect();
            graph = graph.with_text(text);
        }
        graph
    }
}

fn topic_word(class: usize, rng: &mut ChaCha8Rng) -> String {
    let a = SYLLABLES[(class * 3 + rng.random_range(0..3)) % SYLLABLES.len()];
    let b = SYLLABLES[rng.random_range(0..SYLLABLES.len())];
    format!("{a}{b}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::validate;

    #[test]
    fn generated_graph_is_valid_and_deterministic() {
        let mut spec = PlantedPartition::new("pp", 200, 4, 8);
        spec.with_text = true;
        let a: Graph<f64> = spec.generate();
        let b: Graph<f64> = spec.generate();
        assert!(validate(&a).is_ok());
        assert_eq!(a, b);
        assert_eq!(a.edge_count(), 400);
        let same = a.edges().iter().filter(|&&(u, v)| a.labels()[u] == a.labels()[v]).count();
        assert!(same as f64 / a.edge_count() as f64 > 0.7);
        assert!(a.has_text());
    }
}
