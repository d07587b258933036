use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Graph;
use crate::scalar::Scalar;

/// Disjoint node-id sets for target-model training.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    #[serde(rename = "train")]
    pub train_node_ids: Vec<usize>,
    #[serde(rename = "val")]
    pub val_node_ids: Vec<usize>,
    #[serde(rename = "test")]
    pub test_node_ids: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Error, PartialEq)]
pub enum SplitError {
    #[error("split fractions must be positive and sum to at most 1, got ({0}, {1}, {2})")]
    Fractions(f64, f64, f64),
}

/// Seeded random node split with set sizes `floor(fraction * node_count)`.
pub fn train_test_node_split<T: Scalar>(
    graph: &Graph<T>,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<SplitSpec, SplitError> {
    let (train, val, test) = fractions;
    let valid = [train, val, test].iter().all(|f| f.is_finite() && *f > 0.0) && train + val + test <= 1.0 + 1e-12;
    if !valid {
        return Err(SplitError::Fractions(train, val, test));
    }
    let n = graph.node_count();
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let sizes = [train, val, test].map(|f| (f * n as f64 + 1e-9).floor() as usize);
    let mut rest = ids.into_iter();
    let mut take = |k: usize| -> Vec<usize> {
        let mut part: Vec<usize> = rest.by_ref().take(k).collect();
        part.sort_unstable();
        part
    };
    Ok(SplitSpec {
        train_node_ids: take(sizes[0]),
        val_node_ids: take(sizes[1]),
        test_node_ids: take(sizes[2]),
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use std::collections::HashSet;

    fn ten() -> Graph<f64> {
        Graph::from_parts("ten", Array2::zeros((10, 1)), vec![0; 10], 1, [])
    }

    #[test]
    fn sizes_are_floored_and_disjoint() {
        let s = train_test_node_split(&ten(), (0.6, 0.2, 0.2), 7).unwrap();
        assert_eq!((s.train_node_ids.len(), s.val_node_ids.len(), s.test_node_ids.len()), (6, 2, 2));
        let all: HashSet<_> = s.train_node_ids.iter().chain(&s.val_node_ids).chain(&s.test_node_ids).collect();
        assert_eq!(all.len(), 10);
    }

    #[test]
    fn deterministic_per_seed() {
        let g = ten();
        assert_eq!(train_test_node_split(&g, (0.6, 0.2, 0.2), 7), train_test_node_split(&g, (0.6, 0.2, 0.2), 7));
    }

    #[test]
    fn oversubscribed_fractions_are_rejected() {
        assert_eq!(
            train_test_node_split(&ten(), (0.9, 0.2, 0.2), 7),
            Err(SplitError::Fractions(0.9, 0.2, 0.2))
        );
    }
}
