use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use super::AttackError;
use crate::gnn::PosteriorMatrix;
use crate::graph::Graph;
use crate::pairs::NodePair;
use crate::scalar::Scalar;

/// Which per-node vectors feed a supervised attack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureMode {
    #[serde(rename = "feature")]
    Feature,
    #[serde(rename = "pp")]
    Pp,
    #[serde(rename = "pp+feature")]
    PpFeature,
}

impl FeatureMode {
    pub const ALL: [FeatureMode; 3] = [FeatureMode::Feature, FeatureMode::Pp, FeatureMode::PpFeature];

    pub fn uses_posteriors(self) -> bool {
        self != FeatureMode::Feature
    }

    pub fn uses_features(self) -> bool {
        self != FeatureMode::Pp
    }
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureMode::Feature => "Feature",
            FeatureMode::Pp => "PP",
            FeatureMode::PpFeature => "PP+Feature",
        })
    }
}

impl FromStr for FeatureMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "feature" => Ok(FeatureMode::Feature),
            "pp" => Ok(FeatureMode::Pp),
            "pp+feature" | "pp-feature" => Ok(FeatureMode::PpFeature),
            other => Err(format!("unknown feature mode `{other}`")),
        }
    }
}

/// Per-dataset inputs for building pair features.
pub struct PairSource<'a, T> {
    pub graph: &'a Graph<T>,
    pub posteriors: &'a PosteriorMatrix<T>,
}

/// Dataset name ↦ its graph and posteriors.
pub type SourceRegistry<'a, T> = BTreeMap<String, PairSource<'a, T>>;

fn compose<T: Scalar>(out: &mut Vec<T>, a: ArrayView1<'_, T>, b: ArrayView1<'_, T>) {
    out.extend(a.iter().zip(b.iter()).map(|(&x, &y)| (x - y).abs()));
    out.extend(a.iter().zip(b.iter()).map(|(&x, &y)| x * y));
}

pub fn pair_feature_width<T: Scalar>(mode: FeatureMode, graph: &Graph<T>, posteriors: &PosteriorMatrix<T>) -> usize {
    let mut w = 0;
    if mode.uses_posteriors() {
        w += 2 * posteriors.width();
    }
    if mode.uses_features() {
        w += 2 * graph.feature_dim();
    }
    w
}

/// Symmetric pair vector. For each source `s` (posteriors, then numeric
/// features) the block is `|s_u − s_v|` followed by `s_u ⊙ s_v`, so the PP
/// vector is an exact prefix of the PP+Feature vector.
pub fn build_pair_feature<T: Scalar>(
    pair: &NodePair,
    mode: FeatureMode,
    graph: &Graph<T>,
    posteriors: &PosteriorMatrix<T>,
) -> Result<Vec<T>, AttackError> {
    let mut out = Vec::with_capacity(pair_feature_width(mode, graph, posteriors));
    if mode.uses_posteriors() {
        for node in [pair.u, pair.v] {
            if node >= posteriors.node_count() {
                return Err(AttackError::MissingPosterior { node, dataset: pair.dataset.clone() });
            }
        }
        compose(&mut out, posteriors.row(pair.u), posteriors.row(pair.v));
    }
    if mode.uses_features() {
        let x = graph.features();
        for node in [pair.u, pair.v] {
            if node >= x.nrows() {
                return Err(AttackError::MissingFeatures { node, dataset: pair.dataset.clone() });
            }
        }
        compose(&mut out, x.row(pair.u), x.row(pair.v));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn fixture() -> (Graph<f64>, PosteriorMatrix<f64>) {
        let g = Graph::from_parts("d", array![[1.0, 0.0], [0.0, 2.0], [1.0, 1.0]], vec![0, 1, 2], 3, vec![(0, 1)]);
        let p = PosteriorMatrix::new(
            array![[0.15, 0.72, 0.13], [0.15, 0.72, 0.13], [0.6, 0.3, 0.1]],
            "m",
            "d",
        )
        .unwrap();
        (g, p)
    }

    #[test]
    fn equal_posteriors_product_half() {
        let (g, p) = fixture();
        let f = build_pair_feature(&NodePair::new(0, 1, "d"), FeatureMode::Pp, &g, &p).unwrap();
        assert_eq!(&f[..3], &[0.0, 0.0, 0.0]);
        let expect = [0.0225, 0.5184, 0.0169];
        for (a, b) in f[3..].iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn pp_is_prefix_of_pp_feature() {
        let (g, p) = fixture();
        let pair = NodePair::new(2, 0, "d");
        let pp = build_pair_feature(&pair, FeatureMode::Pp, &g, &p).unwrap();
        let both = build_pair_feature(&pair, FeatureMode::PpFeature, &g, &p).unwrap();
        let feat = build_pair_feature(&pair, FeatureMode::Feature, &g, &p).unwrap();
        assert_eq!(&both[..pp.len()], &pp[..]);
        assert_eq!(&both[pp.len()..], &feat[..]);
        assert_eq!(both.len(), pair_feature_width(FeatureMode::PpFeature, &g, &p));
    }

    #[test]
    fn missing_row_is_an_error() {
        let (g, p) = fixture();
        let pair = NodePair { u: 0, v: 7, link_label: None, shadow_label: None, dataset: "d".into() };
        assert!(matches!(
            build_pair_feature(&pair, FeatureMode::Pp, &g, &p),
            Err(AttackError::MissingPosterior { node: 7, .. })
        ));
    }
}
