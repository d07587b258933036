//! Attributed citation graphs: numeric features, optional paper text,
//! category labels and an undirected edge set kept in canonical `(min, max)`
//! form.

mod adjacency;
mod io;
mod split;
pub mod synthetic;
mod validate;

use std::collections::BTreeSet;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

pub use adjacency::{normalized_adjacency, AdjacencyNorm};
pub use io::{export_dataset, load_dataset, GraphError};
pub use split::{train_test_node_split, SplitError, SplitSpec};
pub use validate::{validate, ValidationReport, Violation};

/// Title and abstract of one paper.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeText {
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
}

/// How the source counted links in its declared statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LinkConvention {
    /// Each undirected edge is counted once per direction.
    DirectedIncidence,
    #[default]
    Undirected,
}

/// Dataset statistics as declared by the source files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub nodes: usize,
    pub feats: usize,
    /// Declared link count, in `link_convention` units. Not recomputed.
    pub links: Option<usize>,
    pub classes: usize,
    pub whitebox_link_budget: Option<usize>,
    pub link_convention: LinkConvention,
}

/// Edge cleanup performed while building a graph.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadStats {
    pub raw_edges: usize,
    pub self_loops_dropped: usize,
    pub duplicates_merged: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Graph<T> {
    name: String,
    features: Array2<T>,
    text: Vec<Option<NodeText>>,
    labels: Vec<usize>,
    num_categories: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
    meta: Option<DatasetMeta>,
    declared_split: Option<SplitSpec>,
    load_stats: LoadStats,
}

impl<T: Scalar> Graph<T> {
    /// Assembles a graph from raw parts. Edges are canonicalized here
    /// (self-loops dropped, reversed and repeated pairs merged) but nothing
    /// else is checked; run [`validate`] before trusting the result.
    pub fn from_parts(
        name: impl Into<String>,
        features: Array2<T>,
        labels: Vec<usize>,
        num_categories: usize,
        raw_edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Self {
        let node_count = labels.len();
        let mut stats = LoadStats::default();
        let mut canonical = BTreeSet::new();
        for (u, v) in raw_edges {
            stats.raw_edges += 1;
            if u == v {
                stats.self_loops_dropped += 1;
                continue;
            }
            if !canonical.insert((u.min(v), u.max(v))) {
                stats.duplicates_merged += 1;
            }
        }
        let edges: Vec<(usize, usize)> = canonical.into_iter().collect();
        let mut neighbors = vec![Vec::new(); node_count];
        for &(u, v) in &edges {
            if v < node_count {
                neighbors[u].push(v);
                neighbors[v].push(u);
            }
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Graph {
            name: name.into(),
            features,
            text: vec![None; node_count],
            labels,
            num_categories,
            edges,
            neighbors,
            meta: None,
            declared_split: None,
            load_stats: stats,
        }
    }

    pub fn with_text(mut self, text: Vec<Option<NodeText>>) -> Self {
        self.text = text;
        self
    }

    pub fn with_meta(mut self, meta: DatasetMeta) -> Self {
        self.meta = Some(meta);
        self
    }

    pub fn with_declared_split(mut self, split: SplitSpec) -> Self {
        self.declared_split = Some(split);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_categories(&self) -> usize {
        self.num_categories
    }

    pub fn features(&self) -> &Array2<T> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn text(&self, node: usize) -> Option<&NodeText> {
        self.text.get(node).and_then(Option::as_ref)
    }

    /// True when at least one node carries a title or abstract.
    pub fn has_text(&self) -> bool {
        self.text.iter().any(Option::is_some)
    }

    /// Canonical `(u, v)` pairs with `u < v`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.neighbors[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.neighbors[node].len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        if u == v || u >= self.node_count() || v >= self.node_count() {
            return false;
        }
        let (a, b) = if self.neighbors[u].len() <= self.neighbors[v].len() { (u, v) } else { (v, u) };
        self.neighbors[a].binary_search(&b).is_ok()
    }

    pub fn meta(&self) -> Option<&DatasetMeta> {
        self.meta.as_ref()
    }

    pub fn declared_split(&self) -> Option<&SplitSpec> {
        self.declared_split.as_ref()
    }

    pub fn load_stats(&self) -> LoadStats {
        self.load_stats
    }

    /// Share of the most frequent category among `nodes`.
    pub fn majority_share(&self, nodes: &[usize]) -> f64 {
        if nodes.is_empty() {
            return 0.0;
        }
        let mut counts = vec![0usize; self.num_categories.max(1)];
        for &n in nodes {
            if let Some(c) = counts.get_mut(self.labels[n]) {
                *c += 1;
            }
        }
        *counts.iter().max().unwrap_or(&0) as f64 / nodes.len() as f64
    }

    /// Subgraph induced by `nodes`, relabelled densely in the given order.
    pub fn induced_subgraph(&self, nodes: &[usize], name: impl Into<String>) -> Graph<T> {
        let mut index = vec![usize::MAX; self.node_count()];
        for (new, &old) in nodes.iter().enumerate() {
            index[old] = new;
        }
        let features = self.features.select(ndarray::Axis(0), nodes);
        let labels = nodes.iter().map(|&n| self.labels[n]).collect();
        let edges = self
            .edges
            .iter()
            .filter(|&&(u, v)| index[u] != usize::MAX && index[v] != usize::MAX)
            .map(|&(u, v)| (index[u], index[v]));
        let text = nodes.iter().map(|&n| self.text[n].clone()).collect();
        Graph::from_parts(name, features, labels, self.num_categories, edges).with_text(text)
    }
}
