use std::fmt;

use serde::Serialize;

use super::Graph;
use crate::scalar::Scalar;

/// One broken graph invariant, naming the offending element.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Violation {
    LabelOutOfRange { node: usize, label: usize, classes: usize },
    DanglingEndpoint { u: usize, v: usize },
    SelfLoop { node: usize },
    NonCanonicalEdge { u: usize, v: usize },
    DuplicateEdge { u: usize, v: usize },
    FeatureRowCount { rows: usize, nodes: usize },
    FeatureWidth { declared: usize, actual: usize },
    NonFiniteFeature { node: usize },
    TextSlotCount { slots: usize, nodes: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::LabelOutOfRange { node, label, classes } => {
                write!(f, "label out of range, node {node}: label {label} not in [0, {classes})")
            }
            Violation::DanglingEndpoint { u, v } => write!(f, "dangling endpoint in edge ({u}, {v})"),
            Violation::SelfLoop { node } => write!(f, "self-loop on node {node}"),
            Violation::NonCanonicalEdge { u, v } => write!(f, "edge ({u}, {v}) not in canonical (min, max) order"),
            Violation::DuplicateEdge { u, v } => write!(f, "duplicate edge ({u}, {v})"),
            Violation::FeatureRowCount { rows, nodes } => {
                write!(f, "feature matrix has {rows} rows for {nodes} nodes")
            }
            Violation::FeatureWidth { declared, actual } => {
                write!(f, "feature width {actual} differs from declared {declared}")
            }
            Violation::NonFiniteFeature { node } => write!(f, "non-finite feature value, node {node}"),
            Violation::TextSlotCount { slots, nodes } => write!(f, "{slots} text records for {nodes} nodes"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return f.write_str("ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Checks every graph invariant. Violations are returned as data.
pub fn validate<T: Scalar>(graph: &Graph<T>) -> ValidationReport {
    let mut violations = Vec::new();
    let n = graph.node_count();

    for (node, &label) in graph.labels.iter().enumerate() {
        if label >= graph.num_categories {
            violations.push(Violation::LabelOutOfRange { node, label, classes: graph.num_categories });
        }
    }
    if graph.features.nrows() != n {
        violations.push(Violation::FeatureRowCount { rows: graph.features.nrows(), nodes: n });
    }
    if let Some(meta) = &graph.meta {
        if meta.feats != graph.features.ncols() {
            violations.push(Violation::FeatureWidth { declared: meta.feats, actual: graph.features.ncols() });
        }
    }
    for (node, row) in graph.features.outer_iter().enumerate() {
        if row.iter().any(|x| !x.is_finite()) {
            violations.push(Violation::NonFiniteFeature { node });
        }
    }
    if graph.text.len() != n {
        violations.push(Violation::TextSlotCount { slots: graph.text.len(), nodes: n });
    }

    let mut previous: Option<(usize, usize)> = None;
    for &(u, v) in &graph.edges {
        if u == v {
            violations.push(Violation::SelfLoop { node: u });
        } else if u > v {
            violations.push(Violation::NonCanonicalEdge { u, v });
        }
        if u >= n || v >= n {
            violations.push(Violation::DanglingEndpoint { u, v });
        }
        if previous == Some((u, v)) {
            violations.push(Violation::DuplicateEdge { u, v });
        }
        previous = Some((u, v));
    }

    ValidationReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn fixture(labels: Vec<usize>, edges: Vec<(usize, usize)>) -> Graph<f64> {
        Graph::from_parts("fixture", Array2::zeros((3, 2)), labels, 7, edges)
    }

    #[test]
    fn well_formed_fixture_is_ok() {
        let report = validate(&fixture(vec![0, 1, 6], vec![(0, 1), (1, 2)]));
        assert!(report.is_ok(), "{report}");
        assert_eq!(report.to_string(), "ok");
    }

    #[test]
    fn label_at_category_count_is_rejected() {
        let report = validate(&fixture(vec![0, 1, 7], vec![]));
        assert_eq!(report.violations, vec![Violation::LabelOutOfRange { node: 2, label: 7, classes: 7 }]);
        assert!(report.to_string().starts_with("label out of range, node 2"));
    }

    #[test]
    fn dangling_endpoint_is_reported() {
        let report = validate(&fixture(vec![0, 0, 0], vec![(0, 99)]));
        assert_eq!(report.violations, vec![Violation::DanglingEndpoint { u: 0, v: 99 }]);
        assert!(report.to_string().contains("dangling endpoint"));
    }

    #[test]
    fn non_finite_feature_is_reported() {
        let mut features = Array2::zeros((2, 1));
        features[[1, 0]] = f64::NAN;
        let g = Graph::from_parts("f", features, vec![0, 0], 1, []);
        assert_eq!(validate(&g).violations, vec![Violation::NonFiniteFeature { node: 1 }]);
    }
}
