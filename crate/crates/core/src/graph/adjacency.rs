use serde::{Deserialize, Serialize};

use super::Graph;
use crate::scalar::Scalar;
use crate::sparse::CsrMatrix;

/// Normalization applied to `A + I`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdjacencyNorm {
    /// `D^-1/2 (A + I) D^-1/2`
    GcnSym,
    /// `(A + I)` with every row scaled to sum to one.
    MeanNeighbor,
    /// `A + I` unscaled.
    None,
}

/// Builds the normalized adjacency over `N(v) ∪ {v}` for every node. The
/// self-loop guarantees a degree of at least one, so isolated nodes are safe.
pub fn normalized_adjacency<T: Scalar>(graph: &Graph<T>, mode: AdjacencyNorm) -> CsrMatrix<T> {
    let n = graph.node_count();
    let degree: Vec<T> = (0..n).map(|v| T::from_usize_lossy(graph.degree(v) + 1)).collect();
    let inv_sqrt: Vec<T> = degree.iter().map(|d| d.sqrt().recip()).collect();

    let rows = (0..n)
        .map(|v| {
            let mut cols: Vec<usize> = graph.neighbors(v).to_vec();
            let at = cols.binary_search(&v).unwrap_err();
            cols.insert(at, v);
            cols.into_iter()
                .map(|u| {
                    let w = match mode {
                        AdjacencyNorm::GcnSym => inv_sqrt[v] * inv_sqrt[u],
                        AdjacencyNorm::MeanNeighbor => degree[v].recip(),
                        AdjacencyNorm::None => T::one(),
                    };
                    (u, w)
                })
                .collect()
        })
        .collect();
    CsrMatrix::from_rows(n, rows)
}
