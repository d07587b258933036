use std::fmt;
use std::str::FromStr;

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MetricKind {
    Cosine,
    Euclidean,
    Correlation,
    Chebyshev,
    Braycurtis,
    Canberra,
    Cityblock,
    Sqeuclidean,
}

impl MetricKind {
    pub const ALL: [MetricKind; 8] = [
        MetricKind::Cosine,
        MetricKind::Euclidean,
        MetricKind::Correlation,
        MetricKind::Chebyshev,
        MetricKind::Braycurtis,
        MetricKind::Canberra,
        MetricKind::Cityblock,
        MetricKind::Sqeuclidean,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Cosine => "cosine",
            MetricKind::Euclidean => "euclidean",
            MetricKind::Correlation => "correlation",
            MetricKind::Chebyshev => "chebyshev",
            MetricKind::Braycurtis => "braycurtis",
            MetricKind::Canberra => "canberra",
            MetricKind::Cityblock => "cityblock",
            MetricKind::Sqeuclidean => "sqeuclidean",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        MetricKind::ALL.into_iter().find(|m| m.name() == lower).ok_or_else(|| format!("unknown metric `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("vectors differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("vectors are empty")]
    Empty,
    #[error("{metric} undefined: {reason}")]
    Undefined { metric: MetricKind, reason: &'static str },
}

/// Distance between `a` and `b` under `metric`, accumulated in `f64`.
pub fn pair_distance<T: Scalar>(metric: MetricKind, a: ArrayView1<'_, T>, b: ArrayView1<'_, T>) -> Result<f64, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(MetricError::Empty);
    }
    let pairs = || a.iter().zip(b.iter()).map(|(x, y)| (x.as_f64(), y.as_f64()));
    let undefined = |reason| MetricError::Undefined { metric, reason };
    let d = match metric {
        MetricKind::Cosine => cosine(pairs()).ok_or_else(|| undefined("zero vector"))?,
        MetricKind::Correlation => {
            let n = a.len() as f64;
            let ma = pairs().map(|p| p.0).sum::<f64>() / n;
            let mb = pairs().map(|p| p.1).sum::<f64>() / n;
            cosine(pairs().map(|(x, y)| (x - ma, y - mb))).ok_or_else(|| undefined("constant vector"))?
        }
        MetricKind::Euclidean => pairs().map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
        MetricKind::Sqeuclidean => pairs().map(|(x, y)| (x - y) * (x - y)).sum(),
        MetricKind::Chebyshev => pairs().map(|(x, y)| (x - y).abs()).fold(0.0, f64::max),
        MetricKind::Cityblock => pairs().map(|(x, y)| (x - y).abs()).sum(),
        MetricKind::Braycurtis => {
            let num: f64 = pairs().map(|(x, y)| (x - y).abs()).sum();
            let den: f64 = pairs().map(|(x, y)| (x + y).abs()).sum();
            if den == 0.0 {
                return Err(undefined("both vectors sum to zero"));
            }
            num / den
        }
        MetricKind::Canberra => pairs()
            .map(|(x, y)| {
                let den = x.abs() + y.abs();
                if den == 0.0 {
                    0.0
                } else {
                    (x - y).abs() / den
                }
            })
            .sum(),
    };
    Ok(d)
}

fn cosine(pairs: impl Iterator<Item = (f64, f64)>) -> Option<f64> {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in pairs {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    // sqrt of the product (not product of sqrts) makes d(a, a) exactly 0.
    Some((1.0 - dot / (na * nb).sqrt()).max(0.0))
}
