//! Comparison attacks: distance-threshold attacks over eight metrics and a
//! supervised MLP over pair features.

mod features;
mod metrics;
mod mlp;
mod similarity;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::eval::{AttackReport, EvalError};

pub use features::{build_pair_feature, pair_feature_width, FeatureMode, PairSource, SourceRegistry};
pub use metrics::{pair_distance, MetricError, MetricKind};
pub use mlp::{common_feature_width, mlp_attack, BinaryMlp, MlpConfig, MlpOutcome};
pub use similarity::{
    fit_threshold, pair_distances, similarity_attack, threshold_attack, write_distance_dump, SimilarityOutcome,
    ThresholdRule,
};

#[derive(Debug, thiserror::Error)]
pub enum AttackError {
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("no posterior row for node {node} of {dataset}")]
    MissingPosterior { node: usize, dataset: String },
    #[error("no feature row for node {node} of {dataset}")]
    MissingFeatures { node: usize, dataset: String },
    #[error("dataset {0} has no registered graph/posteriors")]
    MissingSource(String),
    #[error("incompatible {kind} dimensions: {first} has {first_width}, {second} has {second_width}")]
    IncompatibleDimensions { kind: &'static str, first: String, first_width: usize, second: String, second_width: usize },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("attack model training diverged")]
    Diverged,
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// Mean and best accuracy (and, independently, F1) over the eight metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanMax {
    pub mean_accuracy: f64,
    pub mean_f1: f64,
    pub max_accuracy: f64,
    pub max_accuracy_method: String,
    pub max_f1: f64,
    pub max_f1_method: String,
}

/// Requires exactly one report per metric.
pub fn aggregate_mean_max(reports: &[AttackReport]) -> Result<MeanMax, AttackError> {
    if reports.len() != MetricKind::ALL.len() {
        return Err(AttackError::Eval(EvalError::Cardinality { expected: MetricKind::ALL.len(), found: reports.len() }));
    }
    let n = reports.len() as f64;
    let best = |key: fn(&AttackReport) -> f64| {
        reports.iter().fold(&reports[0], |b, r| if key(r) > key(b) { r } else { b })
    };
    let by_acc = best(|r| r.accuracy);
    let by_f1 = best(|r| r.f1);
    Ok(MeanMax {
        mean_accuracy: reports.iter().map(|r| r.accuracy).sum::<f64>() / n,
        mean_f1: reports.iter().map(|r| r.f1).sum::<f64>() / n,
        max_accuracy: by_acc.accuracy,
        max_accuracy_method: by_acc.attack_id.method.clone(),
        max_f1: by_f1.f1,
        max_f1_method: by_f1.attack_id.method.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::AttackId;

    fn reports(acc: &[f64]) -> Vec<AttackReport> {
        acc.iter()
            .zip(MetricKind::ALL)
            .map(|(&a, m)| AttackReport { accuracy: a, f1: a, ..Default::default() }.with_id(AttackId::new(format!("similarity-{m}"), "d", "white-box", 0)))
            .collect()
    }

    #[test]
    fn mean_and_max() {
        let mm = aggregate_mean_max(&reports(&[0.5, 0.6, 0.7, 0.8, 0.9, 0.5, 0.5, 0.5])).unwrap();
        assert!((mm.mean_accuracy - 0.625).abs() < 1e-15);
        assert_eq!(mm.max_accuracy, 0.9);
        assert_eq!(mm.max_accuracy_method, "similarity-braycurtis");
        let flat = aggregate_mean_max(&reports(&[0.8; 8])).unwrap();
        assert!((flat.mean_accuracy - 0.8).abs() < 1e-15);
        assert_eq!(flat.max_accuracy, 0.8);
    }

    #[test]
    fn wrong_cardinality() {
        assert!(aggregate_mean_max(&reports(&[0.5; 7])).is_err());
    }
}
