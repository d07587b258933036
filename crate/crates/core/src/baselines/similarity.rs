use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{pair_distance, MetricError, MetricKind};
use super::AttackError;
use crate::eval::{compute_metrics, AttackId, AttackReport, Prediction, UnparseablePolicy};
use crate::gnn::PosteriorMatrix;
use crate::pairs::{LinkLabel, NodePair, PairSet};
use crate::scalar::Scalar;

/// Predicts Link iff `distance ≤ tau`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRule {
    pub metric: Option<MetricKind>,
    pub tau: f64,
    pub train_accuracy: f64,
    /// Every training distance was identical; the rule predicts the
    /// majority training label.
    pub degenerate: bool,
    /// No threshold beats the majority-label rate on the training pairs.
    pub no_better_than_majority: bool,
}

impl ThresholdRule {
    pub fn predict(&self, distance: f64) -> bool {
        distance <= self.tau
    }
}

/// Train-accuracy-maximizing threshold. Candidates are the midpoints between
/// consecutive distinct sorted distances plus one point below the minimum
/// (all Unlink) and one above the maximum (all Link); ties go to the
/// smaller threshold.
pub fn fit_threshold(distances: &[f64], labels: &[bool]) -> Result<ThresholdRule, AttackError> {
    if distances.len() != labels.len() {
        return Err(AttackError::Contract(format!("{} distances vs {} labels", distances.len(), labels.len())));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(AttackError::Contract("threshold fitting needs both labels".into()));
    }
    if let Some(bad) = distances.iter().find(|d| !d.is_finite()) {
        return Err(AttackError::Contract(format!("non-finite distance {bad}")));
    }
    let mut order: Vec<usize> = (0..distances.len()).collect();
    order.sort_by(|&a, &b| distances[a].total_cmp(&distances[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| distances[i]).collect();
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    let total = labels.len() as f64;
    let majority = n_pos.max(n_neg) as f64 / total;

    if lo == hi {
        let tau = if n_pos > n_neg { hi + 1.0 } else { lo - 1.0 };
        return Ok(ThresholdRule {
            metric: None,
            tau,
            train_accuracy: majority,
            degenerate: true,
            no_better_than_majority: true,
        });
    }

    // k = number of smallest distances predicted Link.
    let mut best_k = 0;
    let mut best_correct = n_neg;
    let mut correct = n_neg;
    let mut k = 0;
    while k < sorted.len() {
        let start = k;
        while k < sorted.len() && sorted[k] == sorted[start] {
            if labels[order[k]] {
                correct += 1;
            } else {
                correct -= 1;
            }
            k += 1;
        }
        if correct > best_correct {
            best_correct = correct;
            best_k = k;
        }
    }
    let tau = if best_k == 0 {
        lo - 1.0
    } else if best_k == sorted.len() {
        hi + 1.0
    } else {
        0.5 * (sorted[best_k - 1] + sorted[best_k])
    };
    let train_accuracy = best_correct as f64 / total;
    Ok(ThresholdRule {
        metric: None,
        tau,
        train_accuracy,
        degenerate: false,
        no_better_than_majority: train_accuracy <= majority,
    })
}

fn gold_of(p: &NodePair) -> Result<LinkLabel, AttackError> {
    match p.positive() {
        Some(true) => Ok(LinkLabel::Link),
        Some(false) => Ok(LinkLabel::Unlink),
        None => Err(AttackError::Contract(format!("pair ({}, {}) has no label", p.u, p.v))),
    }
}

/// Distances for every pair; `None` where the metric is undefined.
pub fn pair_distances<T: Scalar>(
    pairs: &[NodePair],
    posteriors: &PosteriorMatrix<T>,
    metric: MetricKind,
) -> Result<Vec<Option<f64>>, AttackError> {
    let n = posteriors.node_count();
    pairs
        .iter()
        .map(|p| {
            if p.v >= n {
                return Err(AttackError::MissingPosterior { node: p.v, dataset: p.dataset.clone() });
            }
            match pair_distance(metric, posteriors.row(p.u), posteriors.row(p.v)) {
                Ok(d) => Ok(Some(d)),
                Err(MetricError::Undefined { .. }) => Ok(None),
                Err(e) => Err(AttackError::Metric(e)),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityOutcome {
    pub rule: ThresholdRule,
    pub report: AttackReport,
    pub test_distances: Vec<Option<f64>>,
    pub predictions: Vec<Prediction>,
    pub skipped_train: usize,
    pub skipped_test: usize,
}

/// Fits a threshold on `train` distances and scores `test`. Pairs whose
/// distance is undefined are skipped (excluded from scoring) and counted.
pub fn similarity_attack<T: Scalar>(
    train: &PairSet,
    test: &PairSet,
    posteriors: &PosteriorMatrix<T>,
    metric: MetricKind,
) -> Result<SimilarityOutcome, AttackError> {
    let train_d = pair_distances(&train.pairs, posteriors, metric)?;
    let (mut dists, mut labels) = (Vec::new(), Vec::new());
    let mut skipped_train = 0;
    for (p, d) in train.pairs.iter().zip(&train_d) {
        match d {
            Some(d) => {
                dists.push(*d);
                labels.push(gold_of(p)? == LinkLabel::Link);
            }
            None => skipped_train += 1,
        }
    }
    let mut rule = fit_threshold(&dists, &labels)?;
    rule.metric = Some(metric);
    threshold_attack(test, posteriors, rule, skipped_train)
}

/// Scores `test` with a fixed rule.
pub fn threshold_attack<T: Scalar>(
    test: &PairSet,
    posteriors: &PosteriorMatrix<T>,
    rule: ThresholdRule,
    skipped_train: usize,
) -> Result<SimilarityOutcome, AttackError> {
    let metric = rule.metric.unwrap_or(MetricKind::Cosine);
    let test_d = pair_distances(&test.pairs, posteriors, metric)?;
    let predictions: Vec<Prediction> =
        test_d.iter().map(|d| d.map_or(Prediction::Unparseable, |d| Prediction::from(rule.predict(d)))).collect();
    let gold: Vec<LinkLabel> = test.pairs.iter().map(gold_of).collect::<Result<_, _>>()?;
    let skipped_test = test_d.iter().filter(|d| d.is_none()).count();
    let mut report = compute_metrics(&predictions, &gold, UnparseablePolicy::Exclude)?
        .with_id(AttackId::new(format!("similarity-{metric}"), test.source_graph.clone(), "white-box", test.seed));
    report.unparseable_count = 0;
    if skipped_test > 0 || skipped_train > 0 {
        report.flags.push(format!("skipped pairs: {skipped_train} train, {skipped_test} test"));
    }
    if rule.degenerate {
        report.flags.push("degenerate threshold".into());
    }
    if rule.no_better_than_majority {
        report.flags.push("threshold no better than majority".into());
    }
    Ok(SimilarityOutcome { rule, report, test_distances: test_d, predictions, skipped_train, skipped_test })
}

/// Audit dump: `u,v,label,distance` (empty distance where undefined).
pub fn write_distance_dump(path: &Path, pairs: &[NodePair], distances: &[Option<f64>]) -> Result<(), AttackError> {
    let io = |e: std::io::Error| AttackError::Io { path: path.to_path_buf(), source: e };
    let mut w = csv::Writer::from_path(path).map_err(|e| io(e.into()))?;
    w.write_record(["u", "v", "label", "distance"]).map_err(|e| io(e.into()))?;
    for (p, d) in pairs.iter().zip(distances) {
        let label = gold_of(p)?.to_string();
        let dist = d.map(|d| d.to_string()).unwrap_or_default();
        w.write_record([p.u.to_string(), p.v.to_string(), label, dist]).map_err(|e| io(e.into()))?;
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_midpoint() {
        let r = fit_threshold(&[0.1, 0.2, 0.8, 0.9], &[true, true, false, false]).unwrap();
        assert!((r.tau - 0.5).abs() < 1e-15);
        assert_eq!(r.train_accuracy, 1.0);
        assert!(!r.degenerate && !r.no_better_than_majority);
    }

    #[test]
    fn anti_correlated_is_flagged() {
        let r = fit_threshold(&[0.9, 0.1], &[true, false]).unwrap();
        assert_eq!(r.train_accuracy, 0.5);
        assert!(r.no_better_than_majority);
        assert!(r.tau < 0.1);
    }

    #[test]
    fn constant_distances_are_degenerate() {
        let r = fit_threshold(&[0.3, 0.3, 0.3], &[true, false, false]).unwrap();
        assert!(r.degenerate);
        assert!(!r.predict(0.3));
        let r = fit_threshold(&[0.3, 0.3], &[true, false]).unwrap();
        assert!(!r.predict(0.3), "ties go to Unlink");
    }

    #[test]
    fn tie_goes_to_smaller_tau() {
        // Both k=1 and k=3 give 3/4 correct.
        let r = fit_threshold(&[0.1, 0.2, 0.3, 0.4], &[true, false, true, false]).unwrap();
        assert!((r.tau - 0.15).abs() < 1e-15);
    }
}
