use std::path::Path;

use chrono::{DateTime, Utc};
use linksteal_core::graph::Graph;
use linksteal_core::Scalar;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::HarnessError;

/// Everything needed to re-run a pipeline invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config: PipelineConfig,
    pub seeds: Vec<u64>,
    pub seed_count: usize,
    pub datasets: Vec<DatasetRecord>,
    pub template_version: String,
    pub optimizer: String,
    /// Attacker-known pairs never appear among the scored pairs.
    pub test_pairs_exclude_known_links: bool,
    /// The run seed replaces `model.seed` and `baselines.mlp.seed`.
    pub seed_overrides_component_seeds: bool,
    pub endpoint_url: Option<String>,
    pub started_at: DateTime<Utc>,
    pub finished_at: Option<DateTime<Utc>>,
    pub stages: Vec<StageRecord>,
    pub targets: Vec<TargetRecord>,
    pub warnings: Vec<String>,
    /// Set when a stage aborted the run; artifacts written so far are kept.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub name: String,
    pub source: String,
    /// SHA-256 over the loaded graph content (see [`graph_digest`]).
    pub sha256: String,
    pub nodes: usize,
    pub edges: usize,
    pub classes: usize,
    pub feature_dim: usize,
    pub has_text: bool,
    pub known_links: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub seed: Option<u64>,
    pub dataset: Option<String>,
    pub seconds: f64,
}

/// Target model utility, recorded but not gated on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetRecord {
    pub seed: u64,
    pub dataset: String,
    pub arch: String,
    pub test_accuracy: f64,
    pub majority_baseline: f64,
    pub final_train_loss: f64,
}

impl RunManifest {
    pub fn new(config: &PipelineConfig) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
            seeds: config.seeds.clone(),
            seed_count: config.seeds.len(),
            datasets: Vec::new(),
            template_version: config.prompt.template.id().to_string(),
            optimizer: format!("{:?}", config.model.optimizer).to_lowercase(),
            test_pairs_exclude_known_links: true,
            seed_overrides_component_seeds: true,
            endpoint_url: None,
            started_at: Utc::now(),
            finished_at: None,
            stages: Vec::new(),
            targets: Vec::new(),
            warnings: Vec::new(),
            failure: None,
        }
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        let message = message.into();
        log::warn!("{message}");
        self.warnings.push(message);
    }

    pub fn write(&self, path: &Path) -> Result<(), HarnessError> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, json).map_err(|e| HarnessError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
    }
}

/// Hex SHA-256 of a graph's name, labels, edges, features (as `f64` bits)
/// and text, in that order. Equal for the same content however it was
/// loaded.
pub fn graph_digest<T: Scalar>(graph: &Graph<T>) -> String {
    let mut h = Sha256::new();
    h.update(graph.name().as_bytes());
    h.update([0]);
    for dim in [graph.node_count(), graph.feature_dim(), graph.num_categories(), graph.edge_count()] {
        h.update((dim as u64).to_le_bytes());
    }
    for &l in graph.labels() {
        h.update((l as u64).to_le_bytes());
    }
    for &(u, v) in graph.edges() {
        h.update((u as u64).to_le_bytes());
        h.update((v as u64).to_le_bytes());
    }
    for x in graph.features() {
        h.update(x.as_f64().to_bits().to_le_bytes());
    }
    for v in 0..graph.node_count() {
        match graph.text(v) {
            Some(t) => {
                h.update([1]);
                h.update(t.title.as_bytes());
                h.update([0]);
                h.update(t.abstract_text.as_bytes());
                h.update([0]);
            }
            None => h.update([0]),
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use linksteal_core::graph::synthetic::PlantedPartition;

    #[test]
    fn digest_tracks_content() {
        let a = PlantedPartition::new("g", 60, 3, 4).generate::<f64>();
        let b = PlantedPartition::new("g", 60, 3, 4).generate::<f64>();
        assert_eq!(graph_digest(&a), graph_digest(&b));
        assert_eq!(graph_digest(&a).len(), 64);
        let c = PlantedPartition { seed: 1, ..PlantedPartition::new("g", 60, 3, 4) }.generate::<f64>();
        assert_ne!(graph_digest(&a), graph_digest(&c));
        let renamed = PlantedPartition::new("h", 60, 3, 4).generate::<f64>();
        assert_ne!(graph_digest(&a), graph_digest(&renamed));
    }

    #[test]
    fn manifest_json_round_trip() {
        let mut m = RunManifest::new(&PipelineConfig::default());
        m.warn("cell missing");
        m.finished_at = Some(Utc::now());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        m.write(&path).unwrap();
        assert_eq!(RunManifest::read(&path).unwrap(), m);
    }
}
