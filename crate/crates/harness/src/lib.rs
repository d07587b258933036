//! Experiment orchestration: a TOML run configuration, a manifest recording
//! how each number was produced, and the end-to-end attack pipeline behind
//! the `linksteal` binary.

pub mod config;
pub mod manifest;
pub mod pipeline;

use std::fmt;
use std::path::{Path, PathBuf};

pub use config::{BaselineConfig, DatasetEntry, MockConfig, MockKind, PipelineConfig, SyntheticSpec};
pub use manifest::{graph_digest, DatasetRecord, RunManifest, StageRecord, TargetRecord};
pub use pipeline::{load_entry, run_pipeline, MeanMaxRow, PipelineOutcome};

/// Pipeline stages, named like the CLI subcommand that runs each in
/// isolation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    LoadDataset,
    TrainTarget,
    ExtractPosteriors,
    SamplePairs,
    AttackSimilarity,
    AttackMlp,
    BuildPrompts,
    FinetuneExport,
    ServeMock,
    AttackLlm,
    Evaluate,
    CrossMatrix,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::LoadDataset => "load-dataset",
            Stage::TrainTarget => "train-target",
            Stage::ExtractPosteriors => "extract-posteriors",
            Stage::SamplePairs => "sample-pairs",
            Stage::AttackSimilarity => "attack-similarity",
            Stage::AttackMlp => "attack-mlp",
            Stage::BuildPrompts => "build-prompts",
            Stage::FinetuneExport => "finetune-export",
            Stage::ServeMock => "serve-mock",
            Stage::AttackLlm => "attack-llm",
            Stage::Evaluate => "evaluate",
            Stage::CrossMatrix => "cross-matrix",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("stage `{stage}` failed{}: {source:#}", where_(.seed, .dataset))]
    Stage { stage: Stage, seed: Option<u64>, dataset: Option<String>, source: anyhow::Error },
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.to_path_buf(), source }
    }

    /// The failing stage, if the error came from one.
    pub fn stage(&self) -> Option<Stage> {
        match self {
            HarnessError::Stage { stage, .. } => Some(*stage),
            _ => None,
        }
    }
}

fn where_(seed: &Option<u64>, dataset: &Option<String>) -> String {
    match (seed, dataset) {
        (Some(s), Some(d)) => format!(" (seed {s}, dataset {d})"),
        (Some(s), None) => format!(" (seed {s})"),
        (None, Some(d)) => format!(" (dataset {d})"),
        (None, None) => String::new(),
    }
}
