//! Target node classifiers (GCN, GraphSAGE-mean, GAT) with a hand-written
//! backward pass, deterministic training and posterior export.

mod checkpoint;
mod config;
mod gradcheck;
mod model;
mod posterior;
mod train;

use std::path::PathBuf;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::{Arch, ModelConfig, Optimizer};
pub use gradcheck::{grad_check, GradCheckReport, DEFAULT_FD_STEP};
pub use model::{extract_posteriors, forward, forward_with_trace, Layer, LayerActivation, TargetModel};
pub use posterior::PosteriorMatrix;
pub use train::{accuracy_on, train_target, EpochLog};

#[derive(Debug, thiserror::Error)]
pub enum GnnError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch at layer {layer}: {what} expected {expected}, found {found}")]
    ShapeMismatch { layer: usize, what: &'static str, expected: usize, found: usize },
    #[error("training split has no train nodes")]
    EmptyTrainSet,
    #[error("node id {node} out of range for {node_count} nodes")]
    InvalidNode { node: usize, node_count: usize },
    #[error("training diverged at epoch {epoch} (learning rate {learning_rate}): loss {loss}")]
    Diverged { epoch: usize, learning_rate: f64, loss: f64 },
    #[error("invalid posterior matrix: {0}")]
    Posterior(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
