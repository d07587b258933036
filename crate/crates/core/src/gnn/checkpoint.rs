use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::model::{Layer, TargetModel};
use super::train::EpochLog;
use super::GnnError;
use crate::scalar::Scalar;

#[derive(Serialize, Deserialize)]
struct LayerFile {
    in_dim: usize,
    out_dim: usize,
    heads: usize,
    concat: bool,
    /// Each tensor as `[rows, cols, row-major values...]`.
    params: Vec<TensorFile>,
}

#[derive(Serialize, Deserialize)]
struct TensorFile {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    config: ModelConfig,
    input_dim: usize,
    num_classes: usize,
    layers: Vec<LayerFile>,
    training_log: Vec<EpochLog>,
}

/// Writes config, parameters (as plain `f64` arrays) and training log.
pub fn save_checkpoint<T: Scalar>(model: &TargetModel<T>, path: &Path) -> Result<(), GnnError> {
    let file = CheckpointFile {
        config: model.config.clone(),
        input_dim: model.input_dim,
        num_classes: model.num_classes,
        layers: model
            .layers
            .iter()
            .map(|l| LayerFile {
                in_dim: l.in_dim,
                out_dim: l.out_dim,
                heads: l.heads,
                concat: l.concat,
                params: l
                    .params
                    .iter()
                    .map(|p| TensorFile { rows: p.nrows(), cols: p.ncols(), data: p.iter().map(|v| v.as_f64()).collect() })
                    .collect(),
            })
            .collect(),
        training_log: model.training_log.clone(),
    };
    let json = serde_json::to_string(&file).map_err(|e| GnnError::Checkpoint(e.to_string()))?;
    std::fs::write(path, json).map_err(|source| GnnError::Io { path: path.to_path_buf(), source })
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<TargetModel<T>, GnnError> {
    let text = std::fs::read_to_string(path).map_err(|source| GnnError::Io { path: path.to_path_buf(), source })?;
    let file: CheckpointFile = serde_json::from_str(&text).map_err(|e| GnnError::Checkpoint(e.to_string()))?;
    file.config.validate()?;
    let mut layers = Vec::with_capacity(file.layers.len());
    for (i, l) in file.layers.into_iter().enumerate() {
        let mut params = Vec::with_capacity(l.params.len());
        for t in l.params {
            let arr = Array2::from_shape_vec((t.rows, t.cols), t.data.into_iter().map(T::lit).collect())
                .map_err(|e| GnnError::Checkpoint(format!("layer {i}: {e}")))?;
            params.push(arr);
        }
        layers.push(Layer { in_dim: l.in_dim, out_dim: l.out_dim, heads: l.heads, concat: l.concat, params });
    }
    if layers.len() != file.config.num_layers {
        return Err(GnnError::Checkpoint(format!(
            "config declares {} layers, file holds {}",
            file.config.num_layers,
            layers.len()
        )));
    }
    Ok(TargetModel {
        config: file.config,
        input_dim: file.input_dim,
        num_classes: file.num_classes,
        layers,
        training_log: file.training_log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnn::{forward, train_target, Arch};
    use crate::graph::synthetic::PlantedPartition;
    use crate::graph::train_test_node_split;

    #[test]
    fn round_trip_preserves_forward() {
        let g = PlantedPartition::new("pp", 30, 3, 5).generate::<f64>();
        let split = train_test_node_split(&g, (0.6, 0.2, 0.2), 0).unwrap();
        let cfg = ModelConfig { arch: Arch::Gat, epochs: 5, ..Default::default() };
        let m = train_target(&g, &split, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_checkpoint(&m, &path).unwrap();
        let back: TargetModel<f64> = load_checkpoint(&path).unwrap();
        assert_eq!(back, m);
        assert_eq!(forward(&back, &g).unwrap(), forward(&m, &g).unwrap());
    }
}
