use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ModelConfig, Optimizer};
use super::model::{cross_entropy_grad, forward, run_backward, run_forward, Operators, TargetModel};
use super::GnnError;
use crate::graph::{Graph, SplitSpec};
use crate::optim::Adam;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean cross-entropy over train nodes (dropout active, no L2 term).
    pub loss: f64,
    pub train_accuracy: f64,
}

/// Total loss gradient: cross-entropy over `train` plus `0.5·wd·Σθ²`.
pub(crate) fn loss_and_grads<T: Scalar>(
    model: &TargetModel<T>,
    ops: &Operators<T>,
    graph: &Graph<T>,
    train: &[usize],
    rng: Option<&mut ChaCha8Rng>,
) -> (f64, f64, Vec<Array2<T>>, f64) {
    let pass = run_forward(model, ops, graph.features(), rng);
    let (ce, d_logits) = cross_entropy_grad(pass.probs.view(), graph.labels(), train);
    let mut grads = run_backward(model, ops, &pass, d_logits);
    let wd = model.config.weight_decay;
    let mut reg = 0.0;
    if wd > 0.0 {
        let wd_t = T::lit(wd);
        for (g, p) in grads.iter_mut().zip(model.params()) {
            reg += p.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>();
            g.scaled_add(wd_t, p);
        }
    }
    let correct = train.iter().filter(|&&v| argmax(pass.probs.row(v)) == graph.labels()[v]).count();
    (ce + 0.5 * wd * reg, ce, grads, correct as f64 / train.len() as f64)
}

pub(crate) fn argmax<T: Scalar>(row: ndarray::ArrayView1<'_, T>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Full-batch training on `split.train_node_ids`. Deterministic for a fixed
/// `config.seed`: the same generator drives initialization and dropout.
pub fn train_target<T: Scalar>(
    graph: &Graph<T>,
    split: &SplitSpec,
    config: &ModelConfig,
) -> Result<TargetModel<T>, GnnError> {
    config.validate()?;
    let train = &split.train_node_ids;
    if train.is_empty() {
        return Err(GnnError::EmptyTrainSet);
    }
    let n = graph.node_count();
    if let Some(&bad) = train.iter().find(|&&v| v >= n) {
        return Err(GnnError::InvalidNode { node: bad, node_count: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = TargetModel::init(config, graph.feature_dim(), graph.num_categories(), &mut rng)?;
    model.check_shapes(graph)?;
    let ops = Operators::build(config.arch, graph);
    let mut adam = Adam::new(model.params());
    let lr = config.learning_rate;

    for epoch in 0..config.epochs {
        let (total, ce, grads, acc) = loss_and_grads(&model, &ops, graph, train, Some(&mut rng));
        if !total.is_finite() {
            return Err(GnnError::Diverged { epoch, learning_rate: lr, loss: total });
        }
        match config.optimizer {
            Optimizer::Adam => adam.step(model.params_mut(), &grads, lr),
            Optimizer::Sgd => {
                let step = T::lit(-lr);
                for (p, g) in model.params_mut().zip(&grads) {
                    p.scaled_add(step, g);
                }
            }
        }
        if model.params().any(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(GnnError::Diverged { epoch, learning_rate: lr, loss: f64::NAN });
        }
        model.training_log.push(EpochLog { epoch, loss: ce, train_accuracy: acc });
        log::trace!("epoch {epoch}: loss {ce:.4} train acc {acc:.4}");
    }
    Ok(model)
}

/// Inference-mode accuracy on `nodes`.
pub fn accuracy_on<T: Scalar>(model: &TargetModel<T>, graph: &Graph<T>, nodes: &[usize]) -> Result<f64, GnnError> {
    if nodes.is_empty() {
        return Ok(0.0);
    }
    let p = forward(model, graph)?;
    let correct = nodes.iter().filter(|&&v| argmax(p.rows().row(v)) == graph.labels()[v]).count();
    Ok(correct as f64 / nodes.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnn::Arch;
    use ndarray::array;

    fn toy() -> (Graph<f64>, SplitSpec) {
        let x = array![[1.0, 0.0], [0.0, 1.0], [0.9, 0.1]];
        let g = Graph::from_parts("toy", x, vec![0, 1, 0], 2, vec![(0, 2)]);
        let split = SplitSpec { train_node_ids: vec![0, 1, 2], val_node_ids: vec![], test_node_ids: vec![], seed: 0 };
        (g, split)
    }

    #[test]
    fn loss_decreases_on_toy() {
        let (g, split) = toy();
        for arch in [Arch::Gcn, Arch::Sage, Arch::Gat] {
            let cfg = ModelConfig { arch, epochs: 50, dropout: 0.0, ..Default::default() };
            let m = train_target(&g, &split, &cfg).unwrap();
            let log = &m.training_log;
            assert!(log.last().unwrap().loss < log[0].loss, "{arch}");
            assert!(log.iter().all(|e| e.loss.is_finite()));
        }
    }

    #[test]
    fn sgd_also_descends() {
        let (g, split) = toy();
        let cfg = ModelConfig { optimizer: Optimizer::Sgd, learning_rate: 0.5, epochs: 50, dropout: 0.0, ..Default::default() };
        let m = train_target(&g, &split, &cfg).unwrap();
        assert!(m.training_log.last().unwrap().loss < m.training_log[0].loss);
    }

    #[test]
    fn same_seed_same_log_and_params() {
        let (g, split) = toy();
        let cfg = ModelConfig { epochs: 20, seed: 9, ..Default::default() };
        let a = train_target(&g, &split, &cfg).unwrap();
        let b = train_target(&g, &split, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_train_set_is_rejected() {
        let (g, mut split) = toy();
        split.train_node_ids.clear();
        assert!(matches!(train_target(&g, &split, &ModelConfig::default()), Err(GnnError::EmptyTrainSet)));
    }

    #[test]
    fn huge_learning_rate_reports_divergence() {
        let (g, split) = toy();
        let cfg = ModelConfig {
            optimizer: Optimizer::Sgd,
            learning_rate: 1e200,
            dropout: 0.0,
            weight_decay: 0.0,
            ..Default::default()
        };
        match train_target(&g, &split, &cfg) {
            Err(GnnError::Diverged { learning_rate, .. }) => assert_eq!(learning_rate, 1e200),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
