use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::model::{cross_entropy_grad, run_forward, Operators, TargetModel};
use super::train::loss_and_grads;
use super::GnnError;
use crate::graph::Graph;

pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Below this magnitude both gradients count as zero and the absolute gap is
/// compared instead, so round-off on vanishing entries is not amplified.
const REL_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// `(parameter tensor index, flat element index)` of the worst entry.
    pub worst: Option<(usize, usize)>,
    pub entries_checked: usize,
}

impl GradCheckReport {
    pub fn within(&self, tolerance: f64) -> bool {
        self.max_relative_error < tolerance
    }
}

/// Compares the analytic gradient of the full training loss (cross-entropy
/// over every node plus L2) against central differences for every parameter.
/// Dropout is disabled; biases are randomized so activations sit away from
/// their kinks.
pub fn grad_check(config: &ModelConfig, graph: &Graph<f64>, step: f64) -> Result<GradCheckReport, GnnError> {
    if graph.node_count() > 10 {
        log::warn!("grad_check on {} nodes; intended for tiny graphs", graph.node_count());
    }
    let cfg = ModelConfig { dropout: 0.0, ..config.clone() };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = TargetModel::<f64>::init(&cfg, graph.feature_dim(), graph.num_categories(), &mut rng)?;
    model.check_shapes(graph)?;
    if cfg.bias {
        for layer in &mut model.layers {
            let width = layer.width();
            if let Some(b) = layer.params.last_mut().filter(|b| b.nrows() == 1 && b.ncols() == width) {
                b.mapv_inplace(|_| rng.random_range(-0.5..0.5));
            }
        }
    }
    let ops = Operators::build(cfg.arch, graph);
    let all: Vec<usize> = (0..graph.node_count()).collect();
    let (_, _, analytic, _) = loss_and_grads(&model, &ops, graph, &all, None);

    let loss = |m: &TargetModel<f64>| -> f64 {
        let pass = run_forward(m, &ops, graph.features(), None);
        let (ce, _) = cross_entropy_grad(pass.probs.view(), graph.labels(), &all);
        let reg: f64 = m.params().flat_map(|p| p.iter()).map(|v| v * v).sum();
        ce + 0.5 * cfg.weight_decay * reg
    };

    let mut report = GradCheckReport { max_relative_error: 0.0, worst: None, entries_checked: 0 };
    let n_tensors = analytic.len();
    for t in 0..n_tensors {
        for k in 0..analytic[t].len() {
            let original = param_slot(&mut model, t, k);
            set_param(&mut model, t, k, original + step);
            let up = loss(&model);
            set_param(&mut model, t, k, original - step);
            let down = loss(&model);
            set_param(&mut model, t, k, original);
            let numeric = (up - down) / (2.0 * step);
            let a = *analytic[t].iter().nth(k).expect("gradient entry");
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            if rel > report.max_relative_error {
                report.max_relative_error = rel;
                report.worst = Some((t, k));
            }
            report.entries_checked += 1;
        }
    }
    Ok(report)
}

fn param_slot(model: &mut TargetModel<f64>, t: usize, k: usize) -> f64 {
    model.params_mut().nth(t).and_then(|p| p.as_slice().map(|s| s[k])).expect("parameter index")
}

fn set_param(model: &mut TargetModel<f64>, t: usize, k: usize, value: f64) {
    let p = model.params_mut().nth(t).expect("parameter index");
    p.as_slice_mut().expect("contiguous parameter")[k] = value;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnn::Arch;
    use ndarray::Array2;

    fn four_nodes(dim: usize) -> Graph<f64> {
        let x = Array2::from_shape_fn((4, dim), |(i, j)| ((i * 7 + j * 3) % 5) as f64 / 5.0 - 0.3);
        Graph::from_parts("g4", x, vec![0, 1, 2, 1], 3, vec![(0, 1), (1, 2), (2, 3), (0, 3)])
    }

    #[test]
    fn gcn_hidden_five() {
        let cfg = ModelConfig { arch: Arch::Gcn, hidden_dim: 5, ..Default::default() };
        let r = grad_check(&cfg, &four_nodes(3), DEFAULT_FD_STEP).unwrap();
        assert!(r.within(1e-4), "{r:?}");
    }

    #[test]
    fn gat_two_heads() {
        let cfg = ModelConfig { arch: Arch::Gat, hidden_dim: 3, gat_heads: 2, ..Default::default() };
        let r = grad_check(&cfg, &four_nodes(3), DEFAULT_FD_STEP).unwrap();
        assert!(r.within(1e-4), "{r:?}");
    }

    #[test]
    fn sage_three_layers() {
        let cfg = ModelConfig { arch: Arch::Sage, num_layers: 3, hidden_dim: 4, ..Default::default() };
        let r = grad_check(&cfg, &four_nodes(3), DEFAULT_FD_STEP).unwrap();
        assert!(r.within(1e-4), "{r:?}");
    }

    #[test]
    fn zero_parameter_model_has_zero_error() {
        let g = Graph::from_parts("empty-features", Array2::<f64>::zeros((3, 0)), vec![0, 1, 0], 2, vec![(0, 1)]);
        let cfg = ModelConfig { num_layers: 1, bias: false, ..Default::default() };
        let r = grad_check(&cfg, &g, DEFAULT_FD_STEP).unwrap();
        assert_eq!(r.max_relative_error, 0.0);
        assert_eq!(r.entries_checked, 0);
    }
}
