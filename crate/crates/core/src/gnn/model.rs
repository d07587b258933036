use ndarray::{s, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::config::{Arch, ModelConfig};
use super::posterior::PosteriorMatrix;
use super::train::EpochLog;
use super::GnnError;
use crate::graph::{normalized_adjacency, AdjacencyNorm, Graph};
use crate::scalar::Scalar;
use crate::sparse::CsrMatrix;

/// One message-passing layer.
///
/// Parameter layout in `params`:
/// - GCN: `[W, b?]`
/// - SAGE: `[W_self, W_neigh, b?]`
/// - GAT: `[W_h, a_self_h, a_neigh_h]` per head, then `b?`
///
/// Weights are `in_dim × out_dim`, attention vectors and biases are row
/// vectors (`1 × width`).
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    pub in_dim: usize,
    /// Output width of a single head.
    pub out_dim: usize,
    pub heads: usize,
    /// Concatenate heads (hidden GAT layers) or average them (output).
    pub concat: bool,
    pub params: Vec<Array2<T>>,
}

impl<T: Scalar> Layer<T> {
    pub fn width(&self) -> usize {
        if self.concat {
            self.heads * self.out_dim
        } else {
            self.out_dim
        }
    }

    fn has_bias(&self, arch: Arch) -> bool {
        let base = match arch {
            Arch::Gcn => 1,
            Arch::Sage => 2,
            Arch::Gat => 3 * self.heads,
        };
        self.params.len() > base
    }
}

/// Output of one layer for every node. The last entry of a trace holds the
/// posterior probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerActivation<T> {
    pub layer_index: usize,
    pub values: Array2<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetModel<T> {
    pub config: ModelConfig,
    pub input_dim: usize,
    pub num_classes: usize,
    pub layers: Vec<Layer<T>>,
    pub training_log: Vec<EpochLog>,
}

impl<T: Scalar> TargetModel<T> {
    /// Glorot-uniform weights and zero biases, drawn from `rng`.
    pub fn init(
        config: &ModelConfig,
        input_dim: usize,
        num_classes: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, GnnError> {
        config.validate()?;
        let mut layers = Vec::with_capacity(config.num_layers);
        let mut in_dim = input_dim;
        for l in 0..config.num_layers {
            let last = l + 1 == config.num_layers;
            let out_dim = if last { num_classes } else { config.hidden_dim };
            let (heads, concat) = match (config.arch, last) {
                (Arch::Gat, false) => (config.gat_heads, true),
                (Arch::Gat, true) => (config.gat_output_heads, false),
                _ => (1, false),
            };
            let mut params = Vec::new();
            match config.arch {
                Arch::Gcn => params.push(glorot(in_dim, out_dim, rng)),
                Arch::Sage => {
                    params.push(glorot(in_dim, out_dim, rng));
                    params.push(glorot(in_dim, out_dim, rng));
                }
                Arch::Gat => {
                    for _ in 0..heads {
                        params.push(glorot(in_dim, out_dim, rng));
                        params.push(glorot(1, out_dim, rng));
                        params.push(glorot(1, out_dim, rng));
                    }
                }
            }
            let layer_width = if concat { heads * out_dim } else { out_dim };
            if config.bias {
                params.push(Array2::zeros((1, layer_width)));
            }
            layers.push(Layer { in_dim, out_dim, heads, concat, params });
            in_dim = layer_width;
        }
        Ok(TargetModel { config: config.clone(), input_dim, num_classes, layers, training_log: Vec::new() })
    }

    pub fn param_count(&self) -> usize {
        self.params().map(|p| p.len()).sum()
    }

    pub fn params(&self) -> impl Iterator<Item = &Array2<T>> {
        self.layers.iter().flat_map(|l| l.params.iter())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Array2<T>> {
        self.layers.iter_mut().flat_map(|l| l.params.iter_mut())
    }

    pub(crate) fn check_shapes(&self, graph: &Graph<T>) -> Result<(), GnnError> {
        if graph.feature_dim() != self.input_dim {
            return Err(GnnError::ShapeMismatch {
                layer: 0,
                what: "input feature width",
                expected: self.input_dim,
                found: graph.feature_dim(),
            });
        }
        if graph.num_categories() != self.num_classes {
            let last = self.layers.len().saturating_sub(1);
            return Err(GnnError::ShapeMismatch {
                layer: last,
                what: "output classes",
                expected: self.num_classes,
                found: graph.num_categories(),
            });
        }
        let mut width = self.input_dim;
        for (l, layer) in self.layers.iter().enumerate() {
            if layer.in_dim != width {
                return Err(GnnError::ShapeMismatch { layer: l, what: "layer input width", expected: width, found: layer.in_dim });
            }
            for p in &layer.params {
                let ok_rows = p.nrows() == layer.in_dim || p.nrows() == 1;
                if !ok_rows || (p.ncols() != layer.out_dim && p.ncols() != layer.width()) {
                    return Err(GnnError::ShapeMismatch {
                        layer: l,
                        what: "parameter columns",
                        expected: layer.out_dim,
                        found: p.ncols(),
                    });
                }
            }
            width = layer.width();
        }
        if width != self.num_classes {
            return Err(GnnError::ShapeMismatch {
                layer: self.layers.len() - 1,
                what: "final layer width",
                expected: self.num_classes,
                found: width,
            });
        }
        Ok(())
    }
}

fn glorot<T: Scalar>(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<T> {
    let limit = (6.0 / (rows + cols).max(1) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || T::lit(rng.random_range(-limit..=limit)))
}

/// Graph operators needed by one architecture, built once per graph.
pub(crate) enum Operators<T> {
    Gcn { a: CsrMatrix<T>, a_t: CsrMatrix<T> },
    Sage { m: CsrMatrix<T>, m_t: CsrMatrix<T> },
    /// Only the sparsity pattern of `A + I` is used.
    Gat { pattern: CsrMatrix<T> },
}

impl<T: Scalar> Operators<T> {
    pub(crate) fn build(arch: Arch, graph: &Graph<T>) -> Self {
        match arch {
            Arch::Gcn => {
                let a = normalized_adjacency(graph, AdjacencyNorm::GcnSym);
                let a_t = a.transpose();
                Operators::Gcn { a, a_t }
            }
            Arch::Sage => {
                let m = normalized_adjacency(graph, AdjacencyNorm::MeanNeighbor);
                let m_t = m.transpose();
                Operators::Sage { m, m_t }
            }
            Arch::Gat => Operators::Gat { pattern: normalized_adjacency(graph, AdjacencyNorm::None) },
        }
    }
}

pub(crate) struct HeadCache<T> {
    p: Array2<T>,
    /// Pre-LeakyReLU scores, one per stored entry of the pattern.
    raw: Vec<T>,
    alpha: Vec<T>,
}

pub(crate) enum Extra<T> {
    None,
    Sage { agg: Array2<T> },
    Gat { heads: Vec<HeadCache<T>> },
}

pub(crate) struct LayerCache<T> {
    input: Array2<T>,
    mask: Option<Array2<T>>,
    pre: Array2<T>,
    extra: Extra<T>,
}

pub(crate) struct ForwardPass<T> {
    pub(crate) caches: Vec<LayerCache<T>>,
    pub(crate) probs: Array2<T>,
}

fn leaky<T: Scalar>(x: T, slope: T) -> T {
    if x > T::zero() {
        x
    } else {
        slope * x
    }
}

fn activate<T: Scalar>(arch: Arch, x: &Array2<T>) -> Array2<T> {
    match arch {
        Arch::Gat => x.mapv(|v| if v > T::zero() { v } else { v.exp_m1() }),
        _ => x.mapv(|v| v.max(T::zero())),
    }
}

fn activate_grad<T: Scalar>(arch: Arch, pre: &Array2<T>, upstream: &mut Array2<T>) {
    match arch {
        Arch::Gat => upstream.zip_mut_with(pre, |g, &z| {
            if z <= T::zero() {
                *g = *g * z.exp();
            }
        }),
        _ => upstream.zip_mut_with(pre, |g, &z| {
            if z <= T::zero() {
                *g = T::zero();
            }
        }),
    }
}

pub(crate) fn softmax_rows<T: Scalar>(logits: &Array2<T>) -> Array2<T> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum: T = row.iter().copied().sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

fn layer_forward<T: Scalar>(
    arch: Arch,
    slope: T,
    layer: &Layer<T>,
    ops: &Operators<T>,
    input: &Array2<T>,
) -> (Array2<T>, Extra<T>) {
    let (mut pre, extra) = match (arch, ops) {
        (Arch::Gcn, Operators::Gcn { a, .. }) => {
            let xw = input.dot(&layer.params[0]);
            (a.matmul(xw.view()), Extra::None)
        }
        (Arch::Sage, Operators::Sage { m, .. }) => {
            let agg = m.matmul(input.view());
            let pre = input.dot(&layer.params[0]) + agg.dot(&layer.params[1]);
            (pre, Extra::Sage { agg })
        }
        (Arch::Gat, Operators::Gat { pattern }) => gat_forward(slope, layer, pattern, input),
        _ => unreachable!("operators built for a different architecture"),
    };
    if layer.has_bias(arch) {
        pre += &layer.params[layer.params.len() - 1].row(0);
    }
    (pre, extra)
}

fn gat_forward<T: Scalar>(
    slope: T,
    layer: &Layer<T>,
    pattern: &CsrMatrix<T>,
    input: &Array2<T>,
) -> (Array2<T>, Extra<T>) {
    let n = input.nrows();
    let f = layer.out_dim;
    let mut out = Array2::<T>::zeros((n, layer.width()));
    let mut caches = Vec::with_capacity(layer.heads);
    let head_scale = if layer.concat { T::one() } else { T::from_usize_lossy(layer.heads).recip() };
    for h in 0..layer.heads {
        let w = &layer.params[3 * h];
        let a_self = layer.params[3 * h + 1].row(0);
        let a_neigh = layer.params[3 * h + 2].row(0);
        let p = input.dot(w);
        let s_self = p.dot(&a_self);
        let s_neigh = p.dot(&a_neigh);
        let nnz = pattern.nnz();
        let mut raw = vec![T::zero(); nnz];
        let mut alpha = vec![T::zero(); nnz];
        let cols = if layer.concat { h * f..(h + 1) * f } else { 0..f };
        let idx = pattern.indices();
        for i in 0..n {
            let span = pattern.row_span(i);
            let mut max = T::neg_infinity();
            for pos in span.clone() {
                raw[pos] = s_self[i] + s_neigh[idx[pos]];
                max = max.max(leaky(raw[pos], slope));
            }
            let mut sum = T::zero();
            for pos in span.clone() {
                alpha[pos] = (leaky(raw[pos], slope) - max).exp();
                sum = sum + alpha[pos];
            }
            let mut row = out.slice_mut(s![i, cols.clone()]);
            for pos in span {
                alpha[pos] = alpha[pos] / sum;
                row.scaled_add(alpha[pos] * head_scale, &p.row(idx[pos]));
            }
        }
        caches.push(HeadCache { p, raw, alpha });
    }
    (out, Extra::Gat { heads: caches })
}

/// Runs every layer. With `dropout_rng` set, inverted dropout is applied to
/// each layer input; without it the pass is deterministic inference.
pub(crate) fn run_forward<T: Scalar>(
    model: &TargetModel<T>,
    ops: &Operators<T>,
    features: &Array2<T>,
    mut dropout_rng: Option<&mut ChaCha8Rng>,
) -> ForwardPass<T> {
    let arch = model.config.arch;
    let slope = T::lit(model.config.gat_leaky_slope);
    let p_drop = model.config.dropout;
    let mut caches = Vec::with_capacity(model.layers.len());
    let mut h = features.clone();
    for (l, layer) in model.layers.iter().enumerate() {
        let mask = match dropout_rng.as_deref_mut() {
            Some(rng) if p_drop > 0.0 => {
                let keep = T::lit(1.0 / (1.0 - p_drop));
                let mask = Array2::from_shape_simple_fn(h.raw_dim(), || {
                    if rng.random::<f64>() < p_drop {
                        T::zero()
                    } else {
                        keep
                    }
                });
                h *= &mask;
                Some(mask)
            }
            _ => None,
        };
        let (pre, extra) = layer_forward(arch, slope, layer, ops, &h);
        let next = if l + 1 == model.layers.len() { softmax_rows(&pre) } else { activate(arch, &pre) };
        caches.push(LayerCache { input: h, mask, pre, extra });
        h = next;
    }
    ForwardPass { caches, probs: h }
}

/// Gradients of the loss with respect to every parameter, in
/// [`TargetModel::params`] order. `d_logits` is the gradient at the final
/// pre-softmax layer.
pub(crate) fn run_backward<T: Scalar>(
    model: &TargetModel<T>,
    ops: &Operators<T>,
    pass: &ForwardPass<T>,
    d_logits: Array2<T>,
) -> Vec<Array2<T>> {
    let arch = model.config.arch;
    let slope = T::lit(model.config.gat_leaky_slope);
    let mut grads_rev: Vec<Vec<Array2<T>>> = Vec::with_capacity(model.layers.len());
    let mut d_pre = d_logits;
    for l in (0..model.layers.len()).rev() {
        let layer = &model.layers[l];
        let cache = &pass.caches[l];
        let need_input = l > 0;
        let (grads, d_input) = layer_backward(arch, slope, layer, ops, cache, &d_pre, need_input);
        grads_rev.push(grads);
        if let Some(mut d_in) = d_input {
            if let Some(mask) = &cache.mask {
                d_in *= mask;
            }
            activate_grad(arch, &pass.caches[l - 1].pre, &mut d_in);
            d_pre = d_in;
        }
    }
    grads_rev.into_iter().rev().flatten().collect()
}

fn layer_backward<T: Scalar>(
    arch: Arch,
    slope: T,
    layer: &Layer<T>,
    ops: &Operators<T>,
    cache: &LayerCache<T>,
    d_pre: &Array2<T>,
    need_input: bool,
) -> (Vec<Array2<T>>, Option<Array2<T>>) {
    let x = &cache.input;
    let (mut grads, d_input) = match (ops, &cache.extra) {
        (Operators::Gcn { a_t, .. }, _) => {
            let w = &layer.params[0];
            let g = a_t.matmul(d_pre.view());
            let dw = x.t().dot(&g);
            (vec![dw], need_input.then(|| g.dot(&w.t())))
        }
        (Operators::Sage { m_t, .. }, Extra::Sage { agg }) => {
            let (ws, wn) = (&layer.params[0], &layer.params[1]);
            let dws = x.t().dot(d_pre);
            let dwn = agg.t().dot(d_pre);
            let d_input = need_input.then(|| d_pre.dot(&ws.t()) + m_t.matmul(d_pre.dot(&wn.t()).view()));
            (vec![dws, dwn], d_input)
        }
        (Operators::Gat { pattern }, Extra::Gat { heads }) => gat_backward(slope, layer, pattern, x, heads, d_pre, need_input),
        _ => unreachable!("cache built for a different architecture"),
    };
    if layer.has_bias(arch) {
        grads.push(d_pre.sum_axis(Axis(0)).insert_axis(Axis(0)));
    }
    (grads, d_input)
}

fn gat_backward<T: Scalar>(
    slope: T,
    layer: &Layer<T>,
    pattern: &CsrMatrix<T>,
    x: &Array2<T>,
    heads: &[HeadCache<T>],
    d_pre: &Array2<T>,
    need_input: bool,
) -> (Vec<Array2<T>>, Option<Array2<T>>) {
    let n = x.nrows();
    let f = layer.out_dim;
    let idx = pattern.indices();
    let mut grads = Vec::with_capacity(3 * layer.heads);
    let mut d_input = need_input.then(|| Array2::<T>::zeros(x.raw_dim()));
    for (h, hc) in heads.iter().enumerate() {
        let w = &layer.params[3 * h];
        let a_self = layer.params[3 * h + 1].row(0);
        let a_neigh = layer.params[3 * h + 2].row(0);
        let d_out: Array2<T> = if layer.concat {
            d_pre.slice(s![.., h * f..(h + 1) * f]).to_owned()
        } else {
            d_pre / T::from_usize_lossy(layer.heads)
        };
        let mut dp = Array2::<T>::zeros((n, f));
        let mut ds = ndarray::Array1::<T>::zeros(n);
        let mut dt = ndarray::Array1::<T>::zeros(n);
        let mut d_alpha = Vec::new();
        for i in 0..n {
            let span = pattern.row_span(i);
            let go = d_out.row(i);
            d_alpha.clear();
            let mut weighted = T::zero();
            for pos in span.clone() {
                let j = idx[pos];
                let da = go.dot(&hc.p.row(j));
                d_alpha.push(da);
                weighted = weighted + hc.alpha[pos] * da;
                dp.row_mut(j).scaled_add(hc.alpha[pos], &go);
            }
            for (k, pos) in span.enumerate() {
                let de = hc.alpha[pos] * (d_alpha[k] - weighted);
                let d_raw = if hc.raw[pos] > T::zero() { de } else { de * slope };
                ds[i] = ds[i] + d_raw;
                dt[idx[pos]] = dt[idx[pos]] + d_raw;
            }
        }
        let d_a_self = ds.dot(&hc.p).insert_axis(Axis(0));
        let d_a_neigh = dt.dot(&hc.p).insert_axis(Axis(0));
        let ds2 = ds.insert_axis(Axis(1));
        let dt2 = dt.insert_axis(Axis(1));
        dp += &(&ds2 * &a_self.insert_axis(Axis(0)));
        dp += &(&dt2 * &a_neigh.insert_axis(Axis(0)));
        grads.push(x.t().dot(&dp));
        grads.push(d_a_self);
        grads.push(d_a_neigh);
        if let Some(d_in) = d_input.as_mut() {
            *d_in += &dp.dot(&w.t());
        }
    }
    (grads, d_input)
}

/// Inference-mode posteriors for every node of `graph`.
pub fn forward<T: Scalar>(model: &TargetModel<T>, graph: &Graph<T>) -> Result<PosteriorMatrix<T>, GnnError> {
    forward_with_trace(model, graph).map(|(p, _)| p)
}

/// Like [`forward`], also returning every layer's output (post-activation;
/// the last entry is the posterior itself).
pub fn forward_with_trace<T: Scalar>(
    model: &TargetModel<T>,
    graph: &Graph<T>,
) -> Result<(PosteriorMatrix<T>, Vec<LayerActivation<T>>), GnnError> {
    model.check_shapes(graph)?;
    let ops = Operators::build(model.config.arch, graph);
    let pass = run_forward(model, &ops, graph.features(), None);
    let arch = model.config.arch;
    let last = pass.caches.len() - 1;
    let mut trace: Vec<LayerActivation<T>> = pass.caches[..last]
        .iter()
        .enumerate()
        .map(|(l, c)| LayerActivation { layer_index: l, values: activate(arch, &c.pre) })
        .collect();
    trace.push(LayerActivation { layer_index: last, values: pass.probs.clone() });
    let source = format!("{}-{}L-seed{}", arch, model.layers.len(), model.config.seed);
    let posteriors = PosteriorMatrix::new(pass.probs, source, graph.name())?;
    Ok((posteriors, trace))
}

/// Posterior rows for `node_ids`, in the order given (repeats allowed).
pub fn extract_posteriors<T: Scalar>(
    model: &TargetModel<T>,
    graph: &Graph<T>,
    node_ids: &[usize],
) -> Result<Array2<T>, GnnError> {
    let n = graph.node_count();
    if let Some(&bad) = node_ids.iter().find(|&&v| v >= n) {
        return Err(GnnError::InvalidNode { node: bad, node_count: n });
    }
    let all = forward(model, graph)?;
    Ok(all.select(node_ids))
}

pub(crate) fn cross_entropy_grad<T: Scalar>(probs: ArrayView2<'_, T>, labels: &[usize], train: &[usize]) -> (f64, Array2<T>) {
    let mut grad = Array2::<T>::zeros(probs.raw_dim());
    let inv = T::from_usize_lossy(train.len()).recip();
    let mut loss = 0.0;
    for &v in train {
        let y = labels[v];
        loss -= probs[[v, y]].as_f64().ln();
        let mut row = grad.row_mut(v);
        row.assign(&probs.row(v));
        row[y] = row[y] - T::one();
        row.mapv_inplace(|g| g * inv);
    }
    (loss / train.len() as f64, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;

    fn path3() -> Graph<f64> {
        let x = array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        Graph::from_parts("p3", x, vec![0, 1, 0], 2, vec![(0, 1), (1, 2)])
    }

    fn model_for(arch: Arch, g: &Graph<f64>, layers: usize) -> TargetModel<f64> {
        let cfg = ModelConfig { arch, num_layers: layers, hidden_dim: 4, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        TargetModel::init(&cfg, g.feature_dim(), g.num_categories(), &mut rng).unwrap()
    }

    #[test]
    fn rows_are_distributions() {
        let g = path3();
        for arch in [Arch::Gcn, Arch::Sage, Arch::Gat] {
            let p = forward(&model_for(arch, &g, 2), &g).unwrap();
            for row in p.rows().rows() {
                assert!((row.sum() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_weights_give_uniform_rows() {
        let x = array![[0.3, -1.2]];
        let g = Graph::from_parts("one", x, vec![0], 3, vec![]);
        let mut m = model_for(Arch::Gcn, &g, 1);
        m.params_mut().for_each(|p| p.fill(0.0));
        let p = forward(&m, &g).unwrap();
        for &v in p.rows().iter() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn shape_mismatch_names_layer() {
        let g = path3();
        let mut m = model_for(Arch::Gcn, &g, 2);
        m.input_dim = 5;
        let err = forward(&m, &g).unwrap_err();
        assert!(matches!(err, GnnError::ShapeMismatch { layer: 0, .. }), "{err}");
    }

    #[test]
    fn extraction_order_and_repeats() {
        let g = path3();
        let m = model_for(Arch::Sage, &g, 2);
        let all = forward(&m, &g).unwrap();
        let sel = extract_posteriors(&m, &g, &[2, 0, 2]).unwrap();
        assert_eq!(sel.row(0), all.rows().row(2));
        assert_eq!(sel.row(1), all.rows().row(0));
        assert_eq!(sel.row(0), sel.row(2));
        assert!(matches!(extract_posteriors(&m, &g, &[3]), Err(GnnError::InvalidNode { node: 3, .. })));
    }

    #[test]
    fn trace_has_one_entry_per_layer() {
        let g = path3();
        let m = model_for(Arch::Gat, &g, 3);
        let (_, trace) = forward_with_trace(&m, &g).unwrap();
        assert_eq!(trace.len(), 3);
        assert_eq!(trace[0].values.ncols(), 2 * 4);
        assert!(trace.iter().all(|t| t.values.iter().all(|v| v.is_finite())));
    }
}
