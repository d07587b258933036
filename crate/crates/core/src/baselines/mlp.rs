use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{build_pair_feature, pair_feature_width, FeatureMode, SourceRegistry};
use super::AttackError;
use crate::eval::{compute_metrics, AttackId, AttackReport, Prediction, UnparseablePolicy};
use crate::optim::Adam;
use crate::pairs::{LinkLabel, PairSet};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpConfig {
    pub hidden_dims: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig { hidden_dims: vec![64, 32], epochs: 100, learning_rate: 1e-3, batch_size: 64, seed: 0 }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<(), AttackError> {
        if self.hidden_dims.is_empty() || self.hidden_dims.contains(&0) {
            return Err(AttackError::Config("hidden_dims must be non-empty and positive".into()));
        }
        if !(self.learning_rate > 0.0) || self.batch_size == 0 {
            return Err(AttackError::Config("learning_rate and batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// ReLU network with one logit output, trained with binary cross-entropy.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMlp<T> {
    /// `[W_0, b_0, W_1, b_1, ...]`; biases are `1 × width`.
    params: Vec<Array2<T>>,
}

impl<T: Scalar> BinaryMlp<T> {
    pub fn new(input_dim: usize, hidden: &[usize], rng: &mut ChaCha8Rng) -> Self {
        let mut params = Vec::new();
        let mut fan_in = input_dim;
        for &width in hidden.iter().chain(std::iter::once(&1)) {
            let limit = (6.0 / (fan_in + width) as f64).sqrt();
            params.push(Array2::from_shape_simple_fn((fan_in, width), || T::lit(rng.random_range(-limit..=limit))));
            params.push(Array2::zeros((1, width)));
            fan_in = width;
        }
        BinaryMlp { params }
    }

    fn depth(&self) -> usize {
        self.params.len() / 2
    }

    /// Returns the pre-activation of every layer; the last is the logit column.
    fn forward(&self, x: &Array2<T>) -> Vec<Array2<T>> {
        let mut pres = Vec::with_capacity(self.depth());
        let mut h = x.clone();
        for l in 0..self.depth() {
            let z = h.dot(&self.params[2 * l]) + &self.params[2 * l + 1].row(0);
            if l + 1 < self.depth() {
                h = z.mapv(|v| v.max(T::zero()));
            }
            pres.push(z);
        }
        pres
    }

    pub fn logits(&self, x: &Array2<T>) -> Vec<T> {
        self.forward(x).pop().map(|z| z.column(0).to_vec()).unwrap_or_default()
    }

    /// One minibatch step; returns the mean BCE loss.
    fn step(&mut self, x: &Array2<T>, y: &[T], adam: &mut Adam<T>, lr: f64) -> f64 {
        let (loss, grads) = self.gradients(x, y);
        adam.step(self.params.iter_mut(), &grads, lr);
        loss
    }

    /// Mean BCE loss and its gradient for every parameter tensor.
    fn gradients(&self, x: &Array2<T>, y: &[T]) -> (f64, Vec<Array2<T>>) {
        let pres = self.forward(x);
        let b = x.nrows();
        let inv = T::from_usize_lossy(b).recip();
        let logits = pres.last().expect("at least one layer");
        let mut loss = 0.0;
        let mut d = Array2::<T>::zeros((b, 1));
        for i in 0..b {
            let z = logits[[i, 0]];
            let p = sigmoid(z);
            // log(1 + e^-|z|) + max(z, 0) − y z
            let zf = z.as_f64();
            loss += (-zf.abs()).exp().ln_1p() + zf.max(0.0) - y[i].as_f64() * zf;
            d[[i, 0]] = (p - y[i]) * inv;
        }
        let mut grads = vec![Array2::<T>::zeros((0, 0)); self.params.len()];
        for l in (0..self.depth()).rev() {
            let input = if l == 0 { x.clone() } else { pres[l - 1].mapv(|v| v.max(T::zero())) };
            grads[2 * l] = input.t().dot(&d);
            grads[2 * l + 1] = d.sum_axis(Axis(0)).insert_axis(Axis(0));
            if l > 0 {
                let mut up = d.dot(&self.params[2 * l].t());
                up.zip_mut_with(&pres[l - 1], |g, &z| {
                    if z <= T::zero() {
                        *g = T::zero();
                    }
                });
                d = up;
            }
        }
        (loss / b as f64, grads)
    }
}

fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpOutcome {
    pub report: AttackReport,
    pub predictions: Vec<Prediction>,
    pub train_accuracy: f64,
    pub epoch_losses: Vec<f64>,
}

/// Checks every dataset touched by `sets` is registered and that all share
/// one pair-feature width; returns it.
pub fn common_feature_width<T: Scalar>(
    sets: &[&PairSet],
    mode: FeatureMode,
    sources: &SourceRegistry<'_, T>,
) -> Result<usize, AttackError> {
    let mut first: Option<(String, usize, usize, usize)> = None;
    for set in sets {
        for name in set.datasets() {
            let src = sources.get(name).ok_or_else(|| AttackError::MissingSource(name.to_string()))?;
            let c = src.posteriors.width();
            let f = src.graph.feature_dim();
            let w = pair_feature_width(mode, src.graph, src.posteriors);
            match &first {
                None => first = Some((name.to_string(), c, f, w)),
                Some((a, ca, fa, _)) if a != name => {
                    if mode.uses_posteriors() && *ca != c {
                        return Err(AttackError::IncompatibleDimensions {
                            kind: "posterior",
                            first: a.clone(),
                            first_width: *ca,
                            second: name.to_string(),
                            second_width: c,
                        });
                    }
                    if mode.uses_features() && *fa != f {
                        return Err(AttackError::IncompatibleDimensions {
                            kind: "feature",
                            first: a.clone(),
                            first_width: *fa,
                            second: name.to_string(),
                            second_width: f,
                        });
                    }
                }
                _ => {}
            }
        }
    }
    first.map(|f| f.3).ok_or_else(|| AttackError::Contract("no pairs".into()))
}

fn design_matrix<T: Scalar>(
    set: &PairSet,
    mode: FeatureMode,
    width: usize,
    sources: &SourceRegistry<'_, T>,
) -> Result<(Array2<T>, Vec<LinkLabel>), AttackError> {
    let mut data = Vec::with_capacity(set.len() * width);
    let mut gold = Vec::with_capacity(set.len());
    for p in &set.pairs {
        let src = sources.get(&p.dataset).ok_or_else(|| AttackError::MissingSource(p.dataset.clone()))?;
        data.extend(build_pair_feature(p, mode, src.graph, src.posteriors)?);
        gold.push(match p.positive() {
            Some(true) => LinkLabel::Link,
            Some(false) => LinkLabel::Unlink,
            None => return Err(AttackError::Contract(format!("pair ({}, {}) has no label", p.u, p.v))),
        });
    }
    let x = Array2::from_shape_vec((set.len(), width), data).map_err(|e| AttackError::Contract(e.to_string()))?;
    Ok((x, gold))
}

/// Supervised attack: trains a binary MLP on `train` pair features and
/// scores `test`. All pairs must share one feature width.
pub fn mlp_attack<T: Scalar>(
    train: &PairSet,
    test: &PairSet,
    mode: FeatureMode,
    config: &MlpConfig,
    sources: &SourceRegistry<'_, T>,
) -> Result<MlpOutcome, AttackError> {
    config.validate()?;
    if train.is_empty() {
        return Err(AttackError::Contract("empty training pair set".into()));
    }
    let width = common_feature_width(&[train, test], mode, sources)?;
    let (x, gold) = design_matrix(train, mode, width, sources)?;
    let y: Vec<T> = gold.iter().map(|&g| if g == LinkLabel::Link { T::one() } else { T::zero() }).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut net = BinaryMlp::<T>::new(width, &config.hidden_dims, &mut rng);
    let mut adam = Adam::new(net.params.iter());
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let xb = x.select(Axis(0), chunk);
            let yb: Vec<T> = chunk.iter().map(|&i| y[i]).collect();
            total += net.step(&xb, &yb, &mut adam, config.learning_rate) * chunk.len() as f64;
        }
        let mean = total / x.nrows() as f64;
        if !mean.is_finite() {
            return Err(AttackError::Diverged);
        }
        epoch_losses.push(mean);
    }

    let train_pred: Vec<Prediction> = net.logits(&x).into_iter().map(|z| Prediction::from(z >= T::zero())).collect();
    let train_accuracy = compute_metrics(&train_pred, &gold, UnparseablePolicy::default())?.accuracy;

    let (xt, gold_t) = design_matrix(test, mode, width, sources)?;
    let predictions: Vec<Prediction> = if xt.nrows() == 0 {
        Vec::new()
    } else {
        net.logits(&xt).into_iter().map(|z| Prediction::from(z >= T::zero())).collect()
    };
    let report = if predictions.is_empty() {
        AttackReport::default()
    } else {
        compute_metrics(&predictions, &gold_t, UnparseablePolicy::default())?
    };
    let datasets = test.datasets().join("+");
    let report = report.with_id(AttackId::new(format!("mlp-{}", mode.to_string().to_lowercase()), datasets, "white-box", config.seed));
    Ok(MlpOutcome { report, predictions, train_accuracy, epoch_losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn fits_separable_toy() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut net = BinaryMlp::<f64>::new(2, &[8, 4], &mut rng);
        let mut adam = Adam::new(net.params.iter());
        let x = array![[0.0, 0.1], [0.2, 0.0], [1.0, 0.9], [0.8, 1.0]];
        let y = [0.0, 0.0, 1.0, 1.0];
        let first = net.step(&x, &y, &mut adam, 0.01);
        let mut last = first;
        for _ in 0..1000 {
            last = net.step(&x, &y, &mut adam, 0.01);
        }
        assert!(last < 0.05, "{first} -> {last}");
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut net = BinaryMlp::<f64>::new(3, &[4, 3], &mut rng);
        for b in [1, 3, 5] {
            net.params[b].mapv_inplace(|_| rng.random_range(-0.5..0.5));
        }
        let x = array![[0.2, -0.1, 0.5], [0.9, 0.3, -0.4], [-0.7, 0.8, 0.1]];
        let y = [1.0, 0.0, 1.0];
        let (_, grads) = net.gradients(&x, &y);
        let h = 1e-6;
        for t in 0..net.params.len() {
            for k in 0..net.params[t].len() {
                let orig = net.params[t].as_slice().unwrap()[k];
                net.params[t].as_slice_mut().unwrap()[k] = orig + h;
                let up = net.gradients(&x, &y).0;
                net.params[t].as_slice_mut().unwrap()[k] = orig - h;
                let down = net.gradients(&x, &y).0;
                net.params[t].as_slice_mut().unwrap()[k] = orig;
                let numeric = (up - down) / (2.0 * h);
                let analytic = *grads[t].iter().nth(k).unwrap();
                assert!((numeric - analytic).abs() < 1e-7, "tensor {t} entry {k}: {analytic} vs {numeric}");
            }
        }
    }

    #[test]
    fn config_rejects_empty_hidden() {
        let cfg = MlpConfig { hidden_dims: vec![], ..Default::default() };
        assert!(matches!(cfg.validate(), Err(AttackError::Config(_))));
    }
}
