//! MC-dropout multilayer perceptron.
//!
//! The network is `input → [ReLU hidden layers] → dropout → linear → softmax`.
//! Dropout acts only on the last hidden representation, which is also what
//! [`TrainedModel::embed`] returns. Every fit starts from a fresh seeded
//! initialization and returns the checkpoint with the best validation metric.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::Metric;
use crate::posterior::PosteriorSamples;
use crate::seed::{self, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossWeighting {
    Uniform,
    Balanced,
}

impl LossWeighting {
    pub fn name(self) -> &'static str {
        match self {
            LossWeighting::Uniform => "uniform",
            LossWeighting::Balanced => "balanced",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingStrategy {
    /// Train the full network on the raw features.
    #[default]
    FromScratch,
    /// Train a one-hidden-layer head on a frozen representation that the
    /// caller has already substituted for the features.
    OracleRepresentation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Std-dev of Gaussian noise added to features on every presentation.
    pub feature_noise_sigma: f64,
    pub hidden_sizes: Vec<usize>,
    pub dropout_p: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Nesterov momentum.
    pub momentum: f64,
    pub loss_weighting: LossWeighting,
    pub upsample_target: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            learning_rate: 0.05,
            weight_decay: 5e-4,
            feature_noise_sigma: 0.0,
            hidden_sizes: vec![64, 32],
            dropout_p: 0.5,
            epochs: 30,
            batch_size: 64,
            momentum: 0.9,
            loss_weighting: LossWeighting::Uniform,
            upsample_target: 2000,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.weight_decay >= 0.0) {
            return bad(format!("weight_decay must be >= 0, got {}", self.weight_decay));
        }
        if !(self.feature_noise_sigma >= 0.0) {
            return bad(format!("feature noise must be >= 0, got {}", self.feature_noise_sigma));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return bad(format!("dropout_p must lie in [0, 1), got {}", self.dropout_p));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive".into());
        }
        if self.hidden_sizes.is_empty() || self.hidden_sizes.contains(&0) {
            return bad(format!("invalid hidden sizes {:?}", self.hidden_sizes));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        Ok(())
    }

    fn architecture(&self, strategy: TrainingStrategy) -> Vec<usize> {
        match strategy {
            TrainingStrategy::FromScratch => self.hidden_sizes.clone(),
            TrainingStrategy::OracleRepresentation => {
                vec![*self.hidden_sizes.last().expect("validated non-empty")]
            }
        }
    }
}

// =============================================================================
// Class weighting and upsampling
// =============================================================================

#[derive(Debug, Clone, PartialEq)]
pub struct ClassWeights {
    pub weights: Vec<f64>,
    /// Classes without any labeled sample (weight 0).
    pub absent: Vec<usize>,
}

/// Balanced weights `w_c = N / (C · n_c)`; absent classes get 0.
pub fn class_weights(labels: &[usize], class_count: usize) -> Result<ClassWeights> {
    if labels.is_empty() {
        return Err(Error::Empty("class weights need at least one label".into()));
    }
    let mut counts = vec![0usize; class_count];
    for (i, &l) in labels.iter().enumerate() {
        if l >= class_count {
            return Err(Error::LabelOutOfRange {
                index: i,
                label: l,
                class_count,
            });
        }
        counts[l] += 1;
    }
    let n = labels.len() as f64;
    let c = class_count as f64;
    let weights = counts
        .iter()
        .map(|&k| if k == 0 { 0.0 } else { n / (c * k as f64) })
        .collect();
    let absent = (0..class_count).filter(|&k| counts[k] == 0).collect();
    Ok(ClassWeights { weights, absent })
}

/// Repeats `labeled` `⌊U/n⌋` times and fills the remainder with a draw
/// without replacement, so the result has length `max(U, n)`.
pub fn upsample_indices<R: Rng + ?Sized>(labeled: &[usize], target: usize, rng: &mut R) -> Vec<usize> {
    let n = labeled.len();
    if n == 0 || n >= target {
        return labeled.to_vec();
    }
    let reps = target / n;
    let mut out = Vec::with_capacity(target);
    for _ in 0..reps {
        out.extend_from_slice(labeled);
    }
    let rest = target - reps * n;
    out.extend(
        rand::seq::index::sample(rng, n, rest)
            .into_iter()
            .map(|i| labeled[i]),
    );
    out
}

// =============================================================================
// Network
// =============================================================================

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DenseRepr", into = "DenseRepr")]
pub struct Dense {
    /// `inputs × outputs`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Checkpoint layout: shape plus row-major parameters.
#[derive(Serialize, Deserialize)]
struct DenseRepr {
    inputs: usize,
    outputs: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl From<Dense> for DenseRepr {
    fn from(d: Dense) -> Self {
        let (inputs, outputs) = d.weights.dim();
        DenseRepr {
            inputs,
            outputs,
            weights: d.weights.iter().copied().collect(),
            bias: d.bias.to_vec(),
        }
    }
}

impl TryFrom<DenseRepr> for Dense {
    type Error = Error;

    fn try_from(r: DenseRepr) -> Result<Self> {
        if r.bias.len() != r.outputs {
            return Err(Error::Shape(format!(
                "bias of length {} for {} outputs",
                r.bias.len(),
                r.outputs
            )));
        }
        let weights = Array2::from_shape_vec((r.inputs, r.outputs), r.weights)
            .map_err(|e| Error::Shape(e.to_string()))?;
        Ok(Dense {
            weights,
            bias: Array1::from(r.bias),
        })
    }
}

impl Dense {
    fn zeros_like(&self) -> Dense {
        Dense {
            weights: Array2::zeros(self.weights.raw_dim()),
            bias: Array1::zeros(self.bias.raw_dim()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    /// Hidden layers followed by the classifier layer.
    pub layers: Vec<Dense>,
}

struct Forward {
    /// Input followed by the post-ReLU output of every hidden layer.
    activations: Vec<Array2<f64>>,
    /// Scaled dropout mask applied to the last hidden output, if any.
    mask: Option<Array2<f64>>,
    probs: Array2<f64>,
}

fn relu_inplace(z: &mut Array2<f64>) {
    z.mapv_inplace(|v| v.max(0.0));
}

fn softmax_rows(logits: &mut Array2<f64>) {
    for mut row in logits.rows_mut() {
        let mx = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - mx).exp());
        let z = row.sum();
        row /= z;
    }
}

fn dropout_mask<R: Rng + ?Sized>(rows: usize, cols: usize, p: f64, rng: &mut R) -> Array2<f64> {
    let keep = 1.0 / (1.0 - p);
    Array2::from_shape_simple_fn((rows, cols), || if rng.random::<f64>() < p { 0.0 } else { keep })
}

impl Mlp {
    /// He-style uniform fan-in initialization; biases start at zero.
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: &[usize], classes: usize, rng: &mut R) -> Self {
        let mut dims = vec![input];
        dims.extend_from_slice(hidden);
        dims.push(classes);
        let layers = dims
            .windows(2)
            .map(|w| {
                let bound = (6.0 / w[0] as f64).sqrt();
                Dense {
                    weights: Array2::from_shape_simple_fn((w[0], w[1]), || rng.random_range(-bound..bound)),
                    bias: Array1::zeros(w[1]),
                }
            })
            .collect();
        Mlp { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    pub fn classes(&self) -> usize {
        self.layers.last().expect("non-empty").weights.ncols()
    }

    pub fn representation_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weights.nrows()
    }

    /// Last hidden activations, dropout off.
    pub fn hidden(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut a = x.clone();
        for layer in &self.layers[..self.layers.len() - 1] {
            let mut z = a.dot(&layer.weights) + &layer.bias;
            relu_inplace(&mut z);
            a = z;
        }
        a
    }

    fn head_probs(&self, h: &Array2<f64>) -> Array2<f64> {
        let out = self.layers.last().expect("non-empty");
        let mut logits = h.dot(&out.weights) + &out.bias;
        softmax_rows(&mut logits);
        logits
    }

    /// Deterministic class probabilities (dropout off).
    pub fn predict_proba(&self, x: &Array2<f64>) -> Array2<f64> {
        self.head_probs(&self.hidden(x))
    }

    fn forward(&self, x: Array2<f64>, mask: Option<Array2<f64>>) -> Forward {
        let mut activations = vec![x];
        for layer in &self.layers[..self.layers.len() - 1] {
            let mut z = activations.last().expect("input").dot(&layer.weights) + &layer.bias;
            relu_inplace(&mut z);
            activations.push(z);
        }
        let last = activations.last().expect("input");
        let probs = match &mask {
            Some(m) => self.head_probs(&(last * m)),
            None => self.head_probs(last),
        };
        Forward {
            activations,
            mask,
            probs,
        }
    }

    fn backward(&self, fwd: &Forward, labels: &[usize], sample_w: &[f64]) -> (f64, Vec<Dense>) {
        let total_w: f64 = sample_w.iter().sum();
        let mut loss = 0.0;
        let mut delta = fwd.probs.clone();
        for (i, (&y, &w)) in labels.iter().zip(sample_w).enumerate() {
            loss -= w * fwd.probs[[i, y]].max(1e-300).ln();
            delta[[i, y]] -= 1.0;
            let scale = if total_w > 0.0 { w / total_w } else { 0.0 };
            delta.row_mut(i).mapv_inplace(|v| v * scale);
        }
        if total_w > 0.0 {
            loss /= total_w;
        }

        let n_layers = self.layers.len();
        let mut grads: Vec<Dense> = self.layers.iter().map(Dense::zeros_like).collect();
        let last = &fwd.activations[n_layers - 1];
        let dropped = match &fwd.mask {
            Some(m) => last * m,
            None => last.clone(),
        };
        grads[n_layers - 1].weights = dropped.t().dot(&delta);
        grads[n_layers - 1].bias = delta.sum_axis(Axis(0));
        let mut da = delta.dot(&self.layers[n_layers - 1].weights.t());
        if let Some(m) = &fwd.mask {
            da *= m;
        }
        for l in (0..n_layers - 1).rev() {
            let out = &fwd.activations[l + 1];
            ndarray::Zip::from(&mut da).and(out).for_each(|d, &a| {
                if a <= 0.0 {
                    *d = 0.0;
                }
            });
            grads[l].weights = fwd.activations[l].t().dot(&da);
            grads[l].bias = da.sum_axis(Axis(0));
            if l > 0 {
                da = da.dot(&self.layers[l].weights.t());
            }
        }
        (loss, grads)
    }

    /// Weighted cross-entropy `Σ w_{y_i} ℓ_i / Σ w_{y_i}` and its analytic
    /// gradient, dropout off, no weight decay.
    pub fn loss_and_gradient(
        &self,
        x: &Array2<f64>,
        labels: &[usize],
        class_weights: &[f64],
    ) -> (f64, Vec<Dense>) {
        let sample_w: Vec<f64> = labels.iter().map(|&y| class_weights[y]).collect();
        let fwd = self.forward(x.clone(), None);
        self.backward(&fwd, labels, &sample_w)
    }

    pub fn loss(&self, x: &Array2<f64>, labels: &[usize], class_weights: &[f64]) -> f64 {
        self.loss_and_gradient(x, labels, class_weights).0
    }

    /// All parameters, layer by layer (weights row-major, then bias).
    pub fn flat_params(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn set_flat_params(&mut self, params: &[f64]) {
        let mut it = params.iter();
        for layer in &mut self.layers {
            for w in layer.weights.iter_mut() {
                *w = *it.next().expect("parameter count");
            }
            for b in layer.bias.iter_mut() {
                *b = *it.next().expect("parameter count");
            }
        }
    }
}

/// Flattens layer-shaped values in [`Mlp::flat_params`] order.
pub fn flatten(layers: &[Dense]) -> Vec<f64> {
    let mut out = Vec::new();
    for l in layers {
        out.extend(l.weights.iter());
        out.extend(l.bias.iter());
    }
    out
}

// =============================================================================
// Training
// =============================================================================

/// Features and labels for training or evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub class_count: usize,
}

impl LabeledSet {
    pub fn new(features: Array2<f64>, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= class_count) {
            return Err(Error::LabelOutOfRange {
                index,
                label,
                class_count,
            });
        }
        Ok(LabeledSet {
            features,
            labels,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    /// Parameters restored to the best validation checkpoint.
    pub network: Mlp,
    pub best_val_metric: f64,
    pub best_epoch: usize,
    pub val_history: Vec<f64>,
    pub metric: Metric,
    pub hp: Hyperparams,
    pub strategy: TrainingStrategy,
    pub seed: u64,
}

struct Momentum {
    velocity: Vec<Dense>,
}

impl Momentum {
    fn new(net: &Mlp) -> Self {
        Momentum {
            velocity: net.layers.iter().map(Dense::zeros_like).collect(),
        }
    }

    /// Nesterov SGD step; weight decay applies to weights, not biases.
    fn step(&mut self, net: &mut Mlp, grads: &[Dense], lr: f64, mu: f64, wd: f64) {
        for ((layer, g), v) in net.layers.iter_mut().zip(grads).zip(&mut self.velocity) {
            ndarray::Zip::from(&mut layer.weights)
                .and(&g.weights)
                .and(&mut v.weights)
                .for_each(|w, &gw, vw| {
                    let d = gw + wd * *w;
                    *vw = mu * *vw + d;
                    *w -= lr * (d + mu * *vw);
                });
            ndarray::Zip::from(&mut layer.bias)
                .and(&g.bias)
                .and(&mut v.bias)
                .for_each(|b, &gb, vb| {
                    *vb = mu * *vb + gb;
                    *b -= lr * (gb + mu * *vb);
                });
        }
    }
}

/// Trains a fresh network and returns it restored to the epoch with the best
/// validation metric (earliest epoch on ties).
pub fn fit(
    train: &LabeledSet,
    val: &LabeledSet,
    hp: &Hyperparams,
    strategy: TrainingStrategy,
    metric: Metric,
    seed_: u64,
) -> Result<TrainedModel> {
    hp.validate()?;
    if train.is_empty() {
        return Err(Error::Training("empty training set".into()));
    }
    if val.is_empty() {
        return Err(Error::Training("empty validation set".into()));
    }
    let classes = train.class_count;
    if val.class_count != classes || val.features.ncols() != train.features.ncols() {
        return Err(Error::Shape("train and validation sets disagree in shape".into()));
    }
    let mut present = vec![false; classes];
    for &y in &train.labels {
        present[y] = true;
    }
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::Training(
            "training labels contain a single class".into(),
        ));
    }

    let weights = match hp.loss_weighting {
        LossWeighting::Balanced => class_weights(&train.labels, classes)?.weights,
        LossWeighting::Uniform => vec![1.0; classes],
    };

    let mut init_rng = seed::stream(seed_, 0, Purpose::ModelInit);
    let mut net = Mlp::new(
        train.features.ncols(),
        &hp.architecture(strategy),
        classes,
        &mut init_rng,
    );
    let mut opt = Momentum::new(&net);
    let mut rng = seed::stream(seed_, 0, Purpose::Batching);

    let positions: Vec<usize> = (0..train.len()).collect();
    let mut order = upsample_indices(&positions, hp.upsample_target, &mut rng);
    let dim = train.features.ncols();
    let decay_from = 0.75 * hp.epochs as f64;

    let mut best: Option<(f64, usize, Mlp)> = None;
    let mut history = Vec::with_capacity(hp.epochs);
    for epoch in 0..hp.epochs {
        let lr = if epoch as f64 >= decay_from {
            hp.learning_rate * 0.1
        } else {
            hp.learning_rate
        };
        order.shuffle(&mut rng);
        for batch in order.chunks(hp.batch_size) {
            let mut x = train.features.select(Axis(0), batch);
            if hp.feature_noise_sigma > 0.0 {
                x.mapv_inplace(|v| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    v + hp.feature_noise_sigma * z
                });
            }
            let labels: Vec<usize> = batch.iter().map(|&i| train.labels[i]).collect();
            let sample_w: Vec<f64> = labels.iter().map(|&y| weights[y]).collect();
            let mask = (hp.dropout_p > 0.0)
                .then(|| dropout_mask(batch.len(), net.representation_dim(), hp.dropout_p, &mut rng));
            let fwd = net.forward(x, mask);
            let (_, grads) = net.backward(&fwd, &labels, &sample_w);
            opt.step(&mut net, &grads, lr, hp.momentum, hp.weight_decay);
        }
        debug_assert_eq!(dim, net.input_dim());
        let score = evaluate_network(&net, val, metric)?;
        if !score.is_finite() {
            return Err(Error::Training(format!("validation metric diverged at epoch {epoch}")));
        }
        history.push(score);
        if best.as_ref().is_none_or(|(b, _, _)| score > *b) {
            best = Some((score, epoch, net.clone()));
        }
    }
    let (best_val_metric, best_epoch, network) = best.expect("epochs >= 1");
    if network.flat_params().iter().any(|p| !p.is_finite()) {
        return Err(Error::Training("parameters diverged".into()));
    }
    Ok(TrainedModel {
        network,
        best_val_metric,
        best_epoch,
        val_history: history,
        metric,
        hp: hp.clone(),
        strategy,
        seed: seed_,
    })
}

fn argmax_rows(p: &Array2<f64>) -> Vec<usize> {
    p.rows()
        .into_iter()
        .map(|r| {
            let mut best = 0;
            for (i, &v) in r.iter().enumerate() {
                if v > r[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

fn evaluate_network(net: &Mlp, set: &LabeledSet, metric: Metric) -> Result<f64> {
    let pred = argmax_rows(&net.predict_proba(&set.features));
    metric.evaluate(&set.labels, &pred, set.class_count)
}

impl TrainedModel {
    /// Deterministic class predictions (dropout off).
    pub fn predict(&self, features: &Array2<f64>) -> Vec<usize> {
        argmax_rows(&self.network.predict_proba(features))
    }

    pub fn evaluate(&self, set: &LabeledSet, metric: Metric) -> Result<f64> {
        evaluate_network(&self.network, set, metric)
    }

    /// `k` stochastic forward passes with dropout on the last hidden
    /// representation, stacked into a `k × N × C` posterior.
    pub fn predict_mc(
        &self,
        features: &Array2<f64>,
        sample_ids: Vec<usize>,
        k: usize,
        seed_: u64,
    ) -> Result<PosteriorSamples> {
        if k == 0 {
            return Err(Error::InvalidArgument("predict_mc needs K >= 1".into()));
        }
        let h = self.network.hidden(features);
        let (n, width) = h.dim();
        let c = self.network.classes();
        let p = self.hp.dropout_p;
        let mut rng = seed::rng(seed_);
        let mut probs = ndarray::Array3::<f64>::zeros((k, n, c));
        for ki in 0..k {
            let slice = if p > 0.0 {
                let mask = dropout_mask(n, width, p, &mut rng);
                self.network.head_probs(&(&h * &mask))
            } else {
                self.network.head_probs(&h)
            };
            probs.index_axis_mut(Axis(0), ki).assign(&slice);
        }
        PosteriorSamples::new(probs, sample_ids)
    }

    /// Last hidden activations, dropout off.
    pub fn embed(&self, features: &Array2<f64>) -> Array2<f64> {
        self.network.hidden(features)
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn blobs(n_per: usize, sep: f64, s: u64) -> (LabeledSet, LabeledSet) {
        let mut rng = seed::rng(s);
        let mut make = |n: usize| {
            let mut rows = Vec::new();
            let mut labels = Vec::new();
            for i in 0..2 * n {
                let y = i % 2;
                let mx = if y == 0 { -sep } else { sep };
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                rows.extend([mx + a, b]);
                labels.push(y);
            }
            LabeledSet::new(Array2::from_shape_vec((2 * n, 2), rows).unwrap(), labels, 2).unwrap()
        };
        let train = make(n_per);
        let val = make(n_per);
        (train, val)
    }

    fn quick_hp() -> Hyperparams {
        Hyperparams {
            hidden_sizes: vec![16, 8],
            epochs: 10,
            upsample_target: 200,
            ..Hyperparams::default()
        }
    }

    #[test]
    fn class_weight_examples() {
        let w = class_weights(&[0, 0, 0, 1], 2).unwrap();
        assert!((w.weights[0] - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(w.weights[1], 2.0);
        assert!(w.absent.is_empty());
        assert_eq!(class_weights(&[0, 1, 2, 0, 1, 2], 3).unwrap().weights, vec![1.0; 3]);
        let w = class_weights(&[0, 0, 2], 3).unwrap();
        assert_eq!(w.absent, vec![1]);
        assert_eq!(w.weights[1], 0.0);
        assert!(class_weights(&[], 2).is_err());
    }

    #[test]
    fn class_weights_inverse_to_longtail_counts() {
        let counts = [500usize, 188, 71, 27, 10];
        let labels: Vec<usize> = counts
            .iter()
            .enumerate()
            .flat_map(|(c, &n)| std::iter::repeat_n(c, n))
            .collect();
        let w = class_weights(&labels, 5).unwrap().weights;
        let n: usize = counts.iter().sum();
        for c in 0..5 {
            assert!((w[c] - n as f64 / (5.0 * counts[c] as f64)).abs() < 1e-12);
            // w_c · n_c is constant
            assert!((w[c] * counts[c] as f64 - n as f64 / 5.0).abs() < 1e-9);
        }
    }

    #[test]
    fn upsample_examples() {
        let labeled: Vec<usize> = (100..110).collect();
        let mut rng = seed::rng(0);
        let up = upsample_indices(&labeled, 25, &mut rng);
        assert_eq!(up.len(), 25);
        for i in &labeled {
            let c = up.iter().filter(|&&j| j == *i).count();
            assert!(c == 2 || c == 3);
        }
        let big: Vec<usize> = (0..30).collect();
        assert_eq!(upsample_indices(&big, 25, &mut rng), big);
    }

    #[test]
    fn upsample_remainder_is_uniform() {
        let labeled: Vec<usize> = (0..10).collect();
        let mut rng = seed::rng(1);
        let mut extra = [0u32; 10];
        let trials = 10_000;
        for _ in 0..trials {
            let up = upsample_indices(&labeled, 23, &mut rng);
            for &i in &up[20..] {
                extra[i] += 1;
            }
        }
        // each index lands in the 3-slot remainder with probability 3/10
        let mean = trials as f64 * 0.3;
        let sd = (trials as f64 * 0.3 * 0.7).sqrt();
        for c in extra {
            assert!((c as f64 - mean).abs() < 4.0 * sd, "{c}");
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = seed::rng(17);
        for _ in 0..20 {
            let net = Mlp::new(2, &[2], 2, &mut rng);
            let x = Array2::from_shape_simple_fn((5, 2), || rng.random_range(-2.0..2.0));
            let y: Vec<usize> = (0..5).map(|_| rng.random_range(0..2)).collect();
            let w = [0.7, 1.6];
            let (_, g) = net.loss_and_gradient(&x, &y, &w);
            let analytic = flatten(&g);
            let base = net.flat_params();
            let h = 1e-6;
            let mut numeric = Vec::new();
            for i in 0..base.len() {
                let mut plus = net.clone();
                let mut p = base.clone();
                p[i] += h;
                plus.set_flat_params(&p);
                let mut minus = net.clone();
                p[i] -= 2.0 * h;
                minus.set_flat_params(&p);
                numeric.push((plus.loss(&x, &y, &w) - minus.loss(&x, &y, &w)) / (2.0 * h));
            }
            let diff: f64 = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let scale = analytic.iter().map(|a| a * a).sum::<f64>().sqrt().max(numeric.iter().map(|a| a * a).sum::<f64>().sqrt());
            if scale > 1e-10 {
                assert!(diff / scale <= 1e-4, "relative error {}", diff / scale);
            }
        }
    }

    #[test]
    fn balanced_weights_on_uniform_classes_leave_loss_unchanged() {
        let mut rng = seed::rng(3);
        let net = Mlp::new(3, &[4], 3, &mut rng);
        let x = Array2::from_shape_simple_fn((6, 3), || rng.random_range(-1.0..1.0));
        let y = vec![0, 1, 2, 2, 1, 0];
        let w = class_weights(&y, 3).unwrap().weights;
        assert_eq!(net.loss(&x, &y, &w), net.loss(&x, &y, &[1.0; 3]));
    }

    #[test]
    fn fit_separates_gaussians() {
        let (train, val) = blobs(100, 3.0, 5);
        let m = fit(&train, &val, &Hyperparams::default(), TrainingStrategy::FromScratch, Metric::Accuracy, 1).unwrap();
        assert!(m.best_val_metric >= 0.95, "{}", m.best_val_metric);
        // recomputing from the returned parameters reproduces the checkpoint
        let again = m.evaluate(&val, Metric::Accuracy).unwrap();
        assert!((again - m.best_val_metric).abs() < 1e-9);
        let best = m.val_history.iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(best, m.best_val_metric);
        assert_eq!(m.val_history[m.best_epoch], m.best_val_metric);
    }

    #[test]
    fn single_epoch_checkpoint() {
        let (train, val) = blobs(20, 3.0, 6);
        let hp = Hyperparams {
            epochs: 1,
            ..quick_hp()
        };
        let m = fit(&train, &val, &hp, TrainingStrategy::FromScratch, Metric::Accuracy, 9).unwrap();
        assert_eq!(m.val_history.len(), 1);
        assert_eq!(m.best_epoch, 0);
    }

    #[test]
    fn fit_is_bitwise_deterministic() {
        let (train, val) = blobs(30, 1.0, 7);
        let hp = Hyperparams {
            feature_noise_sigma: 0.1,
            loss_weighting: LossWeighting::Balanced,
            ..quick_hp()
        };
        let a = fit(&train, &val, &hp, TrainingStrategy::FromScratch, Metric::MeanRecall, 4).unwrap();
        let b = fit(&train, &val, &hp, TrainingStrategy::FromScratch, Metric::MeanRecall, 4).unwrap();
        assert_eq!(a.network.flat_params(), b.network.flat_params());
        let c = fit(&train, &val, &hp, TrainingStrategy::FromScratch, Metric::MeanRecall, 5).unwrap();
        assert_ne!(a.network.flat_params(), c.network.flat_params());
    }

    #[test]
    fn fit_rejects_single_class() {
        let train = LabeledSet::new(array![[0.0], [1.0]], vec![1, 1], 2).unwrap();
        let val = LabeledSet::new(array![[0.0], [1.0]], vec![0, 1], 2).unwrap();
        let err = fit(&train, &val, &quick_hp(), TrainingStrategy::FromScratch, Metric::Accuracy, 0);
        assert!(matches!(err, Err(Error::Training(_))));
    }

    #[test]
    fn oracle_strategy_uses_a_one_layer_head() {
        let (train, val) = blobs(20, 3.0, 8);
        let m = fit(&train, &val, &quick_hp(), TrainingStrategy::OracleRepresentation, Metric::Accuracy, 0).unwrap();
        assert_eq!(m.network.layers.len(), 2);
        assert_eq!(m.network.representation_dim(), 8);
    }

    #[test]
    fn mc_prediction_shapes_and_dropout() {
        let (train, val) = blobs(20, 2.0, 9);
        let m = fit(&train, &val, &quick_hp(), TrainingStrategy::FromScratch, Metric::Accuracy, 0).unwrap();
        let post = m.predict_mc(&val.features, (0..val.len()).collect(), 1, 3).unwrap();
        assert_eq!(post.probs().dim(), (1, val.len(), 2));
        for row in post.probs().index_axis(Axis(0), 0).rows() {
            assert!((row.sum() - 1.0).abs() < 1e-6);
        }
        assert!(m.predict_mc(&val.features, vec![], 0, 3).is_err());

        let mut no_dropout = m.clone();
        no_dropout.hp.dropout_p = 0.0;
        let post = no_dropout.predict_mc(&val.features, (0..val.len()).collect(), 5, 3).unwrap();
        for k in 1..5 {
            assert_eq!(post.probs().index_axis(Axis(0), k), post.probs().index_axis(Axis(0), 0));
        }
    }

    #[test]
    fn mc_mean_stabilizes() {
        let (train, val) = blobs(20, 0.7, 10);
        let m = fit(&train, &val, &quick_hp(), TrainingStrategy::FromScratch, Metric::Accuracy, 2).unwrap();
        let ids: Vec<usize> = (0..val.len()).collect();
        let a = crate::posterior::mean_predictive(&m.predict_mc(&val.features, ids.clone(), 500, 1).unwrap());
        let b = crate::posterior::mean_predictive(&m.predict_mc(&val.features, ids, 500, 2).unwrap());
        let worst = (&a - &b).iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        assert!(worst <= 0.02, "{worst}");
    }

    #[test]
    fn embeddings_are_deterministic_rows() {
        let (train, val) = blobs(10, 2.0, 11);
        let m = fit(&train, &val, &quick_hp(), TrainingStrategy::FromScratch, Metric::Accuracy, 0).unwrap();
        let x = array![[0.3, -0.2], [0.3, -0.2], [1.0, 1.0]];
        let e = m.embed(&x);
        assert_eq!(e.ncols(), 8);
        assert_eq!(e.row(0), e.row(1));
        // a duplicated sample sits at distance zero from its twin
        let d: f64 = e.row(0).iter().zip(e.row(1)).map(|(a, b)| (a - b).powi(2)).sum();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn checkpoint_round_trip() {
        let (train, val) = blobs(10, 2.0, 12);
        let m = fit(&train, &val, &quick_hp(), TrainingStrategy::FromScratch, Metric::Accuracy, 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        m.save_checkpoint(&path).unwrap();
        let back = TrainedModel::load_checkpoint(&path).unwrap();
        assert_eq!(back, m);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"inputs\": 2"));
    }

    #[test]
    fn hyperparam_validation() {
        assert!(Hyperparams::default().validate().is_ok());
        for hp in [
            Hyperparams { dropout_p: 1.0, ..Hyperparams::default() },
            Hyperparams { epochs: 0, ..Hyperparams::default() },
            Hyperparams { batch_size: 0, ..Hyperparams::default() },
            Hyperparams { learning_rate: 0.0, ..Hyperparams::default() },
            Hyperparams { hidden_sizes: vec![], ..Hyperparams::default() },
        ] {
            assert!(hp.validate().is_err());
        }
    }
}
