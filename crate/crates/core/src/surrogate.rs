//! From-scratch multilayer perceptron used as a surrogate for the cluster
//! labels, plus the 100-seed comparison of feature-selection methods.
//!
//! Everything here is deliberately dependency-free and deterministic: flat
//! row-major weight matrices, seeded ChaCha streams for initialization,
//! shuffling and dropout, and Adam updates applied in a fixed order, so the
//! same seed reproduces the same trained network bit for bit.

use std::fmt;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::seed;

/// Scale and alpha constants of the selu activation.
pub const SELU_SCALE: f64 = 1.05070098;
pub const SELU_ALPHA: f64 = 1.67326324;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Selu,
    Leaky { alpha: f64 },
    /// Vector-wise; valid only on the final layer. The scalar view is the
    /// identity, the real normalization happens in [`softmax`].
    Softmax,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Selu => {
                if z >= 0.0 {
                    SELU_SCALE * z
                } else {
                    SELU_SCALE * SELU_ALPHA * (z.exp() - 1.0)
                }
            }
            Activation::Leaky { alpha } => (alpha * z).max(z),
            Activation::Softmax => z,
        }
    }

    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Selu => {
                if z >= 0.0 {
                    SELU_SCALE
                } else {
                    SELU_SCALE * SELU_ALPHA * z.exp()
                }
            }
            Activation::Leaky { alpha } => {
                if z > 0.0 {
                    1.0
                } else {
                    alpha
                }
            }
            Activation::Softmax => 1.0,
        }
    }
}

/// Max-shifted softmax; the shift keeps the exponentials representable.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let peak = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - peak).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense { units: usize, activation: Activation },
    Dropout { rate: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    /// The reference architecture: five hidden dense layers, one dropout
    /// layer, softmax head over 8 classes.
    pub fn reference(input_dim: usize) -> Self {
        Self {
            input_dim,
            layers: vec![
                LayerSpec::Dense { units: 256, activation: Activation::Selu },
                LayerSpec::Dense { units: 128, activation: Activation::Relu },
                LayerSpec::Dense { units: 128, activation: Activation::Relu },
                LayerSpec::Dense { units: 1024, activation: Activation::Leaky { alpha: 0.05 } },
                LayerSpec::Dense { units: 128, activation: Activation::Leaky { alpha: 0.01 } },
                LayerSpec::Dropout { rate: 0.3 },
                LayerSpec::Dense { units: 8, activation: Activation::Softmax },
            ],
        }
    }

    /// Same shape with every hidden width divided by `divisor` (min 1);
    /// the output layer is untouched. Used to keep test-suite trainings and
    /// the gradient check affordable.
    pub fn scaled(&self, divisor: usize) -> Self {
        let last_dense = self
            .layers
            .iter()
            .rposition(|l| matches!(l, LayerSpec::Dense { .. }))
            .expect("validated specs end in a dense layer");
        Self {
            input_dim: self.input_dim,
            layers: self
                .layers
                .iter()
                .enumerate()
                .map(|(i, l)| match l {
                    LayerSpec::Dense { units, activation } if i != last_dense => {
                        LayerSpec::Dense {
                            units: (*units / divisor).max(1),
                            activation: *activation,
                        }
                    }
                    other => other.clone(),
                })
                .collect(),
        }
    }

    pub fn output_dim(&self) -> usize {
        self.layers
            .iter()
            .rev()
            .find_map(|l| match l {
                LayerSpec::Dense { units, .. } => Some(*units),
                LayerSpec::Dropout { .. } => None,
            })
            .unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidSpec("input_dim must be positive".into()));
        }
        let n = self.layers.len();
        match self.layers.last() {
            Some(LayerSpec::Dense { units, activation: Activation::Softmax }) if *units >= 2 => {}
            _ => {
                return Err(Error::InvalidSpec(
                    "final layer must be dense softmax with at least 2 units".into(),
                ))
            }
        }
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                LayerSpec::Dense { units, activation } => {
                    if *units == 0 {
                        return Err(Error::InvalidSpec(format!("layer {i} has zero units")));
                    }
                    if *activation == Activation::Softmax && i != n - 1 {
                        return Err(Error::InvalidSpec(format!(
                            "softmax on hidden layer {i}; it belongs on the output only"
                        )));
                    }
                    if let Activation::Leaky { alpha } = activation {
                        if !(alpha.is_finite() && *alpha >= 0.0 && *alpha < 1.0) {
                            return Err(Error::InvalidSpec(format!(
                                "leaky slope {alpha} out of [0, 1)"
                            )));
                        }
                    }
                }
                LayerSpec::Dropout { rate } => {
                    if !(*rate > 0.0 && *rate < 1.0) {
                        return Err(Error::InvalidSpec(format!(
                            "dropout rate {rate} outside (0, 1)"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Parameters of one dense layer, weights row-major `out_dim x in_dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseParams {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedNetwork {
    pub spec: NetworkSpec,
    /// One entry per dense layer, in spec order.
    pub params: Vec<DenseParams>,
    pub seed: u64,
    pub epochs_trained: usize,
}

fn init_params(spec: &NetworkSpec, rng: &mut ChaCha8Rng) -> Vec<DenseParams> {
    let mut params = Vec::new();
    let mut width = spec.input_dim;
    for layer in &spec.layers {
        match layer {
            LayerSpec::Dense { units, .. } => {
                // Fan-in-scaled uniform init keeps pre-activations near
                // unit variance for the selu/relu stack.
                let limit = (3.0 / width as f64).sqrt();
                let weights = (0..units * width)
                    .map(|_| rng.gen_range(-limit..limit))
                    .collect();
                params.push(DenseParams {
                    in_dim: width,
                    out_dim: *units,
                    weights,
                    biases: vec![0.0; *units],
                });
                width = *units;
            }
            LayerSpec::Dropout { .. } => {}
        }
    }
    params
}

fn dense_forward(p: &DenseParams, x: &[f64]) -> Vec<f64> {
    let mut z = p.biases.clone();
    for (o, zo) in z.iter_mut().enumerate() {
        let row = &p.weights[o * p.in_dim..(o + 1) * p.in_dim];
        let mut acc = 0.0;
        for (w, xi) in row.iter().zip(x) {
            acc += w * xi;
        }
        *zo += acc;
    }
    z
}

fn check_finite(values: &[f64], layer: usize) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteActivation { layer });
    }
    Ok(())
}

/// Activations recorded during one forward pass, for backpropagation.
struct ForwardTrace {
    /// Per dense layer: (input activation, pre-activation z).
    dense: Vec<(Vec<f64>, Vec<f64>)>,
    /// Per dropout layer (spec order): the scaled keep mask, empty in
    /// inference mode.
    masks: Vec<Vec<f64>>,
    output: Vec<f64>,
}

fn forward_pass(
    spec: &NetworkSpec,
    params: &[DenseParams],
    x: &[f64],
    mut dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<ForwardTrace> {
    if x.len() != spec.input_dim {
        return Err(Error::DimensionMismatch {
            expected: spec.input_dim,
            got: x.len(),
        });
    }
    let mut a = x.to_vec();
    let mut dense = Vec::with_capacity(params.len());
    let mut masks = Vec::new();
    let mut p_idx = 0;
    for (layer_idx, layer) in spec.layers.iter().enumerate() {
        match layer {
            LayerSpec::Dense { activation, .. } => {
                let z = dense_forward(&params[p_idx], &a);
                check_finite(&z, layer_idx)?;
                let out = match activation {
                    Activation::Softmax => softmax(&z),
                    act => z.iter().map(|&v| act.apply(v)).collect(),
                };
                check_finite(&out, layer_idx)?;
                dense.push((a, z));
                a = out;
                p_idx += 1;
            }
            LayerSpec::Dropout { rate } => {
                match dropout_rng.as_deref_mut() {
                    Some(rng) => {
                        let keep = 1.0 - rate;
                        let mask: Vec<f64> = (0..a.len())
                            .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                            .collect();
                        for (ai, mi) in a.iter_mut().zip(&mask) {
                            *ai *= mi;
                        }
                        masks.push(mask);
                    }
                    // Inference: inverted scaling already happened at train
                    // time, so the layer vanishes.
                    None => masks.push(Vec::new()),
                }
            }
        }
    }
    Ok(ForwardTrace {
        dense,
        masks,
        output: a,
    })
}

impl TrainedNetwork {
    /// Inference forward pass: dropout is a no-op.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(forward_pass(&self.spec, &self.params, x, None)?.output)
    }

    /// Training-mode forward pass: dropout masks drawn from `rng`.
    pub fn forward_training(&self, x: &[f64], rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        Ok(forward_pass(&self.spec, &self.params, x, Some(rng))?.output)
    }

    /// Argmax prediction; ties go to the lowest class id.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        let p = self.forward(x)?;
        let mut best = 0;
        for (i, &v) in p.iter().enumerate() {
            if v > p[best] {
                best = i;
            }
        }
        Ok(best)
    }

    /// Fraction of correct argmax predictions.
    pub fn accuracy(&self, features: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
        if features.len() != labels.len() || features.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: features.len(),
                got: labels.len(),
            });
        }
        let predictions = par::try_map(features, |x| self.predict(x))?;
        let correct = predictions
            .iter()
            .zip(labels)
            .filter(|(p, l)| p == l)
            .count();
        Ok(correct as f64 / labels.len() as f64)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let file = NetworkFile {
            spec: self.spec.clone(),
            seed: self.seed,
            epochs_trained: self.epochs_trained,
            params: self.params.clone(),
        };
        let mut body = serde_json::to_string_pretty(&file).map_err(|e| Error::json(path, e))?;
        body.push('\n');
        std::fs::write(path, body).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: NetworkFile = serde_json::from_str(&body).map_err(|e| Error::json(path, e))?;
        file.spec.validate()?;
        Ok(Self {
            spec: file.spec,
            params: file.params,
            seed: file.seed,
            epochs_trained: file.epochs_trained,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct NetworkFile {
    spec: NetworkSpec,
    seed: u64,
    epochs_trained: usize,
    params: Vec<DenseParams>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    /// Adaptive moments; the default.
    Adam,
    /// Plain gradient descent, mostly for sanity experiments.
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub optimizer: Optimizer,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            optimizer: Optimizer::Adam,
        }
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub network: TrainedNetwork,
    /// Accuracy on the held-out test third.
    pub test_accuracy: f64,
    /// Mean cross-entropy of the training batches of each epoch (measured
    /// before each update, so full-batch descent shows the classic
    /// non-increasing sequence).
    pub epoch_losses: Vec<f64>,
}

struct Gradients {
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

impl Gradients {
    fn zeros(params: &[DenseParams]) -> Self {
        Self {
            weights: params.iter().map(|p| vec![0.0; p.weights.len()]).collect(),
            biases: params.iter().map(|p| vec![0.0; p.biases.len()]).collect(),
        }
    }
}

/// Backpropagate the cross-entropy loss of one traced sample into `grads`;
/// returns the sample's loss.
fn backward_pass(
    spec: &NetworkSpec,
    params: &[DenseParams],
    trace: &ForwardTrace,
    label: usize,
    grads: &mut Gradients,
) -> f64 {
    let loss = -trace.output[label].ln();
    // Softmax + cross-entropy collapses to (p - y) at the final logits.
    let mut delta: Vec<f64> = trace.output.clone();
    delta[label] -= 1.0;

    let mut p_idx = params.len();
    let mut m_idx = trace.masks.len();
    for layer in spec.layers.iter().rev() {
        match layer {
            LayerSpec::Dense { activation, .. } => {
                p_idx -= 1;
                let p = &params[p_idx];
                let (input, z) = &trace.dense[p_idx];
                // The output layer's delta is already in logit space.
                if !matches!(activation, Activation::Softmax) {
                    for (d, &zv) in delta.iter_mut().zip(z) {
                        *d *= activation.derivative(zv);
                    }
                }
                let gw = &mut grads.weights[p_idx];
                let gb = &mut grads.biases[p_idx];
                for (o, &d) in delta.iter().enumerate() {
                    gb[o] += d;
                    let row = &mut gw[o * p.in_dim..(o + 1) * p.in_dim];
                    for (g, &xi) in row.iter_mut().zip(input) {
                        *g += d * xi;
                    }
                }
                let mut prev = vec![0.0f64; p.in_dim];
                for (o, &d) in delta.iter().enumerate() {
                    let row = &p.weights[o * p.in_dim..(o + 1) * p.in_dim];
                    for (pr, &w) in prev.iter_mut().zip(row) {
                        *pr += w * d;
                    }
                }
                delta = prev;
            }
            LayerSpec::Dropout { .. } => {
                m_idx -= 1;
                let mask = &trace.masks[m_idx];
                if !mask.is_empty() {
                    for (d, &m) in delta.iter_mut().zip(mask) {
                        *d *= m;
                    }
                }
            }
        }
    }
    loss
}

struct AdamState {
    m_w: Vec<Vec<f64>>,
    v_w: Vec<Vec<f64>>,
    m_b: Vec<Vec<f64>>,
    v_b: Vec<Vec<f64>>,
    t: u64,
}

impl AdamState {
    fn new(params: &[DenseParams]) -> Self {
        Self {
            m_w: params.iter().map(|p| vec![0.0; p.weights.len()]).collect(),
            v_w: params.iter().map(|p| vec![0.0; p.weights.len()]).collect(),
            m_b: params.iter().map(|p| vec![0.0; p.biases.len()]).collect(),
            v_b: params.iter().map(|p| vec![0.0; p.biases.len()]).collect(),
            t: 0,
        }
    }
}

fn apply_update(
    params: &mut [DenseParams],
    grads: &Gradients,
    batch_len: usize,
    opts: &TrainOptions,
    adam: &mut AdamState,
) {
    let scale = 1.0 / batch_len as f64;
    match opts.optimizer {
        Optimizer::Sgd => {
            for (l, p) in params.iter_mut().enumerate() {
                for (w, g) in p.weights.iter_mut().zip(&grads.weights[l]) {
                    *w -= opts.learning_rate * g * scale;
                }
                for (b, g) in p.biases.iter_mut().zip(&grads.biases[l]) {
                    *b -= opts.learning_rate * g * scale;
                }
            }
        }
        Optimizer::Adam => {
            adam.t += 1;
            let bc1 = 1.0 - opts.beta1.powi(adam.t as i32);
            let bc2 = 1.0 - opts.beta2.powi(adam.t as i32);
            let step = |value: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
                *m = opts.beta1 * *m + (1.0 - opts.beta1) * g;
                *v = opts.beta2 * *v + (1.0 - opts.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *value -= opts.learning_rate * m_hat / (v_hat.sqrt() + opts.epsilon);
            };
            for (l, p) in params.iter_mut().enumerate() {
                for (i, w) in p.weights.iter_mut().enumerate() {
                    step(w, &mut adam.m_w[l][i], &mut adam.v_w[l][i], grads.weights[l][i] * scale);
                }
                for (i, b) in p.biases.iter_mut().enumerate() {
                    step(b, &mut adam.m_b[l][i], &mut adam.v_b[l][i], grads.biases[l][i] * scale);
                }
            }
        }
    }
}

fn shuffled_indices(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
    idx
}

/// Train on a random two-thirds/one-third split: the data is shuffled once
/// per seed and divided into train/test/validation thirds (the validation
/// part is held out and untouched; the fixed epoch budget makes early
/// stopping unnecessary).
pub fn train(
    spec: &NetworkSpec,
    features: &[Vec<f64>],
    labels: &[usize],
    seed: u64,
    opts: &TrainOptions,
) -> Result<TrainOutcome> {
    spec.validate()?;
    if features.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: features.len(),
            got: labels.len(),
        });
    }
    let out_dim = spec.output_dim();
    for &l in labels {
        if l >= out_dim {
            return Err(Error::InvalidParameter(format!(
                "label {l} out of range for {out_dim} classes"
            )));
        }
    }
    for f in features {
        if f.len() != spec.input_dim {
            return Err(Error::DimensionMismatch {
                expected: spec.input_dim,
                got: f.len(),
            });
        }
    }
    if opts.epochs == 0 || opts.batch_size == 0 {
        return Err(Error::InvalidParameter(
            "epochs and batch_size must be positive".into(),
        ));
    }

    let n = features.len();
    let third = n / 3;
    let train_len = n - 2 * third;
    for (part, len) in [("train", train_len), ("test", third), ("validation", third)] {
        if len == 0 {
            return Err(Error::EmptySplit { part, n });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = init_params(spec, &mut rng);
    let order = shuffled_indices(n, &mut rng);
    let train_idx = &order[..train_len];
    let test_idx = &order[train_len..train_len + third];

    let mut adam = AdamState::new(&params);
    let mut epoch_losses = Vec::with_capacity(opts.epochs);
    let mut epoch_order: Vec<usize> = train_idx.to_vec();
    for epoch in 0..opts.epochs {
        for i in (1..epoch_order.len()).rev() {
            let j = rng.gen_range(0..=i);
            epoch_order.swap(i, j);
        }
        let mut epoch_loss = 0.0;
        for batch in epoch_order.chunks(opts.batch_size) {
            let mut grads = Gradients::zeros(&params);
            let mut batch_loss = 0.0;
            for &sample in batch {
                let trace =
                    forward_pass(spec, &params, &features[sample], Some(&mut rng))?;
                batch_loss +=
                    backward_pass(spec, &params, &trace, labels[sample], &mut grads);
            }
            if !batch_loss.is_finite() {
                return Err(Error::NonFiniteLoss { seed, epoch });
            }
            epoch_loss += batch_loss;
            apply_update(&mut params, &grads, batch.len(), opts, &mut adam);
        }
        epoch_losses.push(epoch_loss / epoch_order.len() as f64);
    }

    let network = TrainedNetwork {
        spec: spec.clone(),
        params,
        seed,
        epochs_trained: opts.epochs,
    };
    let test_features: Vec<Vec<f64>> = test_idx.iter().map(|&i| features[i].clone()).collect();
    let test_labels: Vec<usize> = test_idx.iter().map(|&i| labels[i]).collect();
    let test_accuracy = network.accuracy(&test_features, &test_labels)?;
    Ok(TrainOutcome {
        network,
        test_accuracy,
        epoch_losses,
    })
}

/// Compare analytic backpropagation gradients against central finite
/// differences on every parameter; returns the largest relative error.
/// Dropout layers run in inference mode (identity) so the loss surface is
/// deterministic.
pub fn gradient_check(spec: &NetworkSpec, x: &[f64], label: usize, seed: u64) -> Result<f64> {
    spec.validate()?;
    if label >= spec.output_dim() {
        return Err(Error::InvalidParameter(format!(
            "label {label} out of range for {} classes",
            spec.output_dim()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = init_params(spec, &mut rng);

    let trace = forward_pass(spec, &params, x, None)?;
    let mut grads = Gradients::zeros(&params);
    backward_pass(spec, &params, &trace, label, &mut grads);

    let step = 1e-5;
    let mut worst = 0.0f64;
    for l in 0..params.len() {
        for slot in 0..params[l].weights.len() + params[l].biases.len() {
            let read = |params: &[DenseParams]| {
                let p = &params[l];
                if slot < p.weights.len() {
                    p.weights[slot]
                } else {
                    p.biases[slot - p.weights.len()]
                }
            };
            let write = |params: &mut [DenseParams], v: f64| {
                let p = &mut params[l];
                if slot < p.weights.len() {
                    p.weights[slot] = v;
                } else {
                    p.biases[slot - p.weights.len()] = v;
                }
            };
            let original = read(&params);
            write(&mut params, original + step);
            let plus = -forward_pass(spec, &params, x, None)?.output[label].ln();
            write(&mut params, original - step);
            let minus = -forward_pass(spec, &params, x, None)?.output[label].ln();
            write(&mut params, original);

            let numeric = (plus - minus) / (2.0 * step);
            let analytic = if slot < grads.weights[l].len() {
                grads.weights[l][slot]
            } else {
                grads.biases[l][slot - grads.weights[l].len()]
            };
            let denom = analytic.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((analytic - numeric).abs() / denom);
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMethod {
    ModeMode,
    Median,
    Random,
}

impl fmt::Display for SelectionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SelectionMethod::ModeMode => write!(f, "mode-mode"),
            SelectionMethod::Median => write!(f, "median"),
            SelectionMethod::Random => write!(f, "random"),
        }
    }
}

impl std::str::FromStr for SelectionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mode-mode" => Ok(SelectionMethod::ModeMode),
            "median" => Ok(SelectionMethod::Median),
            "random" => Ok(SelectionMethod::Random),
            other => Err(Error::Format(format!("unknown selection method {other:?}"))),
        }
    }
}

/// Accuracy distribution of repeated trainings under one selection method.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyReport {
    pub method: SelectionMethod,
    pub seeds: Vec<u64>,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation (a single run reports 0).
    pub std: f64,
}

impl AccuracyReport {
    fn from_runs(method: SelectionMethod, seeds: Vec<u64>, accuracies: Vec<f64>) -> Self {
        let n = accuracies.len() as f64;
        let mean = accuracies.iter().sum::<f64>() / n;
        let var = accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
        Self {
            method,
            seeds,
            accuracies,
            mean,
            std: var.sqrt(),
        }
    }
}

/// The two fixed 8-feature selections to compare against random picks.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionSpec {
    pub mode_mode: Vec<usize>,
    pub median: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareOptions {
    pub runs: usize,
    /// Run r trains with seed `base_seed + r`, so the default covers
    /// seeds 0..runs.
    pub base_seed: u64,
    pub train: TrainOptions,
}

impl Default for CompareOptions {
    fn default() -> Self {
        Self {
            runs: 100,
            base_seed: 0,
            train: TrainOptions::default(),
        }
    }
}

fn project(features: &[Vec<f64>], columns: &[usize]) -> Vec<Vec<f64>> {
    features
        .iter()
        .map(|row| columns.iter().map(|&c| row[c]).collect())
        .collect()
}

fn validate_selection(selection: &[usize], width: usize, needed: usize) -> Result<()> {
    if selection.len() != needed {
        return Err(Error::InvalidParameter(format!(
            "selection must name {needed} features, got {}",
            selection.len()
        )));
    }
    let mut seen = selection.to_vec();
    seen.sort_unstable();
    seen.dedup();
    if seen.len() != selection.len() {
        return Err(Error::InvalidParameter("selection repeats a feature".into()));
    }
    if let Some(&c) = selection.iter().find(|&&c| c >= width) {
        return Err(Error::InvalidParameter(format!(
            "selected column {c} exceeds feature width {width}"
        )));
    }
    Ok(())
}

/// Train `runs` networks per selection method and report the accuracy
/// distributions. The fixed selections use the given columns; the random
/// group samples fresh columns per run from the pool of features that
/// neither fixed selection uses.
pub fn compare_selections(
    features: &[Vec<f64>],
    labels: &[usize],
    spec: &NetworkSpec,
    selections: &SelectionSpec,
    opts: &CompareOptions,
) -> Result<Vec<AccuracyReport>> {
    spec.validate()?;
    if opts.runs == 0 {
        return Err(Error::InvalidParameter("runs must be positive".into()));
    }
    let width = features
        .first()
        .map(|f| f.len())
        .ok_or_else(|| Error::InvalidParameter("empty feature matrix".into()))?;
    let needed = spec.input_dim;
    validate_selection(&selections.mode_mode, width, needed)?;
    validate_selection(&selections.median, width, needed)?;

    let mut pool: Vec<usize> = (0..width)
        .filter(|c| !selections.mode_mode.contains(c) && !selections.median.contains(c))
        .collect();
    pool.sort_unstable();
    if pool.len() < needed {
        return Err(Error::PoolTooSmall {
            pool: pool.len(),
            needed,
        });
    }

    let runs: Vec<(u64, f64, f64, f64)> = par::try_map_range(0..opts.runs, |r| {
        let run_seed = opts.base_seed.wrapping_add(r as u64);
        let a = train(
            spec,
            &project(features, &selections.mode_mode),
            labels,
            run_seed,
            &opts.train,
        )?
        .test_accuracy;
        let b = train(
            spec,
            &project(features, &selections.median),
            labels,
            run_seed,
            &opts.train,
        )?
        .test_accuracy;

        let mut pick_rng =
            ChaCha8Rng::seed_from_u64(seed::derive(run_seed, "surrogate.random-columns"));
        let mut shuffled = pool.clone();
        for i in (1..shuffled.len()).rev() {
            let j = pick_rng.gen_range(0..=i);
            shuffled.swap(i, j);
        }
        let mut random_cols: Vec<usize> = shuffled[..needed].to_vec();
        random_cols.sort_unstable();
        let c = train(
            spec,
            &project(features, &random_cols),
            labels,
            run_seed,
            &opts.train,
        )?
        .test_accuracy;
        Ok::<_, Error>((run_seed, a, b, c))
    })?;

    let seeds: Vec<u64> = runs.iter().map(|r| r.0).collect();
    Ok(vec![
        AccuracyReport::from_runs(
            SelectionMethod::ModeMode,
            seeds.clone(),
            runs.iter().map(|r| r.1).collect(),
        ),
        AccuracyReport::from_runs(
            SelectionMethod::Median,
            seeds.clone(),
            runs.iter().map(|r| r.2).collect(),
        ),
        AccuracyReport::from_runs(
            SelectionMethod::Random,
            seeds,
            runs.iter().map(|r| r.3).collect(),
        ),
    ])
}

/// Write the per-run accuracies: `method,seed,accuracy`.
pub fn write_runs_csv(path: &Path, reports: &[AccuracyReport]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    writer
        .write_record(["method", "seed", "accuracy"])
        .map_err(|e| Error::csv(path, e))?;
    for report in reports {
        for (seed, acc) in report.seeds.iter().zip(&report.accuracies) {
            writer
                .write_record([
                    report.method.to_string(),
                    seed.to_string(),
                    acc.to_string(),
                ])
                .map_err(|e| Error::csv(path, e))?;
        }
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Read back a per-run accuracy CSV, regrouped by method in file order.
pub fn load_runs_csv(path: &Path) -> Result<Vec<AccuracyReport>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let header = reader.headers().map_err(|e| Error::csv(path, e))?;
    if header.iter().collect::<Vec<_>>() != ["method", "seed", "accuracy"] {
        return Err(Error::MalformedHeader(header.iter().collect::<Vec<_>>().join(",")));
    }
    let mut reports: Vec<AccuracyReport> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        if record.len() != 3 {
            return Err(Error::Format("accuracy row needs 3 fields".into()));
        }
        let method: SelectionMethod = record[0].parse()?;
        let seed: u64 = record[1]
            .parse()
            .map_err(|e| Error::Format(format!("bad seed: {e}")))?;
        let accuracy: f64 = record[2]
            .parse()
            .map_err(|e| Error::Format(format!("bad accuracy: {e}")))?;
        match reports.last_mut() {
            Some(r) if r.method == method => {
                r.seeds.push(seed);
                r.accuracies.push(accuracy);
            }
            _ => reports.push(AccuracyReport {
                method,
                seeds: vec![seed],
                accuracies: vec![accuracy],
                mean: 0.0,
                std: 0.0,
            }),
        }
    }
    for r in &mut reports {
        let n = r.accuracies.len() as f64;
        r.mean = r.accuracies.iter().sum::<f64>() / n;
        r.std = (r.accuracies.iter().map(|a| (a - r.mean).powi(2)).sum::<f64>() / n).sqrt();
    }
    Ok(reports)
}

/// One method's line in the summary artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryEntry {
    pub method: SelectionMethod,
    pub runs: usize,
    pub mean: f64,
    pub std: f64,
}

/// Write mean/std per method as JSON.
pub fn write_summary_json(path: &Path, reports: &[AccuracyReport]) -> Result<()> {
    let entries: Vec<SummaryEntry> = reports
        .iter()
        .map(|r| SummaryEntry {
            method: r.method,
            runs: r.accuracies.len(),
            mean: r.mean,
            std: r.std,
        })
        .collect();
    let mut body = serde_json::to_string_pretty(&entries).map_err(|e| Error::json(path, e))?;
    body.push('\n');
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Read back a summary artifact.
pub fn load_summary_json(path: &Path) -> Result<Vec<SummaryEntry>> {
    let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&body).map_err(|e| Error::json(path, e))
}
