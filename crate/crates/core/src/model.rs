//! The desk-scale classifier: a fully connected ReLU network with a
//! two-logit output head, trained with a temperature-scaled, class-weighted
//! cross-entropy. Everything is f64 and exact-gradient; there is no autograd,
//! the backward pass is written out by hand and checked against finite
//! differences in the tests.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Label;
use crate::error::{Error, Result};

/// Network parameters. `weights[l]` is the row-major `[out x in]` matrix of
/// layer `l`; the final layer always has exactly two output units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpParams {
    /// He-style uniform initialization: each layer is drawn from
    /// U(-sqrt(6/fan_in), +sqrt(6/fan_in)), biases start at zero. Draw order
    /// is fixed, so a seeded generator reproduces the network exactly.
    pub fn init(layer_sizes: &[usize], rng: &mut impl Rng) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::Config("a network needs at least input and output layers".into()));
        }
        if layer_sizes.iter().any(|&n| n == 0) {
            return Err(Error::Config("every layer size must be at least 1".into()));
        }
        if *layer_sizes.last().unwrap() != 2 {
            return Err(Error::Config(format!(
                "the output layer must have exactly 2 units, got {}",
                layer_sizes.last().unwrap()
            )));
        }
        let mut weights = Vec::with_capacity(layer_sizes.len() - 1);
        let mut biases = Vec::with_capacity(layer_sizes.len() - 1);
        for pair in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = (6.0 / fan_in as f64).sqrt();
            let w: Vec<f64> = (0..fan_in * fan_out).map(|_| rng.gen_range(-limit..limit)).collect();
            weights.push(w);
            biases.push(vec![0.0; fan_out]);
        }
        Ok(MlpParams { layer_sizes: layer_sizes.to_vec(), weights, biases })
    }

    pub fn n_layers(&self) -> usize {
        self.layer_sizes.len().saturating_sub(1)
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    /// Checks that the tensor lengths agree with `layer_sizes`.
    pub fn validate_shapes(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::ShapeMismatch("fewer than two layer sizes".into()));
        }
        if *self.layer_sizes.last().unwrap() != 2 {
            return Err(Error::ShapeMismatch(format!(
                "output layer has {} units, expected 2",
                self.layer_sizes.last().unwrap()
            )));
        }
        if self.weights.len() != self.n_layers() || self.biases.len() != self.n_layers() {
            return Err(Error::ShapeMismatch(format!(
                "{} weight and {} bias tensors for {} layers",
                self.weights.len(),
                self.biases.len(),
                self.n_layers()
            )));
        }
        for (l, pair) in self.layer_sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            if self.weights[l].len() != fan_in * fan_out {
                return Err(Error::ShapeMismatch(format!(
                    "layer {l} weight tensor has {} entries, expected {}",
                    self.weights[l].len(),
                    fan_in * fan_out
                )));
            }
            if self.biases[l].len() != fan_out {
                return Err(Error::ShapeMismatch(format!(
                    "layer {l} bias vector has {} entries, expected {fan_out}",
                    self.biases[l].len()
                )));
            }
        }
        Ok(())
    }
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub input: Vec<f64>,
    /// Pre-activation vectors per layer; the last entry is the logit pair.
    pub pre_activations: Vec<Vec<f64>>,
    /// Post-ReLU activations of the hidden layers.
    pub activations: Vec<Vec<f64>>,
    pub logits: [f64; 2],
}

/// Runs the network on one feature vector. Hidden layers apply ReLU, the
/// output layer is linear.
pub fn forward(params: &MlpParams, input: &[f64]) -> Result<ForwardTrace> {
    if input.len() != params.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "input has {} features, network expects {}",
            input.len(),
            params.input_dim()
        )));
    }
    let n_layers = params.n_layers();
    let mut pre_activations = Vec::with_capacity(n_layers);
    let mut activations = Vec::with_capacity(n_layers.saturating_sub(1));
    let mut current: Vec<f64> = input.to_vec();

    for l in 0..n_layers {
        let fan_in = params.layer_sizes[l];
        let fan_out = params.layer_sizes[l + 1];
        let w = &params.weights[l];
        let b = &params.biases[l];
        let mut z = vec![0.0; fan_out];
        for i in 0..fan_out {
            let row = &w[i * fan_in..(i + 1) * fan_in];
            let mut acc = b[i];
            for (wj, xj) in row.iter().zip(&current) {
                acc += wj * xj;
            }
            z[i] = acc;
        }
        pre_activations.push(z.clone());
        if l + 1 < n_layers {
            for v in z.iter_mut() {
                *v = v.max(0.0);
            }
            activations.push(z.clone());
            current = z;
        } else {
            current = z;
        }
    }

    let logits = [current[0], current[1]];
    Ok(ForwardTrace { input: input.to_vec(), pre_activations, activations, logits })
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::Domain(format!("temperature {tau} must be positive and finite")));
    }
    Ok(())
}

/// Softmax over the two logits divided by `tau`, computed with
/// max-subtraction so huge logits cannot overflow. The two components are
/// positive and sum to 1 up to float rounding; the argmax never changes with
/// `tau`.
pub fn scaled_softmax(logits: [f64; 2], tau: f64) -> Result<[f64; 2]> {
    check_tau(tau)?;
    if !(logits[0].is_finite() && logits[1].is_finite()) {
        return Err(Error::NonFinite(format!("logits [{}, {}]", logits[0], logits[1])));
    }
    let z = [logits[0] / tau, logits[1] / tau];
    let m = z[0].max(z[1]);
    let e = [(z[0] - m).exp(), (z[1] - m).exp()];
    let sum = e[0] + e[1];
    Ok([e[0] / sum, e[1] / sum])
}

/// Per-class loss weights. The inverse-frequency constructor downweights the
/// majority class so a 90/10 split does not drown out bona fide samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub spoof: f64,
    pub bonafide: f64,
}

impl ClassWeights {
    pub const UNIT: ClassWeights = ClassWeights { spoof: 1.0, bonafide: 1.0 };

    /// w_c = n / (2 * n_c) over the counts given. A class with no samples in
    /// the subset gets weight 1.0; nothing will ever be weighted by it.
    pub fn inverse_frequency(n_spoof: usize, n_bonafide: usize) -> ClassWeights {
        let n = (n_spoof + n_bonafide) as f64;
        let weight = |count: usize| if count == 0 { 1.0 } else { n / (2.0 * count as f64) };
        ClassWeights { spoof: weight(n_spoof), bonafide: weight(n_bonafide) }
    }

    pub fn get(&self, label: Label) -> f64 {
        match label {
            Label::Spoof => self.spoof,
            Label::Bonafide => self.bonafide,
        }
    }
}

/// Class-weighted cross-entropy of one sample at temperature `tau`:
/// `-w_label * ln P(label)` with P from `scaled_softmax`. Evaluated in
/// log-sum-exp form so confident mistakes cannot produce `ln(0)`.
pub fn weighted_ce_loss(logits: [f64; 2], label: Label, weights: &ClassWeights, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    if !(logits[0].is_finite() && logits[1].is_finite()) {
        return Err(Error::NonFinite(format!("logits [{}, {}]", logits[0], logits[1])));
    }
    let z = [logits[0] / tau, logits[1] / tau];
    let m = z[0].max(z[1]);
    let lse = m + ((z[0] - m).exp() + (z[1] - m).exp()).ln();
    Ok(weights.get(label) * (lse - z[label.index()]))
}

/// Parameter gradients, in the same shape as `MlpParams`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(params: &MlpParams) -> Gradients {
        Gradients {
            weights: params.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: params.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    /// Accumulates `other` into `self`.
    pub fn add(&mut self, other: &Gradients) -> Result<()> {
        if self.weights.len() != other.weights.len() {
            return Err(Error::ShapeMismatch("gradient layer counts differ".into()));
        }
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            if a.len() != b.len() {
                return Err(Error::ShapeMismatch("gradient weight shapes differ".into()));
            }
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            if a.len() != b.len() {
                return Err(Error::ShapeMismatch("gradient bias shapes differ".into()));
            }
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for w in self.weights.iter_mut() {
            for v in w.iter_mut() {
                *v *= factor;
            }
        }
        for b in self.biases.iter_mut() {
            for v in b.iter_mut() {
                *v *= factor;
            }
        }
    }
}

/// Exact backward pass for one sample. The logit gradient is
/// `w_label * (p - onehot(label)) / tau`, which then flows back through the
/// linear layers and the ReLU masks recorded in the trace.
pub fn backward(
    params: &MlpParams,
    trace: &ForwardTrace,
    label: Label,
    weights: &ClassWeights,
    tau: f64,
) -> Result<Gradients> {
    let probs = scaled_softmax(trace.logits, tau)?;
    let w = weights.get(label);
    let mut onehot = [0.0; 2];
    onehot[label.index()] = 1.0;

    let n_layers = params.n_layers();
    let mut grads = Gradients::zeros_like(params);
    let mut dz: Vec<f64> = vec![
        w * (probs[0] - onehot[0]) / tau,
        w * (probs[1] - onehot[1]) / tau,
    ];

    for l in (0..n_layers).rev() {
        let fan_in = params.layer_sizes[l];
        let fan_out = params.layer_sizes[l + 1];
        let prev: &[f64] = if l == 0 { &trace.input } else { &trace.activations[l - 1] };

        for i in 0..fan_out {
            let row = &mut grads.weights[l][i * fan_in..(i + 1) * fan_in];
            for (gw, xj) in row.iter_mut().zip(prev) {
                *gw = dz[i] * xj;
            }
            grads.biases[l][i] = dz[i];
        }

        if l > 0 {
            let w_layer = &params.weights[l];
            let mut dprev = vec![0.0; fan_in];
            for i in 0..fan_out {
                let row = &w_layer[i * fan_in..(i + 1) * fan_in];
                for (dp, wij) in dprev.iter_mut().zip(row) {
                    *dp += wij * dz[i];
                }
            }
            // ReLU mask from the recorded pre-activations.
            let pre = &trace.pre_activations[l - 1];
            for (dp, &z) in dprev.iter_mut().zip(pre) {
                if z <= 0.0 {
                    *dp = 0.0;
                }
            }
            dz = dprev;
        }
    }

    Ok(grads)
}

/// Adam hyperparameters. Weight decay enters as a plain L2 term added to the
/// gradient before the moment updates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper { lr: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, weight_decay: 1e-4 }
    }
}

impl AdamHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.lr)));
        }
        for (name, beta) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&beta) {
                return Err(Error::Config(format!("{name} {beta} must lie in [0, 1)")));
            }
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon {} must be positive", self.epsilon)));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::Config(format!(
                "weight decay {} must be non-negative",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

/// First and second moment estimates, one slot per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m_weights: Vec<Vec<f64>>,
    v_weights: Vec<Vec<f64>>,
    m_biases: Vec<Vec<f64>>,
    v_biases: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new(params: &MlpParams) -> AdamState {
        AdamState {
            m_weights: params.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            v_weights: params.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            m_biases: params.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            v_biases: params.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

fn adam_update_slice(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    hyper: &AdamHyper,
    bias1: f64,
    bias2: f64,
    decay: bool,
) -> Result<()> {
    for i in 0..params.len() {
        let mut g = grads[i];
        if !g.is_finite() {
            return Err(Error::NonFinite(format!("gradient entry {g}")));
        }
        if decay {
            g += hyper.weight_decay * params[i];
        }
        m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g;
        v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g * g;
        let m_hat = m[i] / bias1;
        let v_hat = v[i] / bias2;
        params[i] -= hyper.lr * m_hat / (v_hat.sqrt() + hyper.epsilon);
    }
    Ok(())
}

/// One bias-corrected Adam step over all parameter tensors. Weight decay
/// applies to weights only, never to biases. Errors on shape mismatches and
/// non-finite gradient entries.
pub fn adam_step(
    params: &mut MlpParams,
    grads: &Gradients,
    state: &mut AdamState,
    hyper: &AdamHyper,
) -> Result<()> {
    hyper.validate()?;
    if grads.weights.len() != params.weights.len() || grads.biases.len() != params.biases.len() {
        return Err(Error::ShapeMismatch("gradient layer counts differ from parameters".into()));
    }
    for l in 0..params.weights.len() {
        if grads.weights[l].len() != params.weights[l].len()
            || grads.biases[l].len() != params.biases[l].len()
        {
            return Err(Error::ShapeMismatch(format!("gradient shapes differ at layer {l}")));
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - hyper.beta1.powi(t);
    let bias2 = 1.0 - hyper.beta2.powi(t);

    for l in 0..params.weights.len() {
        adam_update_slice(
            &mut params.weights[l],
            &grads.weights[l],
            &mut state.m_weights[l],
            &mut state.v_weights[l],
            hyper,
            bias1,
            bias2,
            true,
        )?;
        adam_update_slice(
            &mut params.biases[l],
            &grads.biases[l],
            &mut state.m_biases[l],
            &mut state.v_biases[l],
            hyper,
            bias1,
            bias2,
            false,
        )?;
    }
    Ok(())
}

/// Convex combination of several parameter sets. Weights are normalized to
/// sum to 1; architectures must match exactly.
pub fn average_checkpoints(params: &[&MlpParams], weights: &[f64]) -> Result<MlpParams> {
    if params.is_empty() {
        return Err(Error::Config("cannot average zero checkpoints".into()));
    }
    if params.len() != weights.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} parameter sets vs {} weights",
            params.len(),
            weights.len()
        )));
    }
    for &w in weights {
        if !(w.is_finite() && w >= 0.0) {
            return Err(Error::Config(format!("averaging weight {w} must be finite and >= 0")));
        }
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::Config("averaging weights must not all be zero".into()));
    }
    let first = params[0];
    for p in params.iter().skip(1) {
        if p.layer_sizes != first.layer_sizes {
            return Err(Error::ShapeMismatch(
                "cannot average checkpoints with different architectures".into(),
            ));
        }
    }

    let mut out = MlpParams {
        layer_sizes: first.layer_sizes.clone(),
        weights: first.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
        biases: first.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
    };
    for (p, &w) in params.iter().zip(weights) {
        let f = w / total;
        for (acc, src) in out.weights.iter_mut().zip(&p.weights) {
            for (a, s) in acc.iter_mut().zip(src) {
                *a += f * s;
            }
        }
        for (acc, src) in out.biases.iter_mut().zip(&p.biases) {
            for (a, s) in acc.iter_mut().zip(src) {
                *a += f * s;
            }
        }
    }
    Ok(out)
}

/// A saved model: parameters plus the context needed to rank and reproduce
/// it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub format_version: u32,
    pub params: MlpParams,
    pub seed: u64,
    pub epoch: usize,
    pub val_loss: f64,
    pub val_eer: f64,
}

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Writes a checkpoint as pretty JSON. f64 values round-trip exactly.
pub fn write_checkpoint(path: &Path, checkpoint: &ModelCheckpoint) -> Result<()> {
    let mut text = serde_json::to_string_pretty(checkpoint).expect("checkpoint serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

pub fn read_checkpoint(path: &Path) -> Result<ModelCheckpoint> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
    let checkpoint: ModelCheckpoint = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        msg: format!("bad checkpoint: {e}"),
    })?;
    if checkpoint.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: format!(
                "unsupported checkpoint format version {} (expected {})",
                checkpoint.format_version, CHECKPOINT_FORMAT_VERSION
            ),
        });
    }
    checkpoint.params.validate_shapes().map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        msg: format!("inconsistent checkpoint tensors: {e}"),
    })?;
    Ok(checkpoint)
}
