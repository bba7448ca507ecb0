//! A small dense classifier with hand-written backpropagation.
//!
//! Layers compute `z = a W^T + b` with `W` stored `out x in`; ReLU sits
//! between layers and the last layer emits logits. Training uses classic
//! momentum, `v <- mu v + g; theta <- theta - lr v`.
//!
//! # Checkpoint format
//!
//! [`Mlp::to_json`] writes a UTF-8 JSON object:
//!
//! ```text
//! {
//!   "format": "dcfair-mlp",
//!   "version": 1,
//!   "layers": [
//!     { "inputs": 10, "outputs": 128,
//!       "weights": [ ...outputs*inputs numbers, row-major (row = output unit)... ],
//!       "biases": [ ...outputs numbers... ] },
//!     ...
//!   ]
//! }
//! ```
//!
//! Numbers are written with shortest round-trip formatting, so loading a
//! checkpoint restores every parameter bit for bit. Momentum buffers are
//! not stored; a loaded model starts with zero velocity. Readers reject any
//! other `format` string or a `version` greater than the one they know.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CHECKPOINT_FORMAT: &str = "dcfair-mlp";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("network needs at least an input and an output size, got {0:?}")]
    InvalidArchitecture(Vec<usize>),

    #[error("input has {found} features, model expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("{what}: expected {expected_rows}x{expected_cols}, got {rows}x{cols}")]
    ShapeMismatch {
        what: &'static str,
        expected_rows: usize,
        expected_cols: usize,
        rows: usize,
        cols: usize,
    },

    #[error("label {label} at row {row} is outside 0..{classes}")]
    LabelOutOfRange { row: usize, label: usize, classes: usize },

    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NnError>;

fn check_shape(what: &'static str, m: &Array2<f64>, rows: usize, cols: usize) -> Result<()> {
    if m.dim() != (rows, cols) {
        return Err(NnError::ShapeMismatch {
            what,
            expected_rows: rows,
            expected_cols: cols,
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
    vel_w: Array2<f64>,
    vel_b: Array1<f64>,
}

impl DenseLayer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self::from_params(Array2::zeros((outputs, inputs)), Array1::zeros(outputs))
    }

    fn from_params(weights: Array2<f64>, biases: Array1<f64>) -> Self {
        let vel_w = Array2::zeros(weights.raw_dim());
        let vel_b = Array1::zeros(biases.raw_dim());
        Self {
            weights,
            biases,
            vel_w,
            vel_b,
        }
    }

    /// Uniform in `+-sqrt(6 / (in + out))`, zero biases.
    pub fn xavier(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let bound = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = Array2::from_shape_fn((outputs, inputs), |_| rng.random_range(-bound..=bound));
        Self::from_params(weights, Array1::zeros(outputs))
    }

    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }

    fn apply(&self, a: ArrayView2<f64>) -> Array2<f64> {
        a.dot(&self.weights.t()) + self.biases.view().insert_axis(Axis(0))
    }
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Input to each layer; `activations[0]` is the batch itself.
    pub activations: Vec<Array2<f64>>,
    /// `a W^T + b` of each layer; the last entry holds the logits.
    pub pre_activations: Vec<Array2<f64>>,
    pub probs: Array2<f64>,
}

impl ForwardTrace {
    pub fn logits(&self) -> &Array2<f64> {
        self.pre_activations.last().expect("at least one layer")
    }

    pub fn n(&self) -> usize {
        self.probs.nrows()
    }
}

/// Upstream gradient handed to [`Mlp::backward`].
#[derive(Debug, Clone)]
pub enum OutputGrad {
    Logits(Array2<f64>),
    Probs(Array2<f64>),
}

/// `dL/dW` and `dL/db` for every layer, in layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn max_abs(&self) -> f64 {
        self.weights
            .iter()
            .flat_map(|w| w.iter())
            .chain(self.biases.iter().flat_map(|b| b.iter()))
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<DenseLayer>,
}

impl Mlp {
    /// `sizes = [input, hidden..., classes]`, Xavier-initialized from `seed`.
    pub fn new(sizes: &[usize], seed: u64) -> Result<Self> {
        Self::validate_sizes(sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = sizes.windows(2).map(|w| DenseLayer::xavier(w[0], w[1], &mut rng)).collect();
        Ok(Self { layers })
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        Self::validate_sizes(sizes)?;
        let layers = sizes.windows(2).map(|w| DenseLayer::zeros(w[0], w[1])).collect();
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(NnError::InvalidArchitecture(vec![]));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(NnError::Checkpoint(format!(
                    "layer {} takes {} inputs but layer {i} emits {}",
                    i + 1,
                    pair[1].inputs(),
                    pair[0].outputs()
                )));
            }
        }
        for layer in &layers {
            if layer.biases.len() != layer.outputs() {
                return Err(NnError::Checkpoint(format!(
                    "bias length {} does not match {} outputs",
                    layer.biases.len(),
                    layer.outputs()
                )));
            }
        }
        Ok(Self { layers })
    }

    fn validate_sizes(sizes: &[usize]) -> Result<()> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(NnError::InvalidArchitecture(sizes.to_vec()));
        }
        Ok(())
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    /// `[input, hidden..., classes]`.
    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(DenseLayer::outputs))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn num_classes(&self) -> usize {
        self.layers.last().expect("at least one layer").outputs()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<ForwardTrace> {
        if x.ncols() != self.input_dim() {
            return Err(NnError::DimensionMismatch {
                expected: self.input_dim(),
                found: x.ncols(),
            });
        }
        let depth = self.layers.len();
        let mut activations = Vec::with_capacity(depth);
        let mut pre_activations = Vec::with_capacity(depth);
        let mut current = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.apply(current.view());
            activations.push(current);
            current = if i + 1 < depth { z.mapv(|v| v.max(0.0)) } else { Array2::zeros((0, 0)) };
            pre_activations.push(z);
        }
        let probs = softmax(pre_activations.last().expect("at least one layer"));
        Ok(ForwardTrace {
            activations,
            pre_activations,
            probs,
        })
    }

    pub fn backward(&self, trace: &ForwardTrace, grad: OutputGrad) -> Result<Gradients> {
        let (n, c) = (trace.n(), self.num_classes());
        let mut delta = match grad {
            OutputGrad::Logits(g) => {
                check_shape("logit gradient", &g, n, c)?;
                g
            }
            OutputGrad::Probs(g) => {
                check_shape("probability gradient", &g, n, c)?;
                softmax_backward(&trace.probs, &g)
            }
        };
        let depth = self.layers.len();
        let mut weights = vec![Array2::zeros((0, 0)); depth];
        let mut biases = vec![Array1::zeros(0); depth];
        for i in (0..depth).rev() {
            weights[i] = delta.t().dot(&trace.activations[i]);
            biases[i] = delta.sum_axis(Axis(0));
            if i > 0 {
                let mut upstream = delta.dot(&self.layers[i].weights);
                Zip::from(&mut upstream)
                    .and(&trace.pre_activations[i - 1])
                    .for_each(|d, &z| {
                        if z <= 0.0 {
                            *d = 0.0;
                        }
                    });
                delta = upstream;
            }
        }
        Ok(Gradients { weights, biases })
    }

    /// Classic momentum: `v <- momentum v + g; theta <- theta - lr v`.
    pub fn sgd_momentum_step(&mut self, grads: &Gradients, lr: f64, momentum: f64) -> Result<()> {
        if grads.weights.len() != self.layers.len() || grads.biases.len() != self.layers.len() {
            return Err(NnError::InvalidArchitecture(vec![grads.weights.len(), self.layers.len()]));
        }
        for (layer, (gw, gb)) in self.layers.iter_mut().zip(grads.weights.iter().zip(grads.biases.iter())) {
            check_shape("weight gradient", gw, layer.outputs(), layer.inputs())?;
            if gb.len() != layer.outputs() {
                return Err(NnError::ShapeMismatch {
                    what: "bias gradient",
                    expected_rows: layer.outputs(),
                    expected_cols: 1,
                    rows: gb.len(),
                    cols: 1,
                });
            }
            Zip::from(&mut layer.weights)
                .and(&mut layer.vel_w)
                .and(gw)
                .for_each(|p, v, &g| {
                    *v = momentum * *v + g;
                    *p -= lr * *v;
                });
            Zip::from(&mut layer.biases)
                .and(&mut layer.vel_b)
                .and(gb)
                .for_each(|p, v, &g| {
                    *v = momentum * *v + g;
                    *p -= lr * *v;
                });
        }
        Ok(())
    }

    pub fn reset_momentum(&mut self) {
        for layer in &mut self.layers {
            layer.vel_w.fill(0.0);
            layer.vel_b.fill(0.0);
        }
    }

    /// Argmax class per row; ties go to the lowest index.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.forward(x)?.probs))
    }

    pub fn to_json(&self) -> String {
        let ckpt = Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            layers: self
                .layers
                .iter()
                .map(|l| LayerRecord {
                    inputs: l.inputs(),
                    outputs: l.outputs(),
                    weights: l.weights.iter().copied().collect(),
                    biases: l.biases.to_vec(),
                })
                .collect(),
        };
        serde_json::to_string(&ckpt).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(text).map_err(|e| NnError::Checkpoint(e.to_string()))?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(NnError::Checkpoint(format!("unknown format {:?}", ckpt.format)));
        }
        if ckpt.version == 0 || ckpt.version > CHECKPOINT_VERSION {
            return Err(NnError::Checkpoint(format!("unsupported version {}", ckpt.version)));
        }
        let layers = ckpt
            .layers
            .into_iter()
            .enumerate()
            .map(|(i, rec)| {
                let weights = Array2::from_shape_vec((rec.outputs, rec.inputs), rec.weights)
                    .map_err(|e| NnError::Checkpoint(format!("layer {i} weights: {e}")))?;
                if weights.iter().chain(rec.biases.iter()).any(|v| !v.is_finite()) {
                    return Err(NnError::Checkpoint(format!("layer {i} has non-finite parameters")));
                }
                Ok(DenseLayer::from_params(weights, Array1::from(rec.biases)))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_layers(layers)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    layers: Vec<LayerRecord>,
}

#[derive(Serialize, Deserialize)]
struct LayerRecord {
    inputs: usize,
    outputs: usize,
    weights: Vec<f64>,
    biases: Vec<f64>,
}

/// Row-wise softmax with max subtraction.
pub fn softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let total = row.sum();
        row /= total;
    }
    out
}

/// Pulls `dL/dp` back to `dL/dz` through the softmax:
/// `dz_i = p_i (dp_i - sum_j p_j dp_j)`.
pub fn softmax_backward(probs: &Array2<f64>, dprobs: &Array2<f64>) -> Array2<f64> {
    let inner = (probs * dprobs).sum_axis(Axis(1)).insert_axis(Axis(1));
    probs * &(dprobs - &inner)
}

/// Mean `-log p[label]` (log clamped away from zero) and its gradient with
/// respect to the logits, `(p - onehot) / n`.
pub fn softmax_cross_entropy(probs: &Array2<f64>, labels: &[usize]) -> Result<(f64, Array2<f64>)> {
    let (n, c) = probs.dim();
    if labels.len() != n {
        return Err(NnError::ShapeMismatch {
            what: "labels",
            expected_rows: n,
            expected_cols: 1,
            rows: labels.len(),
            cols: 1,
        });
    }
    let nf = n as f64;
    let mut grad = probs / nf;
    let mut loss = 0.0;
    for (row, &label) in labels.iter().enumerate() {
        if label >= c {
            return Err(NnError::LabelOutOfRange { row, label, classes: c });
        }
        loss -= probs[[row, label]].max(f64::MIN_POSITIVE).ln();
        grad[[row, label]] -= 1.0 / nf;
    }
    Ok((loss / nf, grad))
}

pub fn argmax_rows(m: &Array2<f64>) -> Vec<usize> {
    m.rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}
