//! Dense sigmoid network with hand-written backpropagation, binary
//! cross-entropy and Adam.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Predictions are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` inside the loss.
pub const PROB_CLAMP: f64 = 1e-7;

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    /// fan_out × fan_in
    pub weights: Array2<f64>,
    /// fan_out
    pub bias: Array1<f64>,
}

impl LayerParams {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self { weights: Array2::zeros((fan_out, fan_in)), bias: Array1::zeros(fan_out) }
    }

    pub fn fan_in(&self) -> usize {
        self.weights.ncols()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.nrows()
    }

    /// Crossbar orientation: `(fan_in + 1) × fan_out`, inputs on rows and the
    /// bias as the last row.
    pub fn augmented(&self) -> Array2<f64> {
        let (fan_in, fan_out) = (self.fan_in(), self.fan_out());
        Array2::from_shape_fn(
            (fan_in + 1, fan_out),
            |(r, c)| {
                if r < fan_in {
                    self.weights[[c, r]]
                } else {
                    self.bias[c]
                }
            },
        )
    }

    /// Inverse of [`LayerParams::augmented`].
    pub fn from_augmented(m: &Array2<f64>) -> Self {
        let fan_in = m.nrows() - 1;
        Self { weights: m.slice(ndarray::s![..fan_in, ..]).t().to_owned(), bias: m.row(fan_in).to_owned() }
    }

    fn is_finite(&self) -> bool {
        self.weights.iter().chain(self.bias.iter()).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    pub layers: Vec<LayerParams>,
}

impl DenseNet {
    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation for weights and biases.
    pub fn init<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        check_sizes(sizes)?;
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = (1.0 / fan_in as f64).sqrt();
                let weights = Array2::from_shape_simple_fn((fan_out, fan_in), || rng.random_range(-bound..bound));
                let bias = Array1::from_shape_simple_fn(fan_out, || rng.random_range(-bound..bound));
                LayerParams { weights, bias }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        check_sizes(sizes)?;
        Ok(Self { layers: sizes.windows(2).map(|w| LayerParams::zeros(w[0], w[1])).collect() })
    }

    /// Layer widths, input first.
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].fan_in()];
        s.extend(self.layers.iter().map(LayerParams::fan_out));
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidInput("network has no layers".into()));
        }
        for (i, pair) in self.layers.windows(2).enumerate() {
            if pair[0].fan_out() != pair[1].fan_in() {
                return Err(Error::InvalidInput(format!(
                    "layer {i} outputs {} values but layer {} expects {}",
                    pair[0].fan_out(),
                    i + 1,
                    pair[1].fan_in()
                )));
            }
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.bias.len() != l.fan_out() {
                return Err(Error::InvalidInput(format!("layer {i} bias length mismatch")));
            }
            if !l.is_finite() {
                return Err(Error::InvalidInput(format!("layer {i} has non-finite parameters")));
            }
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Class decisions (`output > 0.5`) for a batch.
    pub fn classify(&self, x: &Array2<f64>) -> Vec<bool> {
        forward(self, x).0.column(0).iter().map(|p| *p > 0.5).collect()
    }
}

fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(Error::InvalidInput(format!("invalid architecture {sizes:?}")));
    }
    Ok(())
}

/// Values kept from a forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Weights the pass was computed with.
    weights: Vec<Array2<f64>>,
    /// Input of each layer; `activations[0]` is the batch itself.
    activations: Vec<Array2<f64>>,
    /// Pre-activations of each layer.
    pub pre_activations: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.activations.last().expect("cache holds the output")
    }
}

/// Sigmoid after every layer, output included. Returns `batch × outputs`.
pub fn forward(net: &DenseNet, x: &Array2<f64>) -> (Array2<f64>, ForwardCache) {
    let mut activations = vec![x.to_owned()];
    let mut pre_activations = Vec::with_capacity(net.layers.len());
    for layer in &net.layers {
        let input = activations.last().expect("non-empty");
        let z = input.dot(&layer.weights.t()) + &layer.bias;
        activations.push(z.mapv(sigmoid));
        pre_activations.push(z);
    }
    let out = activations.last().expect("non-empty").clone();
    let weights = net.layers.iter().map(|l| l.weights.clone()).collect();
    (out, ForwardCache { weights, activations, pre_activations })
}

/// Mean binary cross-entropy over all entries of `y_hat`.
pub fn bce_loss(y_hat: &Array2<f64>, y: &Array1<f64>) -> f64 {
    assert_eq!(y_hat.nrows(), y.len(), "prediction and label counts differ");
    let mut total = 0.0;
    for (row, t) in y_hat.rows().into_iter().zip(y.iter()) {
        for p in row {
            let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            total -= t * p.ln() + (1.0 - t) * (1.0 - p).ln();
        }
    }
    total / y_hat.len() as f64
}

/// Gradients, shaped like the network's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerParams>,
}

impl Gradients {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Self { layers: net.layers.iter().map(|l| LayerParams::zeros(l.fan_in(), l.fan_out())).collect() }
    }
}

/// Exact gradient of `bce_loss(forward(x), y)` with respect to every parameter.
pub fn backward(cache: &ForwardCache, y: &Array1<f64>) -> Gradients {
    let out = cache.output();
    let count = out.len() as f64;
    // dL/dz at the output. The sigmoid derivative cancels against the BCE
    // derivative, except where the clamp flattens the loss.
    let mut delta = Array2::zeros(out.dim());
    Zip::indexed(&mut delta).and(out).for_each(|(r, _), d, p| {
        *d = if *p < PROB_CLAMP || *p > 1.0 - PROB_CLAMP { 0.0 } else { (p - y[r]) / count };
    });

    let depth = cache.weights.len();
    let mut layers = Vec::with_capacity(depth);
    for l in (0..depth).rev() {
        let input = &cache.activations[l];
        let weights = delta.t().dot(input);
        let bias = delta.sum_axis(Axis(0));
        if l > 0 {
            let back = delta.dot(&cache.weights[l]);
            delta = back * input.mapv(|a| a * (1.0 - a));
        }
        layers.push(LayerParams { weights, bias });
    }
    layers.reverse();
    Gradients { layers }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 0.01, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    first: Vec<LayerParams>,
    second: Vec<LayerParams>,
}

impl AdamState {
    pub fn new(net: &DenseNet, config: AdamConfig) -> Self {
        let zeros = Gradients::zeros_like(net).layers;
        Self { config, step: 0, first: zeros.clone(), second: zeros }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(net: &mut DenseNet, grads: &Gradients, state: &mut AdamState) {
    state.step += 1;
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    let update = |p: &mut f64, g: &f64, m: &mut f64, v: &mut f64| {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    };
    for (((layer, g), m), v) in net.layers.iter_mut().zip(&grads.layers).zip(&mut state.first).zip(&mut state.second) {
        Zip::from(&mut layer.weights).and(&g.weights).and(&mut m.weights).and(&mut v.weights).for_each(update);
        Zip::from(&mut layer.bias).and(&g.bias).and(&mut m.bias).and(&mut v.bias).for_each(update);
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointLayer {
    fan_in: usize,
    fan_out: usize,
    /// Row-major fan_out × fan_in.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    layers: Vec<CheckpointLayer>,
}

impl DenseNet {
    pub fn to_checkpoint_json(&self) -> String {
        let ckpt = Checkpoint {
            layers: self
                .layers
                .iter()
                .map(|l| CheckpointLayer {
                    fan_in: l.fan_in(),
                    fan_out: l.fan_out(),
                    weights: l.weights.iter().copied().collect(),
                    bias: l.bias.to_vec(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&ckpt).expect("checkpoint serializes")
    }

    pub fn from_checkpoint_json(text: &str) -> Result<Self> {
        let ckpt: Checkpoint =
            serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("checkpoint: {e}")))?;
        let layers = ckpt
            .layers
            .into_iter()
            .enumerate()
            .map(|(i, l)| {
                let weights = Array2::from_shape_vec((l.fan_out, l.fan_in), l.weights).map_err(|_| {
                    Error::InvalidInput(format!(
                        "checkpoint layer {i}: weights do not match {}x{}",
                        l.fan_out, l.fan_in
                    ))
                })?;
                if l.bias.len() != l.fan_out {
                    return Err(Error::InvalidInput(format!("checkpoint layer {i}: bias length mismatch")));
                }
                Ok(LayerParams { weights, bias: Array1::from(l.bias) })
            })
            .collect::<Result<Vec<_>>>()?;
        let net = Self { layers };
        net.validate()?;
        Ok(net)
    }
}

pub fn save_checkpoint(net: &DenseNet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = net.to_checkpoint_json();
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<DenseNet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    DenseNet::from_checkpoint_json(&text).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}
