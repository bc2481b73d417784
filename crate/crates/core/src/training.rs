//! Regular and hardware-aware training loops.
//!
//! Hardware-aware training draws one simulated transfer per batch and uses
//! the transferred weights in the forward pass. The difference
//! `epsilon = phi' - phi` is treated as a constant, so gradients flow to the
//! clean parameters `phi`, which are the ones updated and returned. Gradients
//! of weights that landed on a stuck device are zeroed for that batch.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::LabeledSet;
use crate::error::{Error, Result};
use crate::nn::{
    adam_step, backward, bce_loss, forward, AdamConfig, AdamState, DenseNet, ForwardCache, Gradients, LayerParams,
};
use crate::rng::{stream, Purpose, SimRng};
use crate::transfer::{simulate_transfer, Sources, TileLayout, TransferParams, WeightRangeSnapshot, DEFAULT_TILE};
use crate::variability::VariabilityModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: usize,
    /// HRS-stuck fraction `x`.
    pub hrs_fraction: f64,
    /// LRS-stuck fraction `y`.
    pub lrs_fraction: f64,
    pub sources: Sources,
    pub seed: u64,
    /// Layer widths, input first.
    pub architecture: Vec<usize>,
    pub tile_rows: usize,
    pub tile_cols: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            batch_size: 256,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            epochs: 500,
            hrs_fraction: 0.005,
            lrs_fraction: 0.005,
            sources: Sources::ALL,
            seed: 1,
            architecture: vec![2, 8, 1],
            tile_rows: DEFAULT_TILE,
            tile_cols: DEFAULT_TILE,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.eps > 0.0) {
            return bad("Adam needs 0 <= beta1, beta2 < 1 and eps > 0".into());
        }
        if self.architecture.len() < 2 || self.architecture.contains(&0) {
            return bad(format!("invalid architecture {:?}", self.architecture));
        }
        if self.tile_rows == 0 || self.tile_cols == 0 {
            return bad("tile dimensions must be >= 1".into());
        }
        self.transfer_params().validate().map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, beta1: self.beta1, beta2: self.beta2, eps: self.eps }
    }

    pub fn transfer_params(&self) -> TransferParams {
        TransferParams { hrs_fraction: self.hrs_fraction, lrs_fraction: self.lrs_fraction, sources: self.sources }
    }

    pub fn layouts(&self) -> Result<Vec<TileLayout>> {
        layouts_for(&self.architecture, self.tile_rows, self.tile_cols)
    }
}

/// One tile layout per layer of an architecture.
pub fn layouts_for(architecture: &[usize], tile_rows: usize, tile_cols: usize) -> Result<Vec<TileLayout>> {
    architecture.windows(2).map(|w| TileLayout::for_layer(w[0], w[1], tile_rows, tile_cols)).collect()
}

/// Per-layer transfer noise, in the crossbar orientation of
/// [`LayerParams::augmented`].
#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonSample {
    /// `phi' - phi`; adding it to the clean parameters yields the transferred ones.
    pub epsilon: Vec<Array2<f64>>,
    pub stuck_mask: Vec<Array2<bool>>,
    /// Ranges the conversion used; empty when every source is disabled.
    pub snapshots: Vec<WeightRangeSnapshot>,
}

impl EpsilonSample {
    pub fn zeros(net: &DenseNet) -> Self {
        Self {
            epsilon: net.layers.iter().map(|l| Array2::zeros((l.fan_in() + 1, l.fan_out()))).collect(),
            stuck_mask: net.layers.iter().map(|l| Array2::from_elem((l.fan_in() + 1, l.fan_out()), false)).collect(),
            snapshots: Vec::new(),
        }
    }

    /// Fraction of masked weights in each layer.
    pub fn stuck_fractions(&self) -> Vec<f64> {
        self.stuck_mask.iter().map(|m| m.iter().filter(|s| **s).count() as f64 / m.len() as f64).collect()
    }

    /// `phi + epsilon` for every layer.
    pub fn apply(&self, net: &DenseNet) -> DenseNet {
        DenseNet {
            layers: net
                .layers
                .iter()
                .zip(&self.epsilon)
                .map(|(l, e)| LayerParams::from_augmented(&(l.augmented() + e)))
                .collect(),
        }
    }
}

/// Simulates one transfer of every layer and records `phi' - phi`.
///
/// With every source disabled the transfer is ideal and epsilon is exactly zero.
pub fn sample_epsilon<R: Rng + ?Sized>(
    net: &DenseNet,
    layouts: &[TileLayout],
    model: &VariabilityModel,
    params: &TransferParams,
    rng: &mut R,
) -> Result<EpsilonSample> {
    if layouts.len() != net.layers.len() {
        return Err(Error::InvalidInput(format!("{} layouts for {} layers", layouts.len(), net.layers.len())));
    }
    if !params.sources.any() {
        params.validate()?;
        return Ok(EpsilonSample::zeros(net));
    }
    let mut sample = EpsilonSample { epsilon: Vec::new(), stuck_mask: Vec::new(), snapshots: Vec::new() };
    for (layer, layout) in net.layers.iter().zip(layouts) {
        let phi = layer.augmented();
        sample.snapshots.push(WeightRangeSnapshot::of(&phi)?);
        let outcome = simulate_transfer(&phi, layout, model, params, rng)?;
        sample.epsilon.push(outcome.phi_prime - &phi);
        sample.stuck_mask.push(outcome.stuck_mask);
    }
    Ok(sample)
}

/// Network after one simulated transfer; the ideal copy when no source is enabled.
pub fn transfer_network<R: Rng + ?Sized>(
    net: &DenseNet,
    layouts: &[TileLayout],
    model: &VariabilityModel,
    params: &TransferParams,
    rng: &mut R,
) -> Result<DenseNet> {
    if !params.sources.any() {
        return Ok(net.clone());
    }
    let mut layers = Vec::with_capacity(net.layers.len());
    for (layer, layout) in net.layers.iter().zip(layouts) {
        let outcome = simulate_transfer(&layer.augmented(), layout, model, params, rng)?;
        layers.push(LayerParams::from_augmented(&outcome.phi_prime));
    }
    Ok(DenseNet { layers })
}

/// Forward pass through `phi + epsilon`.
pub fn hw_forward(net: &DenseNet, sample: &EpsilonSample, x: &Array2<f64>) -> (Array2<f64>, ForwardCache) {
    forward(&sample.apply(net), x)
}

/// Backpropagation with gradients zeroed at stuck positions. A mask entry on
/// the bias row zeroes that output's bias gradient.
pub fn masked_backward(cache: &ForwardCache, y: &Array1<f64>, stuck_mask: &[Array2<bool>]) -> Gradients {
    let mut grads = backward(cache, y);
    for (g, mask) in grads.layers.iter_mut().zip(stuck_mask) {
        let fan_in = g.fan_in();
        for ((r, c), stuck) in mask.indexed_iter() {
            if *stuck {
                if r < fan_in {
                    g.weights[[c, r]] = 0.0;
                } else {
                    g.bias[c] = 0.0;
                }
            }
        }
    }
    grads
}

/// What an observer sees after each optimizer step.
pub struct BatchEvent<'a> {
    pub epoch: usize,
    pub batch: usize,
    /// Parameters the batch was evaluated with.
    pub params: &'a DenseNet,
    /// Parameters after the update.
    pub updated: &'a DenseNet,
    /// `None` for regular training.
    pub sample: Option<&'a EpsilonSample>,
    pub loss: f64,
}

pub trait TrainObserver {
    fn on_batch(&mut self, event: &BatchEvent<'_>);
}

impl TrainObserver for () {
    fn on_batch(&mut self, _: &BatchEvent<'_>) {}
}

impl<F: FnMut(&BatchEvent<'_>)> TrainObserver for F {
    fn on_batch(&mut self, event: &BatchEvent<'_>) {
        self(event)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingRun {
    pub net: DenseNet,
    /// Mean batch loss per epoch.
    pub epoch_losses: Vec<f64>,
    /// Per layer, the average fraction of weights on a stuck device per batch.
    pub mean_stuck_fraction: Vec<f64>,
    pub batches: usize,
}

pub fn train_regular(config: &TrainingConfig, train: &LabeledSet) -> Result<TrainingRun> {
    train_loop(config, train, None, &mut ())
}

pub fn train_hardware_aware(
    config: &TrainingConfig,
    model: &VariabilityModel,
    train: &LabeledSet,
) -> Result<TrainingRun> {
    train_loop(config, train, Some(model), &mut ())
}

/// Shared loop. `model = None` trains the regular network.
///
/// Initialisation, shuffling and transfer noise use separate random streams,
/// so a hardware-aware run with every source disabled consumes exactly the
/// same randomness as a regular run.
pub fn train_loop(
    config: &TrainingConfig,
    train: &LabeledSet,
    model: Option<&VariabilityModel>,
    observer: &mut dyn TrainObserver,
) -> Result<TrainingRun> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    if config.architecture[0] != train.points.ncols() {
        return Err(Error::InvalidConfig(format!(
            "architecture expects {} inputs, data has {}",
            config.architecture[0],
            train.points.ncols()
        )));
    }
    let mut init_rng = stream(config.seed, Purpose::Init);
    let mut shuffle_rng = stream(config.seed, Purpose::Shuffle);
    let mut noise_rng: SimRng = stream(config.seed, Purpose::TrainingNoise);

    let mut net = DenseNet::init(&config.architecture, &mut init_rng)?;
    let mut adam = AdamState::new(&net, config.adam());
    let layouts = config.layouts()?;
    let params = config.transfer_params();

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut stuck_sums = vec![0.0; net.layers.len()];
    let mut batches = 0usize;

    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut epoch_batches = 0usize;
        for (batch, idx) in order.chunks(config.batch_size).enumerate() {
            let data = train.select(idx);
            let y = data.targets();
            let (loss, grads, sample) = match model {
                None => {
                    let (y_hat, cache) = forward(&net, &data.points);
                    (bce_loss(&y_hat, &y), backward(&cache, &y), None)
                }
                Some(model) => {
                    let sample = sample_epsilon(&net, &layouts, model, &params, &mut noise_rng)?;
                    let (y_hat, cache) = hw_forward(&net, &sample, &data.points);
                    let grads = masked_backward(&cache, &y, &sample.stuck_mask);
                    (bce_loss(&y_hat, &y), grads, Some(sample))
                }
            };
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, batch, loss });
            }
            if let Some(s) = &sample {
                for (acc, f) in stuck_sums.iter_mut().zip(s.stuck_fractions()) {
                    *acc += f;
                }
            }
            let before = net.clone();
            adam_step(&mut net, &grads, &mut adam);
            observer.on_batch(&BatchEvent {
                epoch,
                batch,
                params: &before,
                updated: &net,
                sample: sample.as_ref(),
                loss,
            });
            loss_sum += loss;
            epoch_batches += 1;
            batches += 1;
        }
        epoch_losses.push(loss_sum / epoch_batches as f64);
    }
    if net.validate().is_err() {
        return Err(Error::Diverged { epoch: config.epochs, batch: 0, loss: f64::NAN });
    }

    let mean_stuck_fraction = stuck_sums.iter().map(|s| s / batches.max(1) as f64).collect();
    Ok(TrainingRun { net, epoch_losses, mean_stuck_fraction, batches })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::make_half_moons;

    fn small_config() -> TrainingConfig {
        TrainingConfig { epochs: 3, batch_size: 16, ..TrainingConfig::default() }
    }

    #[test]
    fn config_validation() {
        assert!(TrainingConfig::default().validate().is_ok());
        let bad = TrainingConfig { batch_size: 0, ..TrainingConfig::default() };
        assert!(bad.validate().is_err());
        let bad = TrainingConfig { hrs_fraction: 0.7, lrs_fraction: 0.6, ..TrainingConfig::default() };
        assert!(bad.validate().is_err());
        let bad = TrainingConfig { architecture: vec![2], ..TrainingConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn zero_epsilon_forward_matches_clean_forward() {
        let mut rng = stream(1, Purpose::Custom("training-test"));
        let net = DenseNet::init(&[2, 8, 1], &mut rng).unwrap();
        let x = ndarray::array![[0.1, 0.2], [-1.0, 0.5]];
        let (a, _) = forward(&net, &x);
        let (b, _) = hw_forward(&net, &EpsilonSample::zeros(&net), &x);
        assert_eq!(a, b);
    }

    #[test]
    fn negated_epsilon_zeroes_the_network() {
        let mut rng = stream(2, Purpose::Custom("training-test"));
        let net = DenseNet::init(&[2, 8, 1], &mut rng).unwrap();
        let mut sample = EpsilonSample::zeros(&net);
        sample.epsilon = net.layers.iter().map(|l| -l.augmented()).collect();
        let (y, _) = hw_forward(&net, &sample, &ndarray::array![[3.0, -2.0]]);
        assert_eq!(y[[0, 0]], 0.5);
    }

    #[test]
    fn empty_training_set_is_rejected() {
        let empty = LabeledSet::new(Array2::zeros((0, 2)), vec![]).unwrap();
        assert!(train_regular(&small_config(), &empty).is_err());
    }

    #[test]
    fn input_width_must_match() {
        let data = make_half_moons(20, 0.1, 1).unwrap();
        let cfg = TrainingConfig { architecture: vec![3, 4, 1], ..small_config() };
        assert!(matches!(train_regular(&cfg, &data), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn layout_count_must_match_layers() {
        let mut rng = stream(3, Purpose::Custom("training-test"));
        let net = DenseNet::init(&[2, 8, 1], &mut rng).unwrap();
        let model = VariabilityModel::synthetic_default();
        let layouts = layouts_for(&[2, 8], 8, 8).unwrap();
        assert!(sample_epsilon(&net, &layouts, &model, &TransferParams::default(), &mut rng).is_err());
    }

    #[test]
    fn all_zero_layer_cannot_be_transferred() {
        let net = DenseNet::zeros(&[2, 8, 1]).unwrap();
        let model = VariabilityModel::synthetic_default();
        let layouts = layouts_for(&[2, 8, 1], 8, 8).unwrap();
        let mut rng = stream(4, Purpose::Custom("training-test"));
        assert!(matches!(
            sample_epsilon(&net, &layouts, &model, &TransferParams::default(), &mut rng),
            Err(Error::ZeroWeights)
        ));
    }
}
