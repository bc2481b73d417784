//! One simulated ex-situ transfer of a weight matrix onto a differential pair
//! of crossbar devices, and back into the weight domain.
//!
//! Pipeline: split the signed weights into two non-negative components, map
//! each linearly onto the conductance window, substitute stuck devices,
//! perturb the remaining devices with tuning imprecision and biasing-scheme
//! disturbances, then map the conductance difference back to weights.

mod layout;

use ndarray::{Array2, Zip};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use layout::{Polarity, TileLayout, DEFAULT_TILE};

use crate::error::{Error, Result};
use crate::variability::{sample_bias, sample_stuck_hrs, sample_stuck_lrs, VariabilityModel};

/// Achievable conductance window, µS.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConductanceRange {
    pub g_min: f64,
    pub g_max: f64,
}

impl Default for ConductanceRange {
    fn default() -> Self {
        Self { g_min: 100.0, g_max: 400.0 }
    }
}

impl ConductanceRange {
    pub fn validate(&self) -> Result<()> {
        if !(self.g_min.is_finite() && self.g_max.is_finite() && 0.0 < self.g_min && self.g_min < self.g_max) {
            return Err(Error::InvalidModel(format!(
                "conductance range must satisfy 0 < g_min < g_max, got [{}, {}]",
                self.g_min, self.g_max
            )));
        }
        Ok(())
    }

    pub fn span(&self) -> f64 {
        self.g_max - self.g_min
    }
}

/// Extremes of a weight matrix, taken before conversion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightRangeSnapshot {
    pub phi_min: f64,
    pub phi_max: f64,
    pub phi_absmax: f64,
}

impl WeightRangeSnapshot {
    pub fn of(phi: &Array2<f64>) -> Result<Self> {
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("weight matrix has non-finite entries".into()));
        }
        let phi_min = phi.iter().copied().fold(f64::INFINITY, f64::min);
        let phi_max = phi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let phi_absmax = phi_min.abs().max(phi_max.abs());
        if phi_absmax.is_nan() || phi_absmax <= 0.0 {
            return Err(Error::ZeroWeights);
        }
        Ok(Self { phi_min, phi_max, phi_absmax })
    }
}

/// Which variability sources are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sources {
    pub tuning: bool,
    pub bias: bool,
    pub stuck: bool,
}

impl Sources {
    pub const ALL: Sources = Sources { tuning: true, bias: true, stuck: true };
    pub const NONE: Sources = Sources { tuning: false, bias: false, stuck: false };

    pub fn any(&self) -> bool {
        self.tuning || self.bias || self.stuck
    }
}

impl Default for Sources {
    fn default() -> Self {
        Self::ALL
    }
}

/// Stuck fractions and enabled sources for a simulated transfer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferParams {
    /// Probability that a device component is stuck in HRS.
    pub hrs_fraction: f64,
    /// Probability that a device component is stuck in LRS.
    pub lrs_fraction: f64,
    pub sources: Sources,
}

impl Default for TransferParams {
    fn default() -> Self {
        Self { hrs_fraction: 0.005, lrs_fraction: 0.005, sources: Sources::ALL }
    }
}

impl TransferParams {
    pub fn disabled() -> Self {
        Self { hrs_fraction: 0.0, lrs_fraction: 0.0, sources: Sources::NONE }
    }

    pub fn validate(&self) -> Result<()> {
        check_fractions(self.hrs_fraction, self.lrs_fraction)
    }

    /// `(x, y)` after the stuck toggle is applied.
    pub fn effective_fractions(&self) -> (f64, f64) {
        if self.sources.stuck {
            (self.hrs_fraction, self.lrs_fraction)
        } else {
            (0.0, 0.0)
        }
    }
}

fn check_fractions(x: f64, y: f64) -> Result<()> {
    if !(x >= 0.0 && y >= 0.0 && x + y <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "stuck fractions need x, y >= 0 and x + y <= 1, got x = {x}, y = {y}"
        )));
    }
    Ok(())
}

/// Splits `phi` into non-negative parts with `plus - minus == phi`.
pub fn split_signed(phi: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    (phi.mapv(|v| v.max(0.0)), phi.mapv(|v| (-v).max(0.0)))
}

/// Maps a non-negative component linearly from `[0, phi_absmax]` onto `[g_min, g_max]`.
pub fn to_conductance(
    component: &Array2<f64>,
    snap: &WeightRangeSnapshot,
    range: &ConductanceRange,
) -> Result<Array2<f64>> {
    if snap.phi_absmax.is_nan() || snap.phi_absmax <= 0.0 {
        return Err(Error::ZeroWeights);
    }
    if component.iter().any(|v| *v < 0.0) {
        return Err(Error::InvalidInput("weight component must be non-negative".into()));
    }
    let span = range.span();
    Ok(component.mapv(|p| p / snap.phi_absmax * span + range.g_min))
}

/// Maps a conductance difference back to the weight domain.
///
/// `phi' = ((g+ - g-) - (g_min - g_max)) / (2 (g_max - g_min)) * (phi_max - phi_min) + phi_min`.
/// This is the identity after [`to_conductance`] only when the snapshot is
/// symmetric (`phi_min = -phi_max`); otherwise it composes to the affine map
/// `phi -> (phi / phi_absmax + 1) / 2 * (phi_max - phi_min) + phi_min`.
pub fn from_conductance(
    g_plus: &Array2<f64>,
    g_minus: &Array2<f64>,
    snap: &WeightRangeSnapshot,
    range: &ConductanceRange,
) -> Array2<f64> {
    let span = range.span();
    let width = snap.phi_max - snap.phi_min;
    Zip::from(g_plus).and(g_minus).map_collect(|gp, gm| ((gp - gm) + span) / (2.0 * span) * width + snap.phi_min)
}

/// Devices after stuck substitution.
#[derive(Debug, Clone, PartialEq)]
pub struct StuckOutcome {
    pub g_plus: Array2<f64>,
    pub g_minus: Array2<f64>,
    pub plus_stuck: Array2<bool>,
    pub minus_stuck: Array2<bool>,
    /// True where either component of a weight was substituted.
    pub stuck_mask: Array2<bool>,
}

/// Replaces each component independently by an HRS draw with probability
/// `x` or an LRS draw with probability `y`.
pub fn apply_stuck<R: Rng + ?Sized>(
    g_plus: &Array2<f64>,
    g_minus: &Array2<f64>,
    x: f64,
    y: f64,
    model: &VariabilityModel,
    rng: &mut R,
) -> Result<StuckOutcome> {
    check_fractions(x, y)?;
    if g_plus.dim() != g_minus.dim() {
        return Err(Error::InvalidInput("component shapes differ".into()));
    }
    let mut out = StuckOutcome {
        g_plus: g_plus.clone(),
        g_minus: g_minus.clone(),
        plus_stuck: Array2::from_elem(g_plus.dim(), false),
        minus_stuck: Array2::from_elem(g_plus.dim(), false),
        stuck_mask: Array2::from_elem(g_plus.dim(), false),
    };
    if x + y == 0.0 {
        return Ok(out);
    }
    let stuck_model = &model.stuck_model;
    let draw = |g: &mut f64, rng: &mut R| -> bool {
        let u: f64 = rng.random();
        if u < x {
            *g = sample_stuck_hrs(stuck_model, rng);
            true
        } else if u < x + y {
            *g = sample_stuck_lrs(stuck_model, rng);
            true
        } else {
            false
        }
    };
    let (rows, cols) = g_plus.dim();
    for r in 0..rows {
        for c in 0..cols {
            let p = draw(&mut out.g_plus[[r, c]], rng);
            let m = draw(&mut out.g_minus[[r, c]], rng);
            out.plus_stuck[[r, c]] = p;
            out.minus_stuck[[r, c]] = m;
            out.stuck_mask[[r, c]] = p || m;
        }
    }
    Ok(out)
}

/// Adds tuning imprecision and bias disturbance to every device.
///
/// Per device: `g + N(0, f(g)^2) + N(mu_off, sigma_off^2) + g_adj(n_d)`, with the
/// tuning terms scaled from percent of `g` to µS, then floored at 0 µS.
pub fn perturb_conductance<R: Rng + ?Sized>(
    g: &Array2<f64>,
    n_d: &Array2<u32>,
    model: &VariabilityModel,
    sources: Sources,
    rng: &mut R,
) -> Array2<f64> {
    perturb_unfrozen(g, n_d, None, model, sources, rng)
}

fn perturb_unfrozen<R: Rng + ?Sized>(
    g: &Array2<f64>,
    n_d: &Array2<u32>,
    frozen: Option<&Array2<bool>>,
    model: &VariabilityModel,
    sources: Sources,
    rng: &mut R,
) -> Array2<f64> {
    assert_eq!(g.dim(), n_d.dim(), "n_d shape must match conductances");
    let mut out = g.clone();
    if !(sources.tuning || sources.bias) {
        return out;
    }
    let off = model.offset_model;
    for ((idx, value), nd) in out.indexed_iter_mut().zip(n_d.iter()) {
        if frozen.is_some_and(|f| f[idx]) {
            continue;
        }
        let target = *value;
        let mut noisy = target;
        if sources.tuning {
            let z_tune: f64 = rng.sample(StandardNormal);
            let z_off: f64 = rng.sample(StandardNormal);
            noisy += model.std_model.sigma(target) * z_tune;
            noisy += (off.mu_off + off.sigma_off * z_off) * target / 100.0;
        }
        if sources.bias {
            noisy += sample_bias(&model.bias_db, *nd, rng);
        }
        *value = noisy.max(0.0);
    }
    out
}

/// Post-transfer weights and the stuck positions.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferOutcome {
    pub phi_prime: Array2<f64>,
    pub stuck_mask: Array2<bool>,
}

/// Runs one full transfer of `phi`, a layer's augmented weight matrix.
///
/// Stuck components keep their substituted value and are not perturbed.
pub fn simulate_transfer<R: Rng + ?Sized>(
    phi: &Array2<f64>,
    layout: &TileLayout,
    model: &VariabilityModel,
    params: &TransferParams,
    rng: &mut R,
) -> Result<TransferOutcome> {
    params.validate()?;
    if layout.weight_shape() != phi.dim() {
        return Err(Error::InvalidInput(format!(
            "layout places {:?} weights, matrix is {:?}",
            layout.weight_shape(),
            phi.dim()
        )));
    }
    let snap = WeightRangeSnapshot::of(phi)?;
    let (plus, minus) = split_signed(phi);
    let g_plus = to_conductance(&plus, &snap, &model.range)?;
    let g_minus = to_conductance(&minus, &snap, &model.range)?;
    let (x, y) = params.effective_fractions();
    let stuck = apply_stuck(&g_plus, &g_minus, x, y, model, rng)?;
    let sources = params.sources;
    let g_plus =
        perturb_unfrozen(&stuck.g_plus, layout.nd_matrix(Polarity::Plus), Some(&stuck.plus_stuck), model, sources, rng);
    let g_minus = perturb_unfrozen(
        &stuck.g_minus,
        layout.nd_matrix(Polarity::Minus),
        Some(&stuck.minus_stuck),
        model,
        sources,
        rng,
    );
    Ok(TransferOutcome {
        phi_prime: from_conductance(&g_plus, &g_minus, &snap, &model.range),
        stuck_mask: stuck.stuck_mask,
    })
}
