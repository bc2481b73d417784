//! Samplers for devices stuck in a high- or low-resistance state.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_HRS_LOW: f64 = 10.0;
pub const DEFAULT_HRS_HIGH: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StuckModel {
    /// µS
    pub hrs_low: f64,
    /// µS
    pub hrs_high: f64,
    /// Empirical LRS-stuck conductances, µS.
    pub lrs_samples: Vec<f64>,
}

impl StuckModel {
    pub fn new(lrs_samples: Vec<f64>) -> Self {
        Self { hrs_low: DEFAULT_HRS_LOW, hrs_high: DEFAULT_HRS_HIGH, lrs_samples }
    }

    /// Checks bounds; LRS samples must lie above `g_max`.
    pub fn validate(&self, g_max: f64) -> Result<()> {
        if !(self.hrs_low.is_finite() && self.hrs_high.is_finite() && self.hrs_low < self.hrs_high) {
            return Err(Error::InvalidModel(format!(
                "stuck_model HRS bounds must satisfy low < high, got [{}, {}]",
                self.hrs_low, self.hrs_high
            )));
        }
        if self.lrs_samples.is_empty() {
            return Err(Error::InvalidModel("stuck_model.lrs_samples is empty".into()));
        }
        if let Some(g) = self.lrs_samples.iter().find(|g| !(g.is_finite() && **g > g_max)) {
            return Err(Error::InvalidModel(format!(
                "stuck_model.lrs_samples holds {g} µS, not above g_max = {g_max} µS"
            )));
        }
        Ok(())
    }
}

pub fn sample_stuck_hrs<R: Rng + ?Sized>(model: &StuckModel, rng: &mut R) -> f64 {
    rng.random_range(model.hrs_low..=model.hrs_high)
}

pub fn sample_stuck_lrs<R: Rng + ?Sized>(model: &StuckModel, rng: &mut R) -> f64 {
    model.lrs_samples[rng.random_range(0..model.lrs_samples.len())]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};

    #[test]
    fn singleton_lrs_list_is_constant() {
        let m = StuckModel::new(vec![900.0]);
        let mut rng = stream(3, Purpose::Custom("stuck-test"));
        assert!((0..1000).all(|_| sample_stuck_lrs(&m, &mut rng) == 900.0));
    }

    #[test]
    fn lrs_resampling_is_uniform() {
        let m = StuckModel::new(vec![500.0, 1000.0]);
        let mut rng = stream(4, Purpose::Custom("stuck-test"));
        let n = 100_000;
        let hits = (0..n).filter(|_| sample_stuck_lrs(&m, &mut rng) == 500.0).count();
        let freq = hits as f64 / n as f64;
        assert!((freq - 0.5).abs() <= 0.01, "{freq}");
    }

    #[test]
    fn validation() {
        assert!(StuckModel::new(vec![900.0]).validate(400.0).is_ok());
        assert!(StuckModel::new(vec![]).validate(400.0).is_err());
        assert!(StuckModel::new(vec![350.0]).validate(400.0).is_err());
        let mut m = StuckModel::new(vec![900.0]);
        m.hrs_low = 200.0;
        assert!(m.validate(400.0).is_err());
    }
}
