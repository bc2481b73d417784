//! Statistical model of crossbar non-idealities: tuning imprecision, biasing
//! scheme disturbances and stuck devices, fitted from characterization data.

mod bias;
mod ingest;
mod shapiro;
mod stuck;
mod tuning;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use bias::{build_bias_db, sample_bias, BiasDisturbanceDb, MAX_DISTURBANCE};
pub use ingest::{fit_model_from_csv, read_bias_csv, read_stuck_csv, read_tuning_csv, FitReport, StuckKind};
pub use shapiro::{shapiro_wilk, ShapiroWilk, MAX_SAMPLES as SHAPIRO_MAX_SAMPLES};
pub use stuck::{sample_stuck_hrs, sample_stuck_lrs, StuckModel, DEFAULT_HRS_HIGH, DEFAULT_HRS_LOW};
pub use tuning::{fit_tuning_model, GroupFit, LinearStdModel, OffsetModel, TuningDiagnostics, TuningRecord};

use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};
use crate::transfer::ConductanceRange;

/// Seed used by [`VariabilityModel::synthetic_default`].
pub const SYNTHETIC_SEED: u64 = 0x5EED_0001;

/// Immutable once built; share it freely across workers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariabilityModel {
    pub range: ConductanceRange,
    pub std_model: LinearStdModel,
    pub offset_model: OffsetModel,
    pub bias_db: BiasDisturbanceDb,
    pub stuck_model: StuckModel,
}

impl VariabilityModel {
    pub fn validate(&self) -> Result<()> {
        self.range.validate()?;
        self.std_model.validate()?;
        self.offset_model.validate()?;
        self.bias_db.validate()?;
        self.stuck_model.validate(self.range.g_max)
    }

    /// Documented synthetic stand-in for measured data.
    ///
    /// * std law: -0.002 %/µS · g + 1.4 %
    /// * offsets: N(-0.5 %, 0.5 %)
    /// * bias db: for n_d in 1..=63, 500 sums of n_d draws from N(-0.3, 1.5) µS,
    ///   clamped to ±60 µS
    /// * LRS list: 64 values evenly spread over (400, 1200] µS
    pub fn synthetic(seed: u64) -> Self {
        let mut rng = stream(seed, Purpose::Synthetic);
        let step = Normal::new(-0.3, 1.5).expect("valid normal");
        let mut entries = BTreeMap::new();
        for n_d in 1..=63u32 {
            let list = (0..500)
                .map(|_| {
                    let sum: f64 = (0..n_d).map(|_| step.sample(&mut rng)).sum();
                    sum.clamp(-MAX_DISTURBANCE, MAX_DISTURBANCE)
                })
                .collect();
            entries.insert(n_d, list);
        }
        let lrs = (1..=64).map(|i| 400.0 + 800.0 * i as f64 / 64.0).collect();
        Self {
            range: ConductanceRange::default(),
            std_model: LinearStdModel { slope: -0.002, intercept: 1.4 },
            offset_model: OffsetModel { mu_off: -0.5, sigma_off: 0.5 },
            bias_db: BiasDisturbanceDb::from_entries(entries).expect("synthetic bias db is valid"),
            stuck_model: StuckModel::new(lrs),
        }
    }

    pub fn synthetic_default() -> Self {
        Self::synthetic(SYNTHETIC_SEED)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Reads and validates a model file.
pub fn load_model(path: impl AsRef<Path>) -> Result<VariabilityModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let model = VariabilityModel::from_json(&text).map_err(|e| Error::json(path, e))?;
    model.validate().map_err(|e| Error::InvalidModel(format!("{}: {e}", path.display())))?;
    Ok(model)
}

pub fn save_model(model: &VariabilityModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = model.to_json();
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_model_is_valid() {
        let m = VariabilityModel::synthetic_default();
        m.validate().unwrap();
        assert_eq!(m.bias_db.entries().len(), 63);
        assert!(m.bias_db.entries().values().all(|l| l.len() == 500));
        assert_eq!(m.stuck_model.lrs_samples.len(), 64);
        assert_eq!(*m.stuck_model.lrs_samples.last().unwrap(), 1200.0);
        // disturbances accumulate with n_d and skew negative
        let mean = |k: u32| tuning::mean(m.bias_db.get(k).unwrap());
        assert!(mean(40) < mean(5));
        assert!(mean(40) < 0.0);
    }

    #[test]
    fn std_law_is_nonnegative_over_range() {
        let m = VariabilityModel::synthetic_default();
        for i in 0..=300 {
            let g = m.range.g_min + i as f64;
            assert!(m.std_model.sigma(g) >= 0.0);
        }
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let m = VariabilityModel::synthetic(42);
        save_model(&m, &path).unwrap();
        assert_eq!(load_model(&path).unwrap(), m);
    }

    #[test]
    fn missing_section_is_named() {
        let m = VariabilityModel::synthetic_default();
        let mut v: serde_json::Value = serde_json::from_str(&m.to_json()).unwrap();
        v.as_object_mut().unwrap().remove("bias_db");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("broken.json");
        fs::write(&path, serde_json::to_string(&v).unwrap()).unwrap();
        let err = load_model(&path).unwrap_err().to_string();
        assert!(err.contains("bias_db"), "{err}");
        assert!(err.contains("line"), "{err}");
    }

    #[test]
    fn malformed_field_reports_position() {
        let text = "{\n  \"range\": {\"g_min\": 100.0, \"g_max\": \"wide\"}\n}";
        let err = VariabilityModel::from_json(text).unwrap_err();
        assert_eq!(err.line(), 2);
        assert!(err.to_string().contains("invalid type"));
    }

    #[test]
    fn semantically_invalid_model_is_rejected_on_load() {
        let mut m = VariabilityModel::synthetic_default();
        m.stuck_model.lrs_samples[0] = 150.0;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_model(&m, &path).unwrap();
        assert!(matches!(load_model(&path), Err(Error::InvalidModel(_))));
    }
}
