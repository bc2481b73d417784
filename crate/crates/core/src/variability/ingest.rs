//! CSV ingestion of raw characterization records.
//!
//! * tuning: `device_id,g_target_uS,read_uS`, one row per read
//! * bias: `n_d,delta_g_uS`
//! * stuck: `kind,g_uS` with `kind` one of `HRS`, `LRS`

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::bias::{build_bias_db, MAX_DISTURBANCE};
use super::shapiro::shapiro_wilk;
use super::stuck::StuckModel;
use super::tuning::{fit_tuning_model, TuningDiagnostics, TuningRecord};
use super::VariabilityModel;
use crate::error::{Error, Result};
use crate::transfer::ConductanceRange;

#[derive(Debug, Deserialize)]
struct TuningRow {
    device_id: String,
    #[serde(rename = "g_target_uS")]
    g_target: f64,
    #[serde(rename = "read_uS")]
    read: f64,
}

#[derive(Debug, Deserialize)]
struct BiasRow {
    n_d: u32,
    #[serde(rename = "delta_g_uS")]
    delta_g: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StuckKind {
    #[serde(alias = "hrs")]
    HRS,
    #[serde(alias = "lrs")]
    LRS,
}

#[derive(Debug, Deserialize)]
struct StuckRow {
    kind: StuckKind,
    #[serde(rename = "g_uS")]
    g: f64,
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| Error::csv(path, e))?;
    reader.deserialize().collect::<std::result::Result<Vec<T>, _>>().map_err(|e| Error::csv(path, e))
}

/// Groups read rows by `(device_id, g_target)`, preserving first-seen order.
pub fn read_tuning_csv(path: impl AsRef<Path>) -> Result<Vec<TuningRecord>> {
    let rows: Vec<TuningRow> = read_rows(path.as_ref())?;
    let mut order: Vec<(String, u64)> = Vec::new();
    let mut groups: BTreeMap<(String, u64), Vec<f64>> = BTreeMap::new();
    for row in rows {
        let key = (row.device_id, row.g_target.to_bits());
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(row.read);
    }
    Ok(order
        .into_iter()
        .map(|key| {
            let reads = groups.remove(&key).unwrap_or_default();
            TuningRecord { device_id: key.0, g_target: f64::from_bits(key.1), reads }
        })
        .collect())
}

pub fn read_bias_csv(path: impl AsRef<Path>) -> Result<Vec<(u32, f64)>> {
    let rows: Vec<BiasRow> = read_rows(path.as_ref())?;
    Ok(rows.into_iter().map(|r| (r.n_d, r.delta_g)).collect())
}

pub fn read_stuck_csv(path: impl AsRef<Path>) -> Result<Vec<(StuckKind, f64)>> {
    let rows: Vec<StuckRow> = read_rows(path.as_ref())?;
    Ok(rows.into_iter().map(|r| (r.kind, r.g)).collect())
}

/// Normality diagnostics gathered while fitting a model from raw files.
#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub tuning: TuningDiagnostics,
    /// Shapiro–Wilk p-value per bias sub-database (when defined).
    pub bias_normality: BTreeMap<u32, Option<f64>>,
    pub bias_records_dropped: usize,
    pub hrs_normality: Option<f64>,
    pub hrs_count: usize,
    pub lrs_count: usize,
}

/// Builds a complete model from the three raw CSV files.
pub fn fit_model_from_csv(
    tuning: impl AsRef<Path>,
    bias: impl AsRef<Path>,
    stuck: impl AsRef<Path>,
    range: ConductanceRange,
) -> Result<(VariabilityModel, FitReport)> {
    range.validate()?;
    let records = read_tuning_csv(tuning)?;
    let (std_model, offset_model, diagnostics) = fit_tuning_model(&records)?;

    let bias_records = read_bias_csv(bias)?;
    let bias_db = build_bias_db(&bias_records)?;
    let dropped = bias_records.iter().filter(|r| r.1.is_nan() || r.1.abs() > MAX_DISTURBANCE).count();
    let bias_normality = bias_db.entries().iter().map(|(k, v)| (*k, shapiro_wilk(v).ok().map(|r| r.p_value))).collect();

    let stuck_rows = read_stuck_csv(stuck)?;
    let hrs: Vec<f64> = stuck_rows.iter().filter(|r| r.0 == StuckKind::HRS).map(|r| r.1).collect();
    let lrs: Vec<f64> = stuck_rows.iter().filter(|r| r.0 == StuckKind::LRS).map(|r| r.1).collect();
    let stuck_model = StuckModel::new(lrs.clone());

    let model = VariabilityModel { range, std_model, offset_model, bias_db, stuck_model };
    model.validate()?;
    let report = FitReport {
        tuning: diagnostics,
        bias_normality,
        bias_records_dropped: dropped,
        hrs_normality: shapiro_wilk(&hrs).ok().map(|r| r.p_value),
        hrs_count: hrs.len(),
        lrs_count: lrs.len(),
    };
    Ok((model, report))
}
