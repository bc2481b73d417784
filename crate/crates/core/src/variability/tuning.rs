//! Conductance tuning imprecision: a linear std-vs-conductance law and a
//! normal offset distribution, both in percent of the target conductance.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::shapiro::shapiro_wilk;
use crate::error::{Error, Result};

/// Post-programming reads of one tune/untune repetition.
#[derive(Debug, Clone, PartialEq)]
pub struct TuningRecord {
    pub device_id: String,
    /// Target conductance, µS.
    pub g_target: f64,
    /// Read conductances, µS.
    pub reads: Vec<f64>,
}

impl TuningRecord {
    pub fn validate(&self) -> Result<()> {
        if !(self.g_target > 0.0 && self.g_target.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "device {}: target conductance must be positive, got {}",
                self.device_id, self.g_target
            )));
        }
        if self.reads.is_empty() {
            return Err(Error::InvalidInput(format!("device {} at {} µS has no reads", self.device_id, self.g_target)));
        }
        if let Some(r) = self.reads.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
            return Err(Error::InvalidInput(format!(
                "device {} at {} µS: read {r} is not a positive conductance",
                self.device_id, self.g_target
            )));
        }
        Ok(())
    }
}

/// `f(g) = slope * g + intercept`, the tuning standard deviation in percent
/// of the target conductance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearStdModel {
    /// %/µS
    pub slope: f64,
    /// %
    pub intercept: f64,
}

impl LinearStdModel {
    /// Standard deviation in percent of `g`, floored at zero.
    pub fn percent(&self, g: f64) -> f64 {
        (self.slope * g + self.intercept).max(0.0)
    }

    /// Absolute standard deviation in µS at conductance `g`.
    pub fn sigma(&self, g: f64) -> f64 {
        self.percent(g) * g / 100.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.slope.is_finite() && self.intercept.is_finite()) {
            return Err(Error::InvalidModel("std_model coefficients must be finite".into()));
        }
        Ok(())
    }
}

/// Offset of the achieved mean from the target, in percent of the target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffsetModel {
    pub mu_off: f64,
    pub sigma_off: f64,
}

impl OffsetModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu_off.is_finite() && self.sigma_off.is_finite() && self.sigma_off >= 0.0) {
            return Err(Error::InvalidModel(format!(
                "offset_model needs finite mu_off and sigma_off >= 0, got ({}, {})",
                self.mu_off, self.sigma_off
            )));
        }
        Ok(())
    }
}

/// Per-group outcome of the tuning fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupFit {
    pub device_id: String,
    pub g_target: f64,
    pub n_reads: usize,
    /// Std of the reads in percent of the target.
    pub sigma_percent: f64,
    /// `100 * (mean - target) / target`.
    pub offset_percent: f64,
    /// Shapiro–Wilk p-value of the group, when the test is defined.
    pub normality_p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuningDiagnostics {
    pub groups: Vec<GroupFit>,
}

impl TuningDiagnostics {
    /// Number of groups whose normality is rejected at level `alpha`.
    pub fn rejected(&self, alpha: f64) -> usize {
        self.groups.iter().filter(|g| g.normality_p.is_some_and(|p| p < alpha)).count()
    }
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample standard deviation; zero for a single value.
pub(crate) fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// Ordinary least squares `y = slope * x + intercept`.
pub(crate) fn least_squares(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        return Err(Error::InsufficientData { needed: 2, given: 1 });
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Fits the std law and the offset distribution.
///
/// Records sharing a `(device_id, g_target)` pair are pooled into one group.
pub fn fit_tuning_model(records: &[TuningRecord]) -> Result<(LinearStdModel, OffsetModel, TuningDiagnostics)> {
    for r in records {
        r.validate()?;
    }
    let mut groups: BTreeMap<(String, u64), Vec<f64>> = BTreeMap::new();
    for r in records {
        groups.entry((r.device_id.clone(), r.g_target.to_bits())).or_default().extend_from_slice(&r.reads);
    }

    let mut distinct: Vec<u64> = groups.keys().map(|k| k.1).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, given: distinct.len() });
    }

    let fits: Vec<GroupFit> = groups
        .into_iter()
        .map(|((device_id, bits), reads)| {
            let g_target = f64::from_bits(bits);
            let mu = mean(&reads);
            let sigma = sample_std(&reads);
            GroupFit {
                device_id,
                g_target,
                n_reads: reads.len(),
                sigma_percent: 100.0 * sigma / g_target,
                offset_percent: 100.0 * (mu - g_target) / g_target,
                normality_p: shapiro_wilk(&reads).ok().map(|r| r.p_value),
            }
        })
        .collect();

    let sigma_points: Vec<(f64, f64)> = fits.iter().map(|f| (f.g_target, f.sigma_percent)).collect();
    let (slope, intercept) = least_squares(&sigma_points)?;
    let offsets: Vec<f64> = fits.iter().map(|f| f.offset_percent).collect();
    let offset = OffsetModel { mu_off: mean(&offsets), sigma_off: sample_std(&offsets) };

    Ok((LinearStdModel { slope, intercept }, offset, TuningDiagnostics { groups: fits }))
}
