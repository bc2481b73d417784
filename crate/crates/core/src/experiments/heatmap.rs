//! Classification variability over the input plane.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::robustness::run_parallel;
use crate::error::{Error, Result};
use crate::nn::DenseNet;
use crate::rng::{indexed_stream, Purpose};
use crate::training::transfer_network;
use crate::transfer::{TileLayout, TransferParams};
use crate::variability::VariabilityModel;

/// Regular grid with inclusive extents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub nx: usize,
    pub ny: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { x_min: -1.5, x_max: 2.5, y_min: -1.0, y_max: 1.5, nx: 200, ny: 200 }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::InvalidConfig("heatmap grid is empty".into()));
        }
        let ok = [self.x_min, self.x_max, self.y_min, self.y_max].iter().all(|v| v.is_finite())
            && self.x_min <= self.x_max
            && self.y_min <= self.y_max;
        if !ok {
            return Err(Error::InvalidConfig("heatmap extents must be finite and ordered".into()));
        }
        Ok(())
    }

    fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        if n == 1 {
            return vec![lo];
        }
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    /// Cell coordinates, x varying fastest.
    pub fn points(&self) -> Array2<f64> {
        let xs = Self::axis(self.x_min, self.x_max, self.nx);
        let ys = Self::axis(self.y_min, self.y_max, self.ny);
        Array2::from_shape_fn((self.nx * self.ny, 2), |(i, j)| if j == 0 { xs[i % self.nx] } else { ys[i / self.nx] })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapGrid {
    pub spec: GridSpec,
    pub repetitions: u32,
    /// Per cell, how many repetitions classified it as class 1.
    pub ones: Vec<u32>,
}

impl HeatmapGrid {
    pub fn mean(&self) -> Vec<f64> {
        self.ones.iter().map(|k| *k as f64 / self.repetitions as f64).collect()
    }

    /// Population standard deviation of each cell's binary outcomes.
    pub fn std(&self) -> Vec<f64> {
        let m_total = self.repetitions as f64;
        self.ones
            .iter()
            .map(|&k| {
                let k = k as f64;
                let m = k / m_total;
                let ss = k * (1.0 - m) * (1.0 - m) + (m_total - k) * m * m;
                (ss / m_total).sqrt()
            })
            .collect()
    }

    /// Rows of `(x, y, mean, std)`.
    pub fn rows(&self) -> Vec<[f64; 4]> {
        let pts = self.spec.points();
        self.mean()
            .into_iter()
            .zip(self.std())
            .enumerate()
            .map(|(i, (m, s))| [pts[[i, 0]], pts[[i, 1]], m, s])
            .collect()
    }
}

/// Classifies every grid cell under `repetitions` independent transfers. One
/// transfer is shared by all cells within a repetition.
#[allow(clippy::too_many_arguments)]
pub fn heatmap(
    net: &DenseNet,
    model: &VariabilityModel,
    layouts: &[TileLayout],
    params: &TransferParams,
    spec: &GridSpec,
    repetitions: u32,
    seed: u64,
    threads: Option<usize>,
) -> Result<HeatmapGrid> {
    spec.validate()?;
    if repetitions == 0 {
        return Err(Error::InvalidInput("repetitions must be >= 1".into()));
    }
    let points = spec.points();
    let cells = points.nrows();
    let ones = run_parallel(threads, || {
        (0..repetitions)
            .into_par_iter()
            .map(|i| {
                let mut rng = indexed_stream(seed, Purpose::Heatmap, i as u64);
                let transferred = transfer_network(net, layouts, model, params, &mut rng)?;
                Ok(transferred.classify(&points).into_iter().map(u32::from).collect::<Vec<u32>>())
            })
            .try_reduce(
                || vec![0; cells],
                |mut a, b| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    Ok(a)
                },
            )
    })?;
    Ok(HeatmapGrid { spec: *spec, repetitions, ones })
}
