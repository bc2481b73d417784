//! Two interleaving half-moons.

use std::path::Path;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    /// n × 2
    pub points: Array2<f64>,
    pub labels: Vec<u8>,
}

impl LabeledSet {
    pub fn new(points: Array2<f64>, labels: Vec<u8>) -> Result<Self> {
        if points.nrows() != labels.len() {
            return Err(Error::InvalidInput(format!("{} points but {} labels", points.nrows(), labels.len())));
        }
        if labels.iter().any(|l| *l > 1) {
            return Err(Error::InvalidInput("labels must be 0 or 1".into()));
        }
        Ok(Self { points, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn targets(&self) -> Array1<f64> {
        self.labels.iter().map(|l| f64::from(*l)).collect()
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> LabeledSet {
        LabeledSet {
            points: self.points.select(ndarray::Axis(0), indices),
            labels: indices.iter().map(|i| self.labels[*i]).collect(),
        }
    }

    /// First `n` rows and the remainder.
    pub fn split(&self, n: usize) -> (LabeledSet, LabeledSet) {
        let n = n.min(self.len());
        let head: Vec<usize> = (0..n).collect();
        let tail: Vec<usize> = (n..self.len()).collect();
        (self.select(&head), self.select(&tail))
    }

    /// Fraction of points whose label matches `predictions`.
    pub fn accuracy(&self, predictions: &[bool]) -> f64 {
        let hits = predictions.iter().zip(&self.labels).filter(|(p, l)| **p == (**l == 1)).count();
        hits as f64 / self.len() as f64
    }

    /// Writes `x,y,label` rows.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        w.write_record(["x", "y", "label"]).map_err(|e| Error::csv(path, e))?;
        for (p, l) in self.points.rows().into_iter().zip(&self.labels) {
            w.write_record([p[0].to_string(), p[1].to_string(), l.to_string()]).map_err(|e| Error::csv(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Dataset options as they appear in experiment configs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MoonsConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub noise_std: f64,
}

impl Default for MoonsConfig {
    fn default() -> Self {
        Self { n_train: 875, n_test: 200, noise_std: 0.1 }
    }
}

impl MoonsConfig {
    /// Generates `n_train + n_test` shuffled points and splits them.
    pub fn generate(&self, seed: u64) -> Result<(LabeledSet, LabeledSet)> {
        let all = make_half_moons(self.n_train + self.n_test, self.noise_std, seed)?;
        Ok(all.split(self.n_train))
    }
}

/// Class 0 on `(cos t, sin t)`, class 1 on `(1 - cos t, 0.5 - sin t)`, with
/// `t ~ U[0, π]` and Gaussian coordinate noise. Class 0 gets `n - n / 2`
/// points. Rows are shuffled.
pub fn make_half_moons(n: usize, noise_std: f64, seed: u64) -> Result<LabeledSet> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 points, got {n}")));
    }
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(Error::InvalidInput(format!("noise_std must be >= 0, got {noise_std}")));
    }
    let mut rng = stream(seed, Purpose::Dataset);
    let noise = Normal::new(0.0, noise_std).expect("valid std");
    let n_upper = n - n / 2;

    let mut rows: Vec<([f64; 2], u8)> = Vec::with_capacity(n);
    for i in 0..n {
        let t = rng.random_range(0.0..=std::f64::consts::PI);
        let (label, (x, y)) = if i < n_upper { (0, (t.cos(), t.sin())) } else { (1, (1.0 - t.cos(), 0.5 - t.sin())) };
        let (dx, dy) = if noise_std > 0.0 { (noise.sample(&mut rng), noise.sample(&mut rng)) } else { (0.0, 0.0) };
        rows.push(([x + dx, y + dy], label));
    }
    rows.shuffle(&mut rng);

    let points = Array2::from_shape_fn((n, 2), |(r, c)| rows[r].0[c]);
    let labels = rows.iter().map(|r| r.1).collect();
    LabeledSet::new(points, labels)
}
