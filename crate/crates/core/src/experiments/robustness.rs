//! Monte-Carlo robustness evaluation over simulated transfers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::LabeledSet;
use crate::error::{Error, Result};
use crate::nn::DenseNet;
use crate::rng::{indexed_stream, Purpose};
use crate::training::transfer_network;
use crate::transfer::{TileLayout, TransferParams};
use crate::variability::VariabilityModel;

/// Per-test-point count of transfers that classified the point correctly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub n_transfers: u32,
    pub correct: Vec<u32>,
}

impl RobustnessReport {
    pub fn new(n_transfers: u32, correct: Vec<u32>) -> Result<Self> {
        if n_transfers == 0 {
            return Err(Error::InvalidInput("report needs at least one transfer".into()));
        }
        if let Some(c) = correct.iter().find(|c| **c > n_transfers) {
            return Err(Error::InvalidInput(format!("count {c} exceeds {n_transfers} transfers")));
        }
        Ok(Self { n_transfers, correct })
    }

    pub fn len(&self) -> usize {
        self.correct.len()
    }

    pub fn is_empty(&self) -> bool {
        self.correct.is_empty()
    }

    pub fn fractions(&self) -> Vec<f64> {
        self.correct.iter().map(|c| *c as f64 / self.n_transfers as f64).collect()
    }

    /// Number of points whose correct fraction is at least `num / den`.
    pub fn count_at_least(&self, num: u64, den: u64) -> usize {
        let n = self.n_transfers as u64;
        self.correct.iter().filter(|c| **c as u64 * den >= num * n).count()
    }
}

/// Runs `n_transfers` independent transfers of `net` and classifies `test`
/// with each. Transfer `i` draws from stream `i` of the transfer generator,
/// so the report does not depend on `threads`.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_transfers(
    net: &DenseNet,
    model: &VariabilityModel,
    layouts: &[TileLayout],
    params: &TransferParams,
    test: &LabeledSet,
    n_transfers: u32,
    seed: u64,
    threads: Option<usize>,
) -> Result<RobustnessReport> {
    if n_transfers == 0 {
        return Err(Error::InvalidInput("n_transfers must be >= 1".into()));
    }
    let n_points = test.len();
    let counts = run_parallel(threads, || {
        (0..n_transfers)
            .into_par_iter()
            .map(|i| {
                let mut rng = indexed_stream(seed, Purpose::Transfers, i as u64);
                let transferred = transfer_network(net, layouts, model, params, &mut rng)?;
                let predicted = transferred.classify(&test.points);
                Ok(predicted.iter().zip(&test.labels).map(|(p, l)| u32::from(*p == (*l == 1))).collect::<Vec<u32>>())
            })
            .try_reduce(
                || vec![0; n_points],
                |mut a, b| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    Ok(a)
                },
            )
    })?;
    RobustnessReport::new(n_transfers, counts)
}

/// Runs `f` on a dedicated pool when a thread count is given.
pub(crate) fn run_parallel<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        None => f(),
        Some(0) => Err(Error::InvalidConfig("threads must be >= 1".into())),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(f),
    }
}

/// One row of the binned robustness table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub bin: usize,
    pub label: String,
    pub count: usize,
    pub percent: f64,
}

pub const BIN_EDGES: [u64; 7] = [100, 95, 90, 80, 70, 60, 50];

/// Bins the correct fractions: an exact `100` bin, half-open bins
/// `[95,100)` down to `[50,60)`, and `<50`.
pub fn robustness_table(report: &RobustnessReport) -> Vec<TableRow> {
    let n = report.n_transfers as u64;
    let mut counts = [0usize; BIN_EDGES.len() + 1];
    for &c in &report.correct {
        let pct_ge = |edge: u64| 100 * c as u64 >= edge * n;
        let bin = BIN_EDGES.iter().position(|&e| pct_ge(e)).unwrap_or(BIN_EDGES.len());
        counts[bin] += 1;
    }
    let total = report.len().max(1) as f64;
    let mut labels = vec!["100".to_string()];
    labels.extend(BIN_EDGES.windows(2).map(|w| format!("[{},{})", w[1], w[0])));
    labels.push(format!("<{}", BIN_EDGES[BIN_EDGES.len() - 1]));
    labels
        .into_iter()
        .zip(counts)
        .enumerate()
        .map(|(bin, (label, count))| TableRow { bin, label, count, percent: 100.0 * count as f64 / total })
        .collect()
}

/// Curve resolution: thresholds `k / CURVE_STEPS` for `k = 0..=CURVE_STEPS`.
pub const CURVE_STEPS: u64 = 200;

/// Share of test points (as a fraction) with correct fraction `>= p`.
pub fn robustness_curve(report: &RobustnessReport) -> Vec<(f64, f64)> {
    let total = report.len().max(1) as f64;
    (0..=CURVE_STEPS)
        .map(|k| (k as f64 / CURVE_STEPS as f64, report.count_at_least(k, CURVE_STEPS) as f64 / total))
        .collect()
}

/// Curve value at `p = num / den`.
pub fn share_at_least(report: &RobustnessReport, num: u64, den: u64) -> f64 {
    report.count_at_least(num, den) as f64 / report.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(n: u32, correct: &[u32]) -> RobustnessReport {
        RobustnessReport::new(n, correct.to_vec()).unwrap()
    }

    #[test]
    fn hand_binning() {
        let t = robustness_table(&report(100, &[96, 91, 45]));
        let count = |label: &str| t.iter().find(|r| r.label == label).unwrap().count;
        assert_eq!(count("[95,100)"), 1);
        assert_eq!(count("[90,95)"), 1);
        assert_eq!(count("<50"), 1);
        assert_eq!(t.iter().map(|r| r.count).sum::<usize>(), 3);
    }

    #[test]
    fn edges_fall_into_the_upper_bin() {
        let t = robustness_table(&report(20, &[20, 19, 18, 10, 9]));
        let counts: Vec<usize> = t.iter().map(|r| r.count).collect();
        assert_eq!(counts, vec![1, 1, 1, 0, 0, 0, 1, 1]);
    }

    #[test]
    fn perfect_report_fills_the_top_bin_and_a_flat_curve() {
        let r = report(7, &[7; 5]);
        assert_eq!(robustness_table(&r)[0].count, 5);
        assert!(robustness_curve(&r).iter().all(|(_, s)| *s == 1.0));
    }

    #[test]
    fn single_point_curve_steps_at_its_fraction() {
        let curve = robustness_curve(&report(10, &[7]));
        assert_eq!(curve.len(), 201);
        for (p, s) in curve {
            let expected = if p <= 0.7 + 1e-12 { 1.0 } else { 0.0 };
            assert_eq!(s, expected, "p = {p}");
        }
    }

    #[test]
    fn report_rejects_bad_counts() {
        assert!(RobustnessReport::new(0, vec![]).is_err());
        assert!(RobustnessReport::new(3, vec![4]).is_err());
    }
}
