//! Full pipeline: data, both trainings, robustness evaluation, heatmaps and
//! artifact files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::heatmap::{heatmap, GridSpec, HeatmapGrid};
use super::robustness::{evaluate_transfers, robustness_curve, robustness_table, share_at_least, RobustnessReport};
use crate::datasets::{LabeledSet, MoonsConfig};
use crate::error::{Error, Result};
use crate::nn::{save_checkpoint, DenseNet};
use crate::training::{train_loop, TrainingConfig, TrainingRun};
use crate::variability::{load_model, VariabilityModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeatmapConfig {
    pub enabled: bool,
    pub repetitions: u32,
    pub grid: GridSpec,
}

impl Default for HeatmapConfig {
    fn default() -> Self {
        Self { enabled: true, repetitions: 1000, grid: GridSpec::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed for every random stream of the run.
    pub seed: u64,
    /// Variability model JSON, relative to the config file. The synthetic
    /// model is used when absent.
    pub model_path: Option<PathBuf>,
    pub dataset: MoonsConfig,
    /// Its `seed` field is replaced by the master seed.
    pub training: TrainingConfig,
    pub transfers: u32,
    pub heatmap: HeatmapConfig,
    pub threads: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            model_path: None,
            dataset: MoonsConfig::default(),
            training: TrainingConfig::default(),
            transfers: 10_000,
            heatmap: HeatmapConfig::default(),
            threads: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.training.validate()?;
        if self.transfers == 0 {
            return Err(Error::InvalidConfig("transfers must be >= 1".into()));
        }
        if self.dataset.n_train == 0 || self.dataset.n_test == 0 {
            return Err(Error::InvalidConfig("n_train and n_test must be >= 1".into()));
        }
        if !(self.dataset.noise_std >= 0.0 && self.dataset.noise_std.is_finite()) {
            return Err(Error::InvalidConfig("dataset noise_std must be >= 0".into()));
        }
        if self.heatmap.enabled {
            self.heatmap.grid.validate()?;
            if self.heatmap.repetitions == 0 {
                return Err(Error::InvalidConfig("heatmap repetitions must be >= 1".into()));
            }
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidConfig("threads must be >= 1".into()));
        }
        Ok(())
    }

    /// Training settings with the master seed applied.
    pub fn training_config(&self) -> TrainingConfig {
        TrainingConfig { seed: self.seed, ..self.training.clone() }
    }

    /// Loads the configured model, resolving a relative path against `base`.
    pub fn load_model(&self, base: &Path) -> Result<VariabilityModel> {
        match &self.model_path {
            None => Ok(VariabilityModel::synthetic_default()),
            Some(p) => load_model(base.join(p)),
        }
    }

    pub fn datasets(&self) -> Result<(LabeledSet, LabeledSet)> {
        self.dataset.generate(self.seed)
    }

    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(canonical_json(self).as_bytes()))
    }
}

fn canonical_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serialisable");
    s.push('\n');
    s
}

/// Reads and validates a config file. Missing fields take their defaults.
pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let cfg: ExperimentConfig = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, canonical_json(value)).map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))
}

pub fn write_table_csv(path: &Path, report: &RobustnessReport) -> Result<()> {
    let mut w = csv_writer(path)?;
    for row in robustness_table(report) {
        w.serialize(row).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_curve_csv(path: &Path, report: &RobustnessReport) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["threshold", "share"]).map_err(|e| Error::csv(path, e))?;
    for (p, s) in robustness_curve(report) {
        w.write_record([p.to_string(), s.to_string()]).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_heatmap_csv(path: &Path, grid: &HeatmapGrid) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["x", "y", "mean", "std"]).map_err(|e| Error::csv(path, e))?;
    for row in grid.rows() {
        w.write_record(row.map(|v| v.to_string())).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Results for one trained network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkResult {
    pub clean_train_accuracy: f64,
    pub clean_test_accuracy: f64,
    /// Average per-batch fraction of weights on stuck devices, per layer.
    /// Empty for the regular network.
    pub mean_stuck_fraction: Vec<f64>,
    pub final_loss: f64,
    /// Share of test points classified correctly by at least 95% of transfers.
    pub share_at_least_95: f64,
    pub robustness: RobustnessReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub seed: u64,
    pub n_transfers: u32,
    pub hann: NetworkResult,
    pub nn: NetworkResult,
}

pub struct ExperimentOutput {
    pub report: ExperimentReport,
    pub hann: DenseNet,
    pub nn: DenseNet,
    pub heatmaps: Option<(HeatmapGrid, HeatmapGrid)>,
}

fn network_result(
    run: &TrainingRun,
    train: &LabeledSet,
    test: &LabeledSet,
    robustness: RobustnessReport,
) -> NetworkResult {
    NetworkResult {
        clean_train_accuracy: train.accuracy(&run.net.classify(&train.points)),
        clean_test_accuracy: test.accuracy(&run.net.classify(&test.points)),
        mean_stuck_fraction: run.mean_stuck_fraction.clone(),
        final_loss: run.epoch_losses.last().copied().unwrap_or(f64::NAN),
        share_at_least_95: share_at_least(&robustness, 95, 100),
        robustness,
    }
}

/// Trains both networks and evaluates them, without touching the filesystem.
pub fn run_in_memory(cfg: &ExperimentConfig, model: &VariabilityModel) -> Result<ExperimentOutput> {
    cfg.validate()?;
    model.validate()?;
    let (train, test) = cfg.datasets()?;
    let tcfg = cfg.training_config();
    let layouts = tcfg.layouts()?;
    let params = tcfg.transfer_params();

    let hann_run = train_loop(&tcfg, &train, Some(model), &mut ())?;
    let nn_run = train_loop(&tcfg, &train, None, &mut ())?;

    let evaluate =
        |net: &DenseNet| evaluate_transfers(net, model, &layouts, &params, &test, cfg.transfers, cfg.seed, cfg.threads);
    let hann = network_result(&hann_run, &train, &test, evaluate(&hann_run.net)?);
    let nn = network_result(&nn_run, &train, &test, evaluate(&nn_run.net)?);

    let heatmaps = if cfg.heatmap.enabled {
        let h = &cfg.heatmap;
        let map =
            |net: &DenseNet| heatmap(net, model, &layouts, &params, &h.grid, h.repetitions, cfg.seed, cfg.threads);
        Some((map(&hann_run.net)?, map(&nn_run.net)?))
    } else {
        None
    };
    Ok(ExperimentOutput {
        report: ExperimentReport { seed: cfg.seed, n_transfers: cfg.transfers, hann, nn },
        hann: hann_run.net,
        nn: nn_run.net,
        heatmaps,
    })
}

/// Outcome of training one network on the configured data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub hardware_aware: bool,
    pub seed: u64,
    pub epochs: usize,
    pub batches: usize,
    pub final_loss: f64,
    pub clean_train_accuracy: f64,
    pub clean_test_accuracy: f64,
    pub mean_stuck_fraction: Vec<f64>,
}

/// Trains one network with the config's data and schedule.
pub fn train_network(
    cfg: &ExperimentConfig,
    model: &VariabilityModel,
    hardware_aware: bool,
) -> Result<(DenseNet, TrainingSummary)> {
    cfg.validate()?;
    let (train, test) = cfg.datasets()?;
    let tcfg = cfg.training_config();
    let run = train_loop(&tcfg, &train, hardware_aware.then_some(model), &mut ())?;
    let summary = TrainingSummary {
        hardware_aware,
        seed: cfg.seed,
        epochs: tcfg.epochs,
        batches: run.batches,
        final_loss: run.epoch_losses.last().copied().unwrap_or(f64::NAN),
        clean_train_accuracy: train.accuracy(&run.net.classify(&train.points)),
        clean_test_accuracy: test.accuracy(&run.net.classify(&test.points)),
        mean_stuck_fraction: run.mean_stuck_fraction,
    };
    Ok((run.net, summary))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    /// Labels of the random streams derived from `seed`.
    pub streams: Vec<String>,
    pub config_sha256: String,
    /// `"synthetic"` or the hash of the model file.
    pub model: String,
    /// Relative artifact path to its SHA-256.
    pub artifacts: BTreeMap<String, String>,
}

/// Runs the pipeline and writes all artifacts below `out`.
///
/// Layout: `report.json`, `manifest.json`, `train.csv`, `test.csv`, and per
/// network (`hann/`, `nn/`) `checkpoint.json`, `table.csv`, `curve.csv` and,
/// when enabled, `heatmap.csv`.
pub fn run_experiment(cfg: &ExperimentConfig, base: &Path, out: &Path) -> Result<ExperimentReport> {
    cfg.validate()?;
    let model = cfg.load_model(base)?;
    let model_tag = match &cfg.model_path {
        None => "synthetic".to_string(),
        Some(p) => {
            let path = base.join(p);
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            hex::encode(Sha256::digest(&bytes))
        }
    };
    let output = run_in_memory(cfg, &model)?;

    let mut files: Vec<PathBuf> = Vec::new();
    let mkdir = |dir: &Path| fs::create_dir_all(dir).map_err(|e| Error::io(dir, e));
    mkdir(out)?;
    let (train, test) = cfg.datasets()?;
    train.write_csv(out.join("train.csv"))?;
    test.write_csv(out.join("test.csv"))?;
    files.extend(["train.csv".into(), "test.csv".into()]);

    let nets = [("hann", &output.hann, &output.report.hann), ("nn", &output.nn, &output.report.nn)];
    for (i, (name, net, result)) in nets.into_iter().enumerate() {
        let dir = out.join(name);
        mkdir(&dir)?;
        save_checkpoint(net, dir.join("checkpoint.json"))?;
        write_table_csv(&dir.join("table.csv"), &result.robustness)?;
        write_curve_csv(&dir.join("curve.csv"), &result.robustness)?;
        let mut names = vec!["checkpoint.json", "table.csv", "curve.csv"];
        if let Some(maps) = &output.heatmaps {
            let grid = if i == 0 { &maps.0 } else { &maps.1 };
            write_heatmap_csv(&dir.join("heatmap.csv"), grid)?;
            names.push("heatmap.csv");
        }
        files.extend(names.into_iter().map(|f| Path::new(name).join(f)));
    }
    write_json(&out.join("report.json"), &output.report)?;
    files.push("report.json".into());

    let mut artifacts = BTreeMap::new();
    for f in files {
        let path = out.join(&f);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let key = f.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
        artifacts.insert(key, hex::encode(Sha256::digest(&bytes)));
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        streams: ["dataset", "init", "shuffle", "training-noise", "transfers", "heatmap"].map(String::from).to_vec(),
        config_sha256: cfg.sha256(),
        model: model_tag,
        artifacts,
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(output.report)
}

/// [`run_experiment`] with the config read from `config_path`.
pub fn run_experiment_from_path(config_path: &Path, out: &Path) -> Result<ExperimentReport> {
    let cfg = load_config(config_path)?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    run_experiment(&cfg, base, out)
}
