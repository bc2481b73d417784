//! Robustness evaluation, heatmaps and the end-to-end experiment.

pub mod heatmap;
pub mod robustness;
pub mod run;

pub use heatmap::{heatmap, GridSpec, HeatmapGrid};
pub use robustness::{
    evaluate_transfers, robustness_curve, robustness_table, share_at_least, RobustnessReport, TableRow, BIN_EDGES,
    CURVE_STEPS,
};
pub use run::{
    load_config, run_experiment, run_experiment_from_path, run_in_memory, train_network, write_curve_csv,
    write_heatmap_csv, write_json, write_table_csv, ExperimentConfig, ExperimentOutput, ExperimentReport,
    HeatmapConfig, Manifest, NetworkResult, TrainingSummary,
};
