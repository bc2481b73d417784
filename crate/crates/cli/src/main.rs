use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use crossbar::experiments::{
    evaluate_transfers, heatmap, load_config, run_experiment, share_at_least, train_network, write_curve_csv,
    write_heatmap_csv, write_json, write_table_csv, ExperimentConfig,
};
use crossbar::nn::{load_checkpoint, save_checkpoint};
use crossbar::variability::{fit_model_from_csv, save_model, VariabilityModel, SYNTHETIC_SEED};
use crossbar::ConductanceRange;

/// Hardware-aware training and Monte-Carlo transfer simulation for ReRAM crossbars.
#[derive(Parser)]
#[command(name = "crossbar", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a variability model from raw characterisation CSVs.
    FitModel(FitArgs),
    /// Write the documented synthetic variability model.
    GenSyntheticModel(SyntheticArgs),
    /// Train one network and write its checkpoint.
    Train(TrainArgs),
    /// Run simulated transfers of a checkpoint over the test set.
    Evaluate(EvaluateArgs),
    /// Classification mean and spread over the input plane.
    Heatmap(HeatmapArgs),
    /// Full pipeline: train both networks, evaluate, write all artifacts.
    Run(RunArgs),
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for transfer simulation.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl Common {
    /// Config with command-line overrides applied, plus the directory that
    /// relative model paths are resolved against.
    fn load(&self, transfers: Option<u32>) -> Result<(ExperimentConfig, PathBuf)> {
        let (mut cfg, base) = match &self.config {
            Some(p) => (load_config(p)?, p.parent().map(Path::to_path_buf).unwrap_or_default()),
            None => (ExperimentConfig::default(), PathBuf::from(".")),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(t) = self.threads {
            cfg.threads = Some(t);
        }
        if let Some(n) = transfers {
            cfg.transfers = n;
        }
        cfg.validate()?;
        Ok((cfg, base))
    }

    fn out_dir(&self) -> Result<&Path> {
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        Ok(&self.out)
    }
}

#[derive(Args)]
struct FitArgs {
    /// Tuning reads: device_id,g_target_uS,read_uS
    #[arg(long)]
    tuning: PathBuf,
    /// Bias disturbances: n_d,delta_g_uS
    #[arg(long)]
    bias: PathBuf,
    /// Stuck devices: kind,g_uS
    #[arg(long)]
    stuck: PathBuf,
    #[arg(long, default_value_t = 100.0)]
    g_min: f64,
    #[arg(long, default_value_t = 400.0)]
    g_max: f64,
    /// Model JSON to write. A fit report is written next to it.
    #[arg(long, default_value = "model.json")]
    out: PathBuf,
}

#[derive(Args)]
struct SyntheticArgs {
    #[arg(long, default_value_t = SYNTHETIC_SEED)]
    seed: u64,
    #[arg(long, default_value = "model.json")]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Inject simulated transfer noise during training.
    #[arg(long, conflicts_with = "regular")]
    hardware_aware: bool,
    /// Plain training (the default).
    #[arg(long)]
    regular: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    transfers: Option<u32>,
}

#[derive(Args)]
struct HeatmapArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Transfers per cell, overriding the config.
    #[arg(long)]
    repetitions: Option<u32>,
    /// Cells per axis, overriding the config.
    #[arg(long)]
    resolution: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    transfers: Option<u32>,
}

fn fit_model(args: &FitArgs) -> Result<()> {
    let range = ConductanceRange { g_min: args.g_min, g_max: args.g_max };
    let (model, report) = fit_model_from_csv(&args.tuning, &args.bias, &args.stuck, range)?;
    save_model(&model, &args.out)?;
    let report_path = args.out.with_extension("fit.json");
    write_json(&report_path, &report)?;
    println!(
        "std law {:.6} %/uS * g + {:.4} %, offsets N({:.4} %, {:.4} %), {} bias sub-databases, {} LRS samples",
        model.std_model.slope,
        model.std_model.intercept,
        model.offset_model.mu_off,
        model.offset_model.sigma_off,
        model.bias_db.len(),
        model.stuck_model.lrs_samples.len()
    );
    println!("wrote {} and {}", args.out.display(), report_path.display());
    Ok(())
}

fn gen_synthetic(args: &SyntheticArgs) -> Result<()> {
    save_model(&VariabilityModel::synthetic(args.seed), &args.out)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn train(args: &TrainArgs) -> Result<()> {
    let (cfg, base) = args.common.load(None)?;
    let model = cfg.load_model(&base)?;
    let (net, summary) = train_network(&cfg, &model, args.hardware_aware)?;
    let out = args.common.out_dir()?;
    save_checkpoint(&net, out.join("checkpoint.json"))?;
    write_json(&out.join("training.json"), &summary)?;
    println!(
        "{} training: loss {:.4}, clean train {:.3}, clean test {:.3}",
        if args.hardware_aware { "hardware-aware" } else { "regular" },
        summary.final_loss,
        summary.clean_train_accuracy,
        summary.clean_test_accuracy
    );
    if let Some(f) = summary.mean_stuck_fraction.first() {
        println!("average share of first-layer weights on stuck devices per batch: {:.2}%", 100.0 * f);
    }
    Ok(())
}

fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let (cfg, base) = args.common.load(args.transfers)?;
    let model = cfg.load_model(&base)?;
    let net = load_checkpoint(&args.checkpoint)?;
    let tcfg = cfg.training_config();
    anyhow::ensure!(
        net.sizes() == tcfg.architecture,
        "checkpoint architecture {:?} differs from config {:?}",
        net.sizes(),
        tcfg.architecture
    );
    let (_, test) = cfg.datasets()?;
    let report = evaluate_transfers(
        &net,
        &model,
        &tcfg.layouts()?,
        &tcfg.transfer_params(),
        &test,
        cfg.transfers,
        cfg.seed,
        cfg.threads,
    )?;
    let out = args.common.out_dir()?;
    write_json(&out.join("report.json"), &report)?;
    write_table_csv(&out.join("table.csv"), &report)?;
    write_curve_csv(&out.join("curve.csv"), &report)?;
    println!(
        "{} transfers: {:.1}% of test points correct in at least 95% of them",
        cfg.transfers,
        100.0 * share_at_least(&report, 95, 100)
    );
    Ok(())
}

fn heatmap_cmd(args: &HeatmapArgs) -> Result<()> {
    let (mut cfg, base) = args.common.load(None)?;
    if let Some(m) = args.repetitions {
        cfg.heatmap.repetitions = m;
    }
    if let Some(r) = args.resolution {
        cfg.heatmap.grid.nx = r;
        cfg.heatmap.grid.ny = r;
    }
    cfg.heatmap.enabled = true;
    cfg.validate()?;
    let model = cfg.load_model(&base)?;
    let net = load_checkpoint(&args.checkpoint)?;
    let tcfg = cfg.training_config();
    let layouts = crossbar::training::layouts_for(&net.sizes(), tcfg.tile_rows, tcfg.tile_cols)?;
    let h = &cfg.heatmap;
    let grid = heatmap(&net, &model, &layouts, &tcfg.transfer_params(), &h.grid, h.repetitions, cfg.seed, cfg.threads)?;
    let out = args.common.out_dir()?;
    write_heatmap_csv(&out.join("heatmap.csv"), &grid)?;
    println!("wrote {}", out.join("heatmap.csv").display());
    Ok(())
}

fn run(args: &RunArgs) -> Result<()> {
    let (cfg, base) = args.common.load(args.transfers)?;
    let out = args.common.out_dir()?;
    let report = run_experiment(&cfg, &base, out)?;
    for (name, r) in [("hardware-aware", &report.hann), ("regular", &report.nn)] {
        println!(
            "{name:>14}: clean test {:.3}, share correct in >=95% of {} transfers: {:.1}%",
            r.clean_test_accuracy,
            report.n_transfers,
            100.0 * r.share_at_least_95
        );
    }
    if let Some(f) = report.hann.mean_stuck_fraction.first() {
        println!("average share of first-layer weights on stuck devices per batch: {:.2}%", 100.0 * f);
    }
    println!("artifacts in {}", out.display());
    Ok(())
}

/// The error chain, skipping causes already spelled out by their parent.
fn describe(err: &anyhow::Error) -> String {
    let mut text = String::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if !text.contains(&msg) {
            if !text.is_empty() {
                text.push_str(": ");
            }
            text.push_str(&msg);
        }
    }
    text
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<crossbar::Error>() {
        Some(e) if e.is_input_error() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::FitModel(a) => fit_model(a),
        Command::GenSyntheticModel(a) => gen_synthetic(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Heatmap(a) => heatmap_cmd(a),
        Command::Run(a) => run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
