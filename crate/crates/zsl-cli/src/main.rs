//! `zsl` — train, calibrate and evaluate attribute-based zero-shot
//! classifiers, and reproduce the Gaussian toy experiment.
//!
//! Exit codes: 0 success, 1 I/O, 2 configuration/contract/format problems,
//! 3 numeric aborts.

mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{load_catalog, load_shard, RunConfig};
use zsl_core::augment::{fictitious_dropout, write_masks_csv, AugmentConfig, Strategy};
use zsl_core::checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
use zsl_core::data::Role;
use zsl_core::error::{Error, Result};
use zsl_core::evaluate::{
    evaluate_czsl, evaluate_gzsl, sweep_gamma, write_sweep_csv, GridSpec,
};
use zsl_core::model::gradcheck::{grad_check_head, grad_check_shallow, GradCheckConfig};
use zsl_core::model::{HeadDims, HeadParams, Model, ShallowParams};
use zsl_core::presets;
use zsl_core::rng::Rng;
use zsl_core::toy::{run_toy, ToyRunConfig};
use zsl_core::train::{two_phase_train, write_curves_csv, TrainData};
use zsl_core::ExecMode;

#[derive(Parser)]
#[command(name = "zsl", version, about = "Zero-shot learning with fictitious-class augmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the Gaussian toy experiment: train the vanilla, regular-dropout
    /// and fictitious variants, sweep gamma, export metrics and boundaries.
    Toy(ToyArgs),
    /// Train the attention head per config and write checkpoint + curves.
    Train(TrainArgs),
    /// Evaluate a checkpoint and emit a metrics report.
    Eval(EvalArgs),
    /// Sweep the calibration constant on the validation shards.
    SweepGamma(SweepArgs),
    /// Check analytic gradients against central finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct ToyArgs {
    /// Toy run configuration JSON; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "toy_out")]
    out: PathBuf,
    #[arg(long)]
    samples_per_class: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Boundary grid resolution per axis.
    #[arg(long)]
    resolution: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    /// Generated samples per batch.
    #[arg(long)]
    m: Option<usize>,
    /// Attribute drop probability.
    #[arg(long)]
    p: Option<f64>,
    /// Gamma grid point count.
    #[arg(long)]
    grid: Option<usize>,
    /// Dump one audit batch of fictitious masks.
    #[arg(long)]
    dump_masks: bool,
    /// Run evaluation loops sequentially.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Load m, p and gamma from a named hyperparameter preset.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Calibration constant; defaults to the config's gamma or a preset's.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Which scorer to check: head, shallow or both.
    #[arg(long, default_value = "both")]
    model: String,
    #[arg(long, default_value_t = 5)]
    instances: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Contract(_) | Error::Format { .. } | Error::Json(_) => 2,
        Error::Numeric(_) => 3,
        Error::Io(_) => 1,
    }
}

fn mode(sequential: bool) -> ExecMode {
    if sequential {
        ExecMode::Sequential
    } else {
        ExecMode::default()
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Toy(args) => cmd_toy(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::SweepGamma(args) => cmd_sweep_gamma(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
    }
}

fn cmd_toy(args: ToyArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            serde_json::from_str::<ToyRunConfig>(&text)
                .map_err(|e| Error::config(format!("{}: {e}", path.display())))?
        }
        None => ToyRunConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(n) = args.samples_per_class {
        cfg.toy.samples_per_class = n;
    }
    if let Some(epochs) = args.epochs {
        cfg.epochs = epochs;
    }
    if let Some(resolution) = args.resolution {
        cfg.resolution = resolution;
    }
    if let Some(hidden) = args.hidden {
        cfg.hidden = hidden;
    }
    if let Some(m) = args.m {
        cfg.m = m;
    }
    if let Some(p) = args.p {
        cfg.p = p;
    }
    if let Some(count) = args.grid {
        cfg.grid = GridSpec { count };
    }
    let mode = mode(args.sequential);
    let summary = run_toy(&cfg, &args.out, mode)?;
    for variant in &summary.variants {
        println!(
            "{}: hm {:.4} (acc_u {:.4}, acc_s {:.4}, t1 {:.4}) at gamma {:.4}",
            variant.variant,
            variant.hm,
            variant.acc_u,
            variant.acc_s,
            variant.t1.unwrap_or(f64::NAN),
            variant.best_gamma
        );
    }
    if args.dump_masks {
        // One audit batch: masks drawn exactly as the fictitious run draws
        // them for its first batch.
        let data = zsl_core::toy::toy_dataset(&cfg)?;
        let batch: Vec<_> = (0..cfg.batch_size.min(data.train.len()))
            .map(|i| data.train.features(i).transpose())
            .collect();
        let labels: Vec<usize> = (0..batch.len()).map(|i| data.train.label(i)).collect();
        let aug = AugmentConfig {
            strategy: Strategy::FictitiousDropout,
            m: cfg.m,
            p: cfg.p,
            mix_alpha: 1.0,
            seed: cfg.seed,
        };
        let fict = fictitious_dropout(&batch, &labels, &data.catalog, &aug, &mut Rng::new(aug.seed))?;
        let ids: Vec<&str> = fict
            .source_indices
            .iter()
            .map(|&i| data.train.sample_ids()[i].as_str())
            .collect();
        write_masks_csv(&args.out.join("fictitious_masks.csv"), &ids, &fict.masks)?;
    }
    println!("artifacts written to {}", args.out.display());
    Ok(())
}

fn apply_preset(cfg: &mut RunConfig, name: &str) -> Result<()> {
    let preset = presets::find(name).ok_or_else(|| {
        Error::config(format!(
            "unknown preset {name:?}; available: {}",
            presets::PRESETS
                .iter()
                .map(|p| p.name)
                .collect::<Vec<_>>()
                .join(", ")
        ))
    })?;
    cfg.train.augment.m = preset.m;
    cfg.train.augment.p = preset.drop_p();
    cfg.gamma = Some(preset.gamma);
    Ok(())
}

fn load_run_config(path: &std::path::Path, args_preset: &Option<String>) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(name) = args_preset {
        apply_preset(&mut cfg, name)?;
    }
    Ok(cfg)
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let mut cfg = load_run_config(&args.config, &args.preset)?;
    if let Some(seed) = args.seed {
        cfg.train.seed = seed;
        cfg.train.augment.seed = seed;
    }
    if let Some(out) = args.out {
        cfg.out = out;
    }
    if let Some(strategy) = &args.strategy {
        cfg.train.augment.strategy = Strategy::parse(strategy)?;
    }
    if let Some(m) = args.m {
        cfg.train.augment.m = m;
    }
    if let Some(p) = args.p {
        cfg.train.augment.p = p;
    }
    if let Some(count) = args.grid {
        cfg.grid = GridSpec { count };
    }
    let mode = mode(args.sequential);

    let catalog = load_catalog(&cfg)?;
    let train = load_shard(
        &catalog,
        &cfg.data.train_features,
        &cfg.data.train_labels,
        "train_features",
        "train_labels",
        Role::Train,
    )?;
    let val_seen = load_shard(
        &catalog,
        &cfg.data.val_seen_features,
        &cfg.data.val_seen_labels,
        "val_seen_features",
        "val_seen_labels",
        Role::Val,
    )?;
    let val_unseen = load_shard(
        &catalog,
        &cfg.data.val_unseen_features,
        &cfg.data.val_unseen_labels,
        "val_unseen_features",
        "val_unseen_labels",
        Role::Val,
    )?;

    let dims = HeadDims {
        n_attrs: catalog.n_attrs(),
        feat_dim: train.feat_dim(),
        embed_dim: cfg.model.embed_dim,
    };
    let model = Model::Head(HeadParams::init(dims, cfg.train.seed)?);
    let data = TrainData {
        train,
        val_seen,
        val_unseen,
    };
    let (model, records) = two_phase_train(model, &data, &catalog, &cfg.train, &cfg.grid, mode)?;

    std::fs::create_dir_all(&cfg.out)?;
    write_curves_csv(&cfg.out.join("curves.csv"), &records)?;
    let meta = CheckpointMeta {
        seed: cfg.train.seed,
        step: records.len() as u64,
    };
    save_checkpoint(&model, &meta, &cfg.out.join("checkpoint.ckpt"))?;

    let last = records.last().expect("at least one epoch");
    let mut metrics = evaluate_gzsl(
        &model,
        &data.val_seen,
        &data.val_unseen,
        &catalog,
        last.best_gamma,
        mode,
    )?;
    metrics.t1 = Some(evaluate_czsl(&model, &data.val_unseen, &catalog, mode)?);
    std::fs::write(
        cfg.out.join("final_metrics.json"),
        serde_json::to_string_pretty(&metrics)? + "\n",
    )?;
    println!(
        "trained {} epochs; final val hm {:.4} at gamma {:.4}; wrote {}",
        records.len(),
        last.val_hm,
        last.best_gamma,
        cfg.out.display()
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let mut cfg = load_run_config(&args.config, &args.preset)?;
    if let Some(out) = args.out {
        cfg.out = out;
    }
    if let Some(gamma) = args.gamma {
        cfg.gamma = Some(gamma);
    }
    let mode = mode(args.sequential);
    let catalog = load_catalog(&cfg)?;
    let (model, _) = load_checkpoint(&args.checkpoint)?;

    // Fall back to the validation shards when no test shards are named.
    let (seen_f, seen_l, seen_ff, seen_lf) = if cfg.data.test_seen_features.is_some() {
        (
            &cfg.data.test_seen_features,
            &cfg.data.test_seen_labels,
            "test_seen_features",
            "test_seen_labels",
        )
    } else {
        (
            &cfg.data.val_seen_features,
            &cfg.data.val_seen_labels,
            "val_seen_features",
            "val_seen_labels",
        )
    };
    let (unseen_f, unseen_l, unseen_ff, unseen_lf) = if cfg.data.test_unseen_features.is_some() {
        (
            &cfg.data.test_unseen_features,
            &cfg.data.test_unseen_labels,
            "test_unseen_features",
            "test_unseen_labels",
        )
    } else {
        (
            &cfg.data.val_unseen_features,
            &cfg.data.val_unseen_labels,
            "val_unseen_features",
            "val_unseen_labels",
        )
    };
    let test_seen = load_shard(&catalog, seen_f, seen_l, seen_ff, seen_lf, Role::TestSeen)?;
    let test_unseen = load_shard(
        &catalog,
        unseen_f,
        unseen_l,
        unseen_ff,
        unseen_lf,
        Role::TestUnseen,
    )?;

    let gamma = cfg.gamma.unwrap_or(0.0);
    let mut metrics = evaluate_gzsl(&model, &test_seen, &test_unseen, &catalog, gamma, mode)?;
    metrics.t1 = Some(evaluate_czsl(&model, &test_unseen, &catalog, mode)?);
    std::fs::create_dir_all(&cfg.out)?;
    let path = cfg.out.join("eval_metrics.json");
    std::fs::write(&path, serde_json::to_string_pretty(&metrics)? + "\n")?;
    println!(
        "hm {:.4} acc_u {:.4} acc_s {:.4} t1 {:.4} at gamma {gamma}; wrote {}",
        metrics.hm,
        metrics.acc_u,
        metrics.acc_s,
        metrics.t1.unwrap_or(f64::NAN),
        path.display()
    );
    Ok(())
}

fn cmd_sweep_gamma(args: SweepArgs) -> Result<()> {
    let mut cfg = load_run_config(&args.config, &None)?;
    if let Some(out) = args.out {
        cfg.out = out;
    }
    if let Some(count) = args.grid {
        cfg.grid = GridSpec { count };
    }
    let mode = mode(args.sequential);
    let catalog = load_catalog(&cfg)?;
    let (model, _) = load_checkpoint(&args.checkpoint)?;
    let val_seen = load_shard(
        &catalog,
        &cfg.data.val_seen_features,
        &cfg.data.val_seen_labels,
        "val_seen_features",
        "val_seen_labels",
        Role::Val,
    )?;
    let val_unseen = load_shard(
        &catalog,
        &cfg.data.val_unseen_features,
        &cfg.data.val_unseen_labels,
        "val_unseen_features",
        "val_unseen_labels",
        Role::Val,
    )?;
    let sweep = sweep_gamma(&model, &val_seen, &val_unseen, &catalog, &cfg.grid, mode)?;
    std::fs::create_dir_all(&cfg.out)?;
    write_sweep_csv(&cfg.out.join("gamma_sweep.csv"), &sweep)?;
    std::fs::write(
        cfg.out.join("gamma_sweep.json"),
        serde_json::to_string_pretty(&sweep)? + "\n",
    )?;
    println!(
        "best hm {:.4} at gamma {:.4}; wrote {}",
        sweep.best_hm,
        sweep.best_gamma,
        cfg.out.display()
    );
    Ok(())
}

fn cmd_gradcheck(args: GradcheckArgs) -> Result<()> {
    let check_cfg = GradCheckConfig::default();
    let mut rng = Rng::new(args.seed);
    let mut worst: f64 = 0.0;
    let mut failed = false;

    let check_head = args.model == "head" || args.model == "both";
    let check_shallow = args.model == "shallow" || args.model == "both";
    if !check_head && !check_shallow {
        return Err(Error::config(format!(
            "unknown model {:?}; expected head, shallow or both",
            args.model
        )));
    }

    if check_head {
        for i in 0..args.instances {
            let dims = HeadDims {
                n_attrs: 1 + rng.below(3),
                feat_dim: 1 + rng.below(4),
                embed_dim: 1 + rng.below(3),
            };
            let regions = 1 + rng.below(3);
            let n_classes = 1 + rng.below(4);
            let batch = 1 + rng.below(3);
            let params = HeadParams::init(dims, rng.next_u64())?;
            let features: Vec<zsl_core::linalg::Mat> = (0..batch)
                .map(|_| zsl_core::linalg::Mat::from_fn(regions, dims.feat_dim, |_, _| rng.normal()))
                .collect();
            let labels: Vec<usize> = (0..batch).map(|_| rng.below(n_classes)).collect();
            let classifiers =
                zsl_core::linalg::Mat::from_fn(n_classes, dims.n_attrs, |_, _| rng.normal());
            let report = grad_check_head(&params, &features, &labels, &classifiers, &check_cfg)?;
            worst = worst.max(report.max_rel_error());
            let status = if report.passed() { "ok" } else { "FAIL" };
            println!(
                "head instance {i}: max rel error {:.3e} [{status}]",
                report.max_rel_error()
            );
            failed |= !report.passed();
        }
    }
    if check_shallow {
        for i in 0..args.instances {
            let hidden = 4 + rng.below(12);
            let params = ShallowParams::init(2, hidden, 2, rng.next_u64())?;
            let n_classes = 2 + rng.below(3);
            let classifiers = zsl_core::linalg::Mat::from_fn(n_classes, 2, |_, _| rng.normal());
            let batch = 1 + rng.below(4);
            let inputs: Vec<Vec<f64>> =
                (0..batch).map(|_| vec![rng.normal(), rng.normal()]).collect();
            let labels: Vec<usize> = (0..batch).map(|_| rng.below(n_classes)).collect();
            let report = grad_check_shallow(&params, &inputs, &labels, &classifiers, &check_cfg)?;
            worst = worst.max(report.max_rel_error());
            let status = if report.passed() { "ok" } else { "FAIL" };
            println!(
                "shallow instance {i}: max rel error {:.3e} [{status}]",
                report.max_rel_error()
            );
            failed |= !report.passed();
        }
    }
    if failed {
        return Err(Error::numeric(format!(
            "gradient check failed; worst relative error {worst:.3e}"
        )));
    }
    println!("all gradient checks passed; worst relative error {worst:.3e}");
    Ok(())
}
