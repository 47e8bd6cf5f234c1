//! `moscl train`: run the staged training loop against prepared artifacts
//! and write the history, per-epoch checkpoints, and averaged final model.

use std::path::{Path, PathBuf};

use clap::Args;

use moscl_core::curriculum::read_plan;
use moscl_core::dataset::{apply_normalization, load_manifest, LabelPolicy};
use moscl_core::difficulty::read_policy;
use moscl_core::model::{write_checkpoint, ModelCheckpoint, CHECKPOINT_FORMAT_VERSION};
use moscl_core::trainer::{check_history_invariants, select_top_k, train, validation_metrics};

use crate::commands::{ensure_dir, write_pretty_json};
use crate::config::{load_config, write_effective_config};
use crate::CliError;

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training manifest (default: <data_dir>/train.jsonl).
    #[arg(long, value_name = "FILE")]
    train: Option<PathBuf>,

    /// Validation manifest (default: <data_dir>/val.jsonl).
    #[arg(long, value_name = "FILE")]
    val: Option<PathBuf>,

    /// Curriculum plan (default: <out_dir>/curriculum.json).
    #[arg(long, value_name = "FILE")]
    plan: Option<PathBuf>,

    /// Temperature policy (default: <out_dir>/policy.json).
    #[arg(long, value_name = "FILE")]
    policy: Option<PathBuf>,

    /// Directory for training artifacts.
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,

    /// Maximum number of epochs.
    #[arg(long, value_name = "N")]
    epochs: Option<usize>,

    /// RNG seed for init and shuffling.
    #[arg(long, value_name = "SEED")]
    seed: Option<u64>,

    /// Mini-batch size.
    #[arg(long, value_name = "N")]
    batch_size: Option<usize>,

    /// Early-stopping patience in epochs.
    #[arg(long, value_name = "N")]
    patience: Option<usize>,

    /// Adam learning rate.
    #[arg(long, value_name = "LR")]
    lr: Option<f64>,

    /// Train on the full set from epoch 1 (no staged admission).
    #[arg(long, conflicts_with = "cl")]
    no_cl: bool,

    /// Force staged admission on, overriding the config file.
    #[arg(long)]
    cl: bool,

    /// Keep every loss temperature at 1 (no difficulty-aware scaling).
    #[arg(long, conflicts_with = "dt")]
    no_dt: bool,

    /// Force difficulty-aware temperatures on, overriding the config file.
    #[arg(long)]
    dt: bool,

    /// Which per-epoch checkpoints to keep on disk: "top-k" or "all".
    #[arg(long, value_name = "MODE")]
    keep_checkpoints: Option<String>,
}

pub fn run(args: &TrainArgs, config_path: Option<&Path>) -> Result<(), CliError> {
    let mut config = load_config(config_path)?;
    if let Some(dir) = &args.out_dir {
        config.paths.out_dir = dir.clone();
    }
    if let Some(n) = args.epochs {
        config.trainer.epochs = n;
    }
    if let Some(seed) = args.seed {
        config.trainer.seed = seed;
    }
    if let Some(n) = args.batch_size {
        config.trainer.batch_size = n;
    }
    if let Some(n) = args.patience {
        config.trainer.patience = n;
    }
    if let Some(lr) = args.lr {
        config.optimizer.lr = lr;
    }
    if args.cl {
        config.trainer.cl_enabled = true;
    }
    if args.no_cl {
        config.trainer.cl_enabled = false;
    }
    if args.dt {
        config.trainer.dt_enabled = true;
    }
    if args.no_dt {
        config.trainer.dt_enabled = false;
    }
    if let Some(mode) = &args.keep_checkpoints {
        config.trainer.keep_checkpoints = mode.clone();
    }
    let keep_all = config.keep_checkpoints_all()?;
    let cfg = config.train_config()?;

    let train_path =
        args.train.clone().unwrap_or_else(|| config.paths.data_dir.join("train.jsonl"));
    let val_path = args.val.clone().unwrap_or_else(|| config.paths.data_dir.join("val.jsonl"));
    let mut train_manifest = load_manifest(&train_path, LabelPolicy::Required)?;
    let val_manifest = load_manifest(&val_path, LabelPolicy::Required)?;

    let out_dir = config.paths.out_dir.clone();

    let plan = if cfg.cl_enabled {
        let path = args.plan.clone().unwrap_or_else(|| out_dir.join("curriculum.json"));
        if !path.exists() {
            return Err(CliError::Usage(format!(
                "curriculum plan not found at {}; run `moscl prepare` first or pass --no-cl",
                path.display()
            )));
        }
        Some(read_plan(&path)?)
    } else {
        None
    };

    let policy = if cfg.dt_enabled {
        let path = args.policy.clone().unwrap_or_else(|| out_dir.join("policy.json"));
        if !path.exists() {
            return Err(CliError::Usage(format!(
                "temperature policy not found at {}; run `moscl prepare` first or pass --no-dt",
                path.display()
            )));
        }
        let body = read_policy(&path)?;
        apply_normalization(&mut train_manifest.samples, &body.stats)?;
        Some(body.policy)
    } else {
        None
    };

    let outcome = train(
        &train_manifest.samples,
        &val_manifest.samples,
        plan.as_ref(),
        policy.as_ref(),
        &cfg,
    )?;
    check_history_invariants(&outcome.history, &cfg, plan.as_ref())?;

    for rec in &outcome.history.epochs {
        println!(
            "epoch {:>4}  stage {}  level {:.2}  subset {:>6}  dt {}  mean-tau {:.4}  \
             train {:.4}  val {:.4}  val-eer {:.4}",
            rec.epoch,
            rec.stage,
            rec.stage_level,
            rec.active_subset_size,
            if rec.dt_active { "on " } else { "off" },
            rec.mean_temperature,
            rec.train_loss,
            rec.val_loss,
            rec.val_eer,
        );
    }

    ensure_dir(&out_dir)?;
    write_pretty_json(&out_dir.join("history.json"), &outcome.history)?;

    let ckpt_dir = out_dir.join("checkpoints");
    ensure_dir(&ckpt_dir)?;
    let kept: Vec<usize> = if keep_all {
        (0..outcome.checkpoints.len()).collect()
    } else {
        select_top_k(&outcome.checkpoints, cfg.top_k_average, cfg.rank_metric)?
    };
    for &idx in &kept {
        let ckpt = &outcome.checkpoints[idx];
        write_checkpoint(&ckpt_dir.join(format!("epoch-{:04}.json", ckpt.epoch)), ckpt)?;
    }

    let (final_loss, final_eer) = validation_metrics(&outcome.final_params, &val_manifest.samples)?;
    let final_ckpt = ModelCheckpoint {
        format_version: CHECKPOINT_FORMAT_VERSION,
        params: outcome.final_params,
        seed: cfg.seed,
        epoch: outcome.history.stop_epoch,
        val_loss: final_loss,
        val_eer: final_eer,
    };
    write_checkpoint(&out_dir.join("final-model.json"), &final_ckpt)?;
    write_effective_config(&out_dir, &config)?;

    if outcome.history.stopped_early {
        println!(
            "stopped early at epoch {} (patience {})",
            outcome.history.stop_epoch, cfg.patience
        );
    } else {
        println!("ran all {} epochs", cfg.epochs);
    }
    println!(
        "kept {} checkpoint(s); averaged final model: val loss {:.4}, val EER {:.4}",
        kept.len(),
        final_loss,
        final_eer
    );
    println!("artifacts written to {}", out_dir.display());
    Ok(())
}
