//! `moscl ablation`: train every requested arm across a seed sweep and
//! report per-arm median test EER.

use std::path::{Path, PathBuf};

use clap::Args;

use moscl_core::dataset::{load_manifest, LabelPolicy};
use moscl_core::pipeline::{run_ablation, standard_arms, write_ablation_report};

use crate::commands::ensure_dir;
use crate::config::{load_config, write_effective_config};
use crate::CliError;

#[derive(Debug, Args)]
pub struct AblationArgs {
    /// Training manifest (default: <data_dir>/train.jsonl).
    #[arg(long, value_name = "FILE")]
    train: Option<PathBuf>,

    /// Validation manifest (default: <data_dir>/val.jsonl).
    #[arg(long, value_name = "FILE")]
    val: Option<PathBuf>,

    /// Test manifest (default: <data_dir>/test.jsonl).
    #[arg(long, value_name = "FILE")]
    test: Option<PathBuf>,

    /// Directory for the ablation report.
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,

    /// Number of seeds per arm.
    #[arg(long, value_name = "N")]
    seeds: Option<usize>,

    /// First seed; runs use seed_base, seed_base+1, ...
    #[arg(long, value_name = "SEED")]
    seed_base: Option<u64>,

    /// Arms to run, comma separated (default: all four).
    #[arg(long, value_delimiter = ',', value_name = "NAMES")]
    arms: Option<Vec<String>>,

    /// Maximum number of epochs per run.
    #[arg(long, value_name = "N")]
    epochs: Option<usize>,
}

pub fn run(args: &AblationArgs, config_path: Option<&Path>) -> Result<(), CliError> {
    let mut config = load_config(config_path)?;
    if let Some(dir) = &args.out_dir {
        config.paths.out_dir = dir.clone();
    }
    if let Some(n) = args.seeds {
        config.ablation.seeds = n;
    }
    if let Some(base) = args.seed_base {
        config.ablation.seed_base = base;
    }
    if let Some(names) = &args.arms {
        config.ablation.arms = names.clone();
    }
    if let Some(n) = args.epochs {
        config.trainer.epochs = n;
    }

    let catalog = standard_arms();
    let mut arms = Vec::with_capacity(config.ablation.arms.len());
    for name in &config.ablation.arms {
        match catalog.iter().find(|spec| spec.name == *name) {
            Some(spec) => arms.push(spec.clone()),
            None => {
                let valid: Vec<&str> = catalog.iter().map(|s| s.name.as_str()).collect();
                return Err(CliError::Usage(format!(
                    "unknown arm \"{name}\"; valid arms: {}",
                    valid.join(", ")
                )));
            }
        }
    }

    let train_path =
        args.train.clone().unwrap_or_else(|| config.paths.data_dir.join("train.jsonl"));
    let val_path = args.val.clone().unwrap_or_else(|| config.paths.data_dir.join("val.jsonl"));
    let test_path = args.test.clone().unwrap_or_else(|| config.paths.data_dir.join("test.jsonl"));
    let train_manifest = load_manifest(&train_path, LabelPolicy::Required)?;
    let val_manifest = load_manifest(&val_path, LabelPolicy::Required)?;
    let test_manifest = load_manifest(&test_path, LabelPolicy::Required)?;

    let seeds: Vec<u64> = (0..config.ablation.seeds as u64)
        .map(|i| config.ablation.seed_base + i)
        .collect();
    let prep_cfg = config.prepare_config()?;
    let base_cfg = config.train_config()?;

    let report = run_ablation(
        &train_manifest.samples,
        &val_manifest.samples,
        &test_manifest.samples,
        &prep_cfg,
        &base_cfg,
        &arms,
        &seeds,
    )?;

    for arm in &report.arms {
        for run in &arm.runs {
            let ending = if run.stopped_early {
                format!("stopped early at epoch {}", run.epochs_run)
            } else {
                format!("ran {} epochs", run.epochs_run)
            };
            println!(
                "{:<10} seed {:>4}: test EER {:.4} ({ending})",
                arm.arm.name, run.seed, run.test_eer
            );
        }
    }
    println!("---");
    for arm in &report.arms {
        println!(
            "{:<10} median test EER over {} seed(s): {:.4}",
            arm.arm.name,
            arm.runs.len(),
            arm.median_test_eer
        );
    }

    let out_dir = config.paths.out_dir.clone();
    ensure_dir(&out_dir)?;
    let report_path = out_dir.join("ablation-report.json");
    write_ablation_report(&report_path, &report)?;
    write_effective_config(&out_dir, &config)?;
    println!("report written to {}", report_path.display());
    Ok(())
}
