//! `moscl prepare`: fit everything derived from the training split and
//! write the four artifacts other commands consume.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;

use moscl_core::dataset::{load_manifest, LabelPolicy, NormalizationStats};
use moscl_core::difficulty::{
    write_difficulty_table, write_policy, PolicyBody, ThresholdProvenance, POLICY_VERSION,
};
use moscl_core::curriculum::write_plan;
use moscl_core::pipeline::prepare;

use crate::commands::{ensure_dir, file_sha256, write_pretty_json};
use crate::config::{load_config, write_effective_config};
use crate::CliError;

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// Training manifest (default: <data_dir>/train.jsonl).
    #[arg(long, value_name = "FILE")]
    train: Option<PathBuf>,

    /// Directory for the prepared artifacts.
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,

    /// Balance the two classes in the threshold search.
    #[arg(long)]
    balanced: bool,

    /// Skip the threshold search and use this value.
    #[arg(long, value_name = "T")]
    threshold: Option<f64>,

    /// Difficulty ceilings, comma separated (e.g. 0.35,0.5,0.65,0.8,1.0).
    #[arg(long, value_delimiter = ',', value_name = "LEVELS")]
    levels: Option<Vec<f64>>,

    /// First epoch of each stage, comma separated (e.g. 1,9,17,21,23).
    #[arg(long, value_delimiter = ',', value_name = "EPOCHS")]
    pacing: Option<Vec<usize>>,

    /// MOS normalization: "minmax" or "fixed_range".
    #[arg(long, value_name = "NAME")]
    strategy: Option<String>,

    /// Curriculum level at which loss temperatures switch on.
    #[arg(long, value_name = "LEVEL")]
    activation_level: Option<f64>,

    /// Use an evenly spaced threshold grid with this many candidates
    /// instead of the midpoint grid.
    #[arg(long, value_name = "N")]
    fixed_grid: Option<usize>,
}

#[derive(Serialize)]
struct ArtifactHashes {
    difficulty_table_sha256: String,
    curriculum_plan_sha256: String,
    policy_sha256: String,
}

#[derive(Serialize)]
struct PrepareSummary<'a> {
    version: u32,
    n_train: usize,
    n_spoof: usize,
    n_bonafide: usize,
    threshold: f64,
    threshold_mode: &'a str,
    balanced: bool,
    threshold_error_rate: Option<f64>,
    asymmetry: f64,
    normalization: &'a NormalizationStats,
    stage_levels: Vec<f64>,
    stage_sizes: Vec<usize>,
    artifacts: ArtifactHashes,
}

pub fn run(args: &PrepareArgs, config_path: Option<&Path>) -> Result<(), CliError> {
    let mut config = load_config(config_path)?;
    if let Some(dir) = &args.out_dir {
        config.paths.out_dir = dir.clone();
    }
    if args.balanced {
        config.threshold.balanced = true;
    }
    if let Some(t) = args.threshold {
        config.threshold.override_value = Some(t);
    }
    if let Some(levels) = &args.levels {
        config.curriculum.levels = levels.clone();
    }
    if let Some(pacing) = &args.pacing {
        config.curriculum.pacing = pacing.clone();
    }
    if let Some(strategy) = &args.strategy {
        config.normalization.strategy = strategy.clone();
    }
    if let Some(level) = args.activation_level {
        config.dt.activation_level = level;
    }
    if let Some(steps) = args.fixed_grid {
        config.threshold.grid = "fixed_steps".to_string();
        config.threshold.grid_steps = steps;
    }

    let train_path =
        args.train.clone().unwrap_or_else(|| config.paths.data_dir.join("train.jsonl"));
    let manifest = load_manifest(&train_path, LabelPolicy::Required)?;
    let n_train = manifest.samples.len();

    let prep_cfg = config.prepare_config()?;
    let prepared = prepare(manifest.samples, &prep_cfg)?;

    let out_dir = config.paths.out_dir.clone();
    ensure_dir(&out_dir)?;

    let table_path = out_dir.join("difficulty-table.txt");
    write_difficulty_table(&table_path, &prepared.records)?;

    let plan_path = out_dir.join("curriculum.json");
    write_plan(&plan_path, &prepared.plan)?;

    let policy_path = out_dir.join("policy.json");
    write_policy(
        &policy_path,
        &PolicyBody {
            version: POLICY_VERSION,
            policy: prepared.policy,
            stats: prepared.stats,
            search: ThresholdProvenance {
                mode: prepared.decision.mode.clone(),
                balanced: prepared.decision.balanced,
                error_rate: prepared.decision.error_rate,
            },
        },
    )?;

    let n_spoof = prepared
        .train
        .iter()
        .filter(|s| s.label == Some(moscl_core::dataset::Label::Spoof))
        .count();
    let summary = PrepareSummary {
        version: 1,
        n_train,
        n_spoof,
        n_bonafide: n_train - n_spoof,
        threshold: prepared.decision.threshold,
        threshold_mode: &prepared.decision.mode,
        balanced: prepared.decision.balanced,
        threshold_error_rate: prepared.decision.error_rate,
        asymmetry: prepared.policy.asymmetry,
        normalization: &prepared.stats,
        stage_levels: prepared.plan.stages.iter().map(|s| s.level).collect(),
        stage_sizes: prepared.plan.stages.iter().map(|s| s.member_ids.len()).collect(),
        artifacts: ArtifactHashes {
            difficulty_table_sha256: file_sha256(&table_path)?,
            curriculum_plan_sha256: file_sha256(&plan_path)?,
            policy_sha256: file_sha256(&policy_path)?,
        },
    };
    write_pretty_json(&out_dir.join("prepare-summary.json"), &summary)?;
    write_effective_config(&out_dir, &config)?;

    println!(
        "prepared {n_train} samples: threshold {:.6} ({}), asymmetry {:.4}",
        prepared.decision.threshold, prepared.decision.mode, prepared.policy.asymmetry
    );
    let sizes: Vec<String> =
        prepared.plan.stages.iter().map(|s| format!("{}@{:.2}", s.member_ids.len(), s.level)).collect();
    println!("curriculum stages (size@level): {}", sizes.join(" "));
    println!("artifacts written to {}", out_dir.display());
    Ok(())
}
