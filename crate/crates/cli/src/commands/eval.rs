//! `moscl eval`: score a manifest with a saved model and, when labels are
//! present, report detection metrics.

use std::path::{Path, PathBuf};

use clap::Args;

use moscl_core::dataset::{load_manifest, LabelPolicy};
use moscl_core::metrics::{evaluate, score_sample, write_score_file, ScoreRecord, TdcfCoeffs};
use moscl_core::model::read_checkpoint;

use crate::commands::{ensure_dir, write_pretty_json};
use crate::config::load_config;
use crate::CliError;

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Model checkpoint to score with (default: <out_dir>/final-model.json).
    #[arg(long, value_name = "FILE")]
    model: Option<PathBuf>,

    /// Manifest to score (default: <data_dir>/test.jsonl).
    #[arg(long, value_name = "FILE")]
    data: Option<PathBuf>,

    /// Directory for the score and report files.
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,

    /// Write scores but skip the metric report even if labels exist.
    #[arg(long)]
    scores_only: bool,

    /// Fixed cost added to every operating point.
    #[arg(long, value_name = "C0")]
    c0: Option<f64>,

    /// Cost per unit of miss rate.
    #[arg(long, value_name = "C1")]
    c1: Option<f64>,

    /// Cost per unit of false-alarm rate.
    #[arg(long, value_name = "C2")]
    c2: Option<f64>,
}

fn resolve_coeffs(args: &EvalArgs, config_coeffs: Option<TdcfCoeffs>) -> Result<Option<TdcfCoeffs>, CliError> {
    match (args.c0, args.c1, args.c2) {
        (Some(c0), Some(c1), Some(c2)) => Ok(Some(TdcfCoeffs { c0, c1, c2 })),
        (None, None, None) => Ok(config_coeffs),
        _ => Err(CliError::Usage(
            "pass all of --c0, --c1, --c2 or none of them".to_string(),
        )),
    }
}

pub fn run(args: &EvalArgs, config_path: Option<&Path>) -> Result<(), CliError> {
    let mut config = load_config(config_path)?;
    if let Some(dir) = &args.out_dir {
        config.paths.out_dir = dir.clone();
    }

    let model_path =
        args.model.clone().unwrap_or_else(|| config.paths.out_dir.join("final-model.json"));
    if !model_path.exists() {
        return Err(CliError::Usage(format!(
            "model checkpoint not found at {}; run `moscl train` first or pass --model",
            model_path.display()
        )));
    }
    let checkpoint = read_checkpoint(&model_path)?;

    let data_path =
        args.data.clone().unwrap_or_else(|| config.paths.data_dir.join("test.jsonl"));
    let manifest = load_manifest(&data_path, LabelPolicy::Optional)?;
    if manifest.samples.is_empty() {
        return Err(CliError::Usage(format!("{} holds no samples", data_path.display())));
    }

    let mut records = Vec::with_capacity(manifest.samples.len());
    for sample in &manifest.samples {
        records.push(ScoreRecord {
            id: sample.id.clone(),
            score: score_sample(&checkpoint.params, &sample.features)?,
            label: sample.label,
        });
    }

    let stem = data_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("eval")
        .to_string();
    let out_dir = config.paths.out_dir.clone();
    ensure_dir(&out_dir)?;
    let scores_path = out_dir.join(format!("{stem}.scores.txt"));
    write_score_file(&scores_path, &records)?;
    println!("wrote {} scores to {}", records.len(), scores_path.display());

    let fully_labeled = records.iter().all(|r| r.label.is_some());
    if args.scores_only || !fully_labeled {
        if !fully_labeled {
            println!("labels absent from {}; wrote scores only", data_path.display());
        }
        return Ok(());
    }

    let coeffs = resolve_coeffs(args, config.tdcf.map(|t| t.to_coeffs()))?;
    let report = evaluate(&records, coeffs.as_ref())?;
    let report_path = out_dir.join(format!("{stem}.report.json"));
    write_pretty_json(&report_path, &report)?;
    println!(
        "evaluated {} spoof / {} bonafide: EER {:.4} at threshold {:.6}",
        report.n_spoof, report.n_bonafide, report.eer, report.eer_threshold
    );
    if let Some(tdcf) = report.min_tdcf {
        println!("min detection cost {tdcf:.4}");
    }
    println!("report written to {}", report_path.display());
    Ok(())
}
