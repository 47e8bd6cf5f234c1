//! `moscl gen-data`: write the synthetic train/val/test manifests plus a
//! sidecar recording the generator's latent state.

use std::path::{Path, PathBuf};

use clap::Args;

use moscl_core::dataset::{generate_synthetic, write_manifest, write_sidecar};

use crate::commands::ensure_dir;
use crate::config::{load_config, write_effective_config};
use crate::CliError;

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Directory to write the splits into.
    #[arg(long, value_name = "DIR")]
    data_dir: Option<PathBuf>,

    /// Generator seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Shift the test split's spoofs toward the deceptive end of the
    /// quality range.
    #[arg(long)]
    shifted_test: bool,

    /// Bona fide training samples to generate.
    #[arg(long)]
    n_bonafide: Option<usize>,

    /// Spoofed training samples to generate.
    #[arg(long)]
    n_spoof: Option<usize>,

    /// Feature vector width.
    #[arg(long)]
    feature_dim: Option<usize>,
}

pub fn run(args: &GenDataArgs, config_path: Option<&Path>) -> Result<(), CliError> {
    let mut config = load_config(config_path)?;
    if let Some(dir) = &args.data_dir {
        config.paths.data_dir = dir.clone();
    }
    if let Some(seed) = args.seed {
        config.synth.seed = seed;
    }
    if args.shifted_test {
        config.synth.shifted_test = true;
    }
    if let Some(n) = args.n_bonafide {
        config.synth.n_bonafide = n;
    }
    if let Some(n) = args.n_spoof {
        config.synth.n_spoof = n;
    }
    if let Some(d) = args.feature_dim {
        config.synth.feature_dim = d;
    }

    let synth = config.synth.to_synth_config();
    let data = generate_synthetic(&synth, config.synth.shifted_test)?;

    let dir = config.paths.data_dir.clone();
    ensure_dir(&dir)?;
    write_manifest(&dir.join("train.jsonl"), &data.train)?;
    write_manifest(&dir.join("val.jsonl"), &data.val)?;
    write_manifest(&dir.join("test.jsonl"), &data.test)?;
    write_sidecar(&dir.join("synth-meta.json"), &data.sidecar)?;
    write_effective_config(&dir, &config)?;

    println!(
        "wrote {} train / {} val / {} test samples to {} (seed {}, shifted test: {})",
        data.train.samples.len(),
        data.val.samples.len(),
        data.test.samples.len(),
        dir.display(),
        synth.seed,
        config.synth.shifted_test
    );
    Ok(())
}
