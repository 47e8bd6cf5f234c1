//! The TOML run configuration. Every field has a default, so an empty file
//! (or no file at all) is a valid configuration; command-line flags override
//! individual values afterwards. Whatever a command actually used is echoed
//! to `effective-config.toml` in its output directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use moscl_core::curriculum::CurriculumConfig;
use moscl_core::dataset::{NormStrategy, SynthConfig};
use moscl_core::difficulty::GridMode;
use moscl_core::metrics::TdcfCoeffs;
use moscl_core::model::AdamHyper;
use moscl_core::pipeline::PrepareConfig;
use moscl_core::trainer::{AveragingMode, RankMetric, TrainConfig};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: PathsSection,
    pub synth: SynthSection,
    pub normalization: NormalizationSection,
    pub threshold: ThresholdSection,
    pub curriculum: CurriculumSection,
    pub dt: DtSection,
    pub trainer: TrainerSection,
    pub optimizer: OptimizerSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tdcf: Option<TdcfSection>,
    pub ablation: AblationSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            paths: PathsSection::default(),
            synth: SynthSection::default(),
            normalization: NormalizationSection::default(),
            threshold: ThresholdSection::default(),
            curriculum: CurriculumSection::default(),
            dt: DtSection::default(),
            trainer: TrainerSection::default(),
            optimizer: OptimizerSection::default(),
            tdcf: None,
            ablation: AblationSection::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
}

impl Default for PathsSection {
    fn default() -> Self {
        PathsSection { data_dir: PathBuf::from("data"), out_dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub n_bonafide: usize,
    pub n_spoof: usize,
    pub feature_dim: usize,
    pub quality_lo: f64,
    pub quality_hi: f64,
    pub mos_noise_sd: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
    pub shifted_test: bool,
}

impl Default for SynthSection {
    fn default() -> Self {
        let c = SynthConfig::default();
        SynthSection {
            n_bonafide: c.n_bonafide,
            n_spoof: c.n_spoof,
            feature_dim: c.feature_dim,
            quality_lo: c.quality_lo,
            quality_hi: c.quality_hi,
            mos_noise_sd: c.mos_noise_sd,
            val_fraction: c.val_fraction,
            test_fraction: c.test_fraction,
            seed: c.seed,
            shifted_test: false,
        }
    }
}

impl SynthSection {
    pub fn to_synth_config(&self) -> SynthConfig {
        SynthConfig {
            n_bonafide: self.n_bonafide,
            n_spoof: self.n_spoof,
            feature_dim: self.feature_dim,
            quality_lo: self.quality_lo,
            quality_hi: self.quality_hi,
            mos_noise_sd: self.mos_noise_sd,
            val_fraction: self.val_fraction,
            test_fraction: self.test_fraction,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormalizationSection {
    /// "minmax" or "fixed_range".
    pub strategy: String,
}

impl Default for NormalizationSection {
    fn default() -> Self {
        NormalizationSection { strategy: "minmax".to_string() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdSection {
    pub balanced: bool,
    /// "midpoints" or "fixed_steps".
    pub grid: String,
    /// Number of candidates when `grid = "fixed_steps"`.
    pub grid_steps: usize,
    /// Skip the search entirely and use this threshold.
    #[serde(rename = "override", skip_serializing_if = "Option::is_none")]
    pub override_value: Option<f64>,
}

impl Default for ThresholdSection {
    fn default() -> Self {
        ThresholdSection { balanced: false, grid: "midpoints".to_string(), grid_steps: 101, override_value: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurriculumSection {
    pub levels: Vec<f64>,
    pub pacing: Vec<usize>,
}

impl Default for CurriculumSection {
    fn default() -> Self {
        let c = CurriculumConfig::default();
        CurriculumSection { levels: c.levels, pacing: c.pacing }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DtSection {
    pub activation_level: f64,
}

impl Default for DtSection {
    fn default() -> Self {
        DtSection { activation_level: 0.8 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden_sizes: Vec<usize>,
    pub cl_enabled: bool,
    pub dt_enabled: bool,
    pub patience: usize,
    pub top_k_average: usize,
    /// "inverse_metric" or "uniform".
    pub averaging: String,
    /// "loss" or "eer".
    pub rank_metric: String,
    pub seed: u64,
    /// "top-k" keeps only the averaged checkpoints, "all" keeps every epoch.
    pub keep_checkpoints: String,
}

impl Default for TrainerSection {
    fn default() -> Self {
        let c = TrainConfig::default();
        TrainerSection {
            epochs: c.epochs,
            batch_size: c.batch_size,
            hidden_sizes: c.hidden_sizes,
            cl_enabled: c.cl_enabled,
            dt_enabled: c.dt_enabled,
            patience: c.patience,
            top_k_average: c.top_k_average,
            averaging: "inverse_metric".to_string(),
            rank_metric: "loss".to_string(),
            seed: c.seed,
            keep_checkpoints: "top-k".to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSection {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let h = AdamHyper::default();
        OptimizerSection {
            lr: h.lr,
            beta1: h.beta1,
            beta2: h.beta2,
            epsilon: h.epsilon,
            weight_decay: h.weight_decay,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TdcfSection {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
}

impl TdcfSection {
    pub fn to_coeffs(self) -> TdcfCoeffs {
        TdcfCoeffs { c0: self.c0, c1: self.c1, c2: self.c2 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSection {
    /// Number of seeds per arm.
    pub seeds: usize,
    /// First seed; runs use seed_base, seed_base + 1, ...
    pub seed_base: u64,
    /// Arm names; must come from the standard set.
    pub arms: Vec<String>,
}

impl Default for AblationSection {
    fn default() -> Self {
        AblationSection {
            seeds: 10,
            seed_base: 100,
            arms: vec!["baseline".into(), "cl-only".into(), "dt-only".into(), "cl-dt".into()],
        }
    }
}

/// Loads the configuration file, or the defaults when no path is given.
pub fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
            toml::from_str(&text)
                .map_err(|e| CliError::Usage(format!("bad config {}: {e}", p.display())))
        }
    }
}

/// Writes the merged configuration a command actually ran with.
pub fn write_effective_config(dir: &Path, config: &RunConfig) -> Result<(), CliError> {
    let text = toml::to_string_pretty(config)
        .map_err(|e| CliError::Usage(format!("cannot serialize effective config: {e}")))?;
    let path = dir.join("effective-config.toml");
    fs::write(&path, text)
        .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

impl RunConfig {
    pub fn norm_strategy(&self) -> Result<NormStrategy, CliError> {
        match self.normalization.strategy.as_str() {
            "minmax" => Ok(NormStrategy::MinMax),
            "fixed_range" => Ok(NormStrategy::FixedRange),
            other => Err(CliError::Usage(format!(
                "unknown normalization strategy {other:?}, expected \"minmax\" or \"fixed_range\""
            ))),
        }
    }

    pub fn grid_mode(&self) -> Result<GridMode, CliError> {
        match self.threshold.grid.as_str() {
            "midpoints" => Ok(GridMode::Midpoints),
            "fixed_steps" => Ok(GridMode::FixedSteps(self.threshold.grid_steps)),
            other => Err(CliError::Usage(format!(
                "unknown threshold grid {other:?}, expected \"midpoints\" or \"fixed_steps\""
            ))),
        }
    }

    pub fn averaging_mode(&self) -> Result<AveragingMode, CliError> {
        match self.trainer.averaging.as_str() {
            "inverse_metric" => Ok(AveragingMode::InverseMetric),
            "uniform" => Ok(AveragingMode::Uniform),
            other => Err(CliError::Usage(format!(
                "unknown averaging mode {other:?}, expected \"inverse_metric\" or \"uniform\""
            ))),
        }
    }

    pub fn rank_metric(&self) -> Result<RankMetric, CliError> {
        match self.trainer.rank_metric.as_str() {
            "loss" => Ok(RankMetric::Loss),
            "eer" => Ok(RankMetric::Eer),
            other => Err(CliError::Usage(format!(
                "unknown rank metric {other:?}, expected \"loss\" or \"eer\""
            ))),
        }
    }

    pub fn keep_checkpoints_all(&self) -> Result<bool, CliError> {
        match self.trainer.keep_checkpoints.as_str() {
            "top-k" => Ok(false),
            "all" => Ok(true),
            other => Err(CliError::Usage(format!(
                "unknown checkpoint retention {other:?}, expected \"top-k\" or \"all\""
            ))),
        }
    }

    pub fn curriculum_config(&self) -> CurriculumConfig {
        CurriculumConfig { levels: self.curriculum.levels.clone(), pacing: self.curriculum.pacing.clone() }
    }

    pub fn prepare_config(&self) -> Result<PrepareConfig, CliError> {
        Ok(PrepareConfig {
            strategy: self.norm_strategy()?,
            threshold_override: self.threshold.override_value,
            balanced: self.threshold.balanced,
            grid: self.grid_mode()?,
            curriculum: self.curriculum_config(),
            dt_activation_level: self.dt.activation_level,
        })
    }

    pub fn train_config(&self) -> Result<TrainConfig, CliError> {
        Ok(TrainConfig {
            epochs: self.trainer.epochs,
            batch_size: self.trainer.batch_size,
            hidden_sizes: self.trainer.hidden_sizes.clone(),
            cl_enabled: self.trainer.cl_enabled,
            dt_enabled: self.trainer.dt_enabled,
            patience: self.trainer.patience,
            top_k_average: self.trainer.top_k_average,
            averaging: self.averaging_mode()?,
            rank_metric: self.rank_metric()?,
            optimizer: AdamHyper {
                lr: self.optimizer.lr,
                beta1: self.optimizer.beta1,
                beta2: self.optimizer.beta2,
                epsilon: self.optimizer.epsilon,
                weight_decay: self.optimizer.weight_decay,
            },
            seed: self.trainer.seed,
        })
    }
}
