//! Easy-to-hard staging. A curriculum is a list of difficulty ceilings plus
//! the epochs at which each ceiling takes effect; stage membership is
//! cumulative, so every stage contains the samples of the previous one.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::difficulty::DifficultyRecord;
use crate::error::{Error, Result};
use crate::util::sha256_hex;

/// Difficulty ceilings and the 1-based epochs at which they activate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumConfig {
    /// Strictly increasing ceilings in (0, 1], ending at exactly 1.0.
    pub levels: Vec<f64>,
    /// Strictly increasing first epochs, one per level, starting at 1.
    pub pacing: Vec<usize>,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        CurriculumConfig {
            levels: vec![0.35, 0.5, 0.65, 0.8, 1.0],
            pacing: vec![1, 9, 17, 21, 23],
        }
    }
}

/// One way a curriculum configuration can be malformed. Validation reports
/// every violation it finds rather than stopping at the first.
#[derive(Debug, Clone, PartialEq)]
pub enum ConfigViolation {
    LengthMismatch { levels: usize, pacing: usize },
    Empty,
    LevelsNotIncreasing { index: usize },
    LevelOutOfRange { index: usize, level: f64 },
    FinalLevelNotOne { level: f64 },
    PacingNotIncreasing { index: usize },
    PacingNotStartingAtOne { first: usize },
}

impl std::fmt::Display for ConfigViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigViolation::LengthMismatch { levels, pacing } => {
                write!(f, "{levels} levels but {pacing} pacing entries")
            }
            ConfigViolation::Empty => write!(f, "curriculum has no stages"),
            ConfigViolation::LevelsNotIncreasing { index } => {
                write!(f, "levels must be strictly increasing (violated at index {index})")
            }
            ConfigViolation::LevelOutOfRange { index, level } => {
                write!(f, "level {level} at index {index} is outside (0, 1]")
            }
            ConfigViolation::FinalLevelNotOne { level } => {
                write!(f, "final level is {level}, must be exactly 1.0")
            }
            ConfigViolation::PacingNotIncreasing { index } => {
                write!(f, "pacing must be strictly increasing (violated at index {index})")
            }
            ConfigViolation::PacingNotStartingAtOne { first } => {
                write!(f, "pacing must start at epoch 1, got {first}")
            }
        }
    }
}

/// Collects every violation in `config`. An empty result means the
/// configuration is valid.
pub fn validate_config(config: &CurriculumConfig) -> Vec<ConfigViolation> {
    let mut violations = Vec::new();
    if config.levels.len() != config.pacing.len() {
        violations.push(ConfigViolation::LengthMismatch {
            levels: config.levels.len(),
            pacing: config.pacing.len(),
        });
    }
    if config.levels.is_empty() && config.pacing.is_empty() {
        violations.push(ConfigViolation::Empty);
    }
    for (i, &level) in config.levels.iter().enumerate() {
        if !(level.is_finite() && level > 0.0 && level <= 1.0) {
            violations.push(ConfigViolation::LevelOutOfRange { index: i, level });
        }
        if i > 0 && !(level > config.levels[i - 1]) {
            violations.push(ConfigViolation::LevelsNotIncreasing { index: i });
        }
    }
    if let Some(&last) = config.levels.last() {
        if last != 1.0 {
            violations.push(ConfigViolation::FinalLevelNotOne { level: last });
        }
    }
    if let Some(&first) = config.pacing.first() {
        if first != 1 {
            violations.push(ConfigViolation::PacingNotStartingAtOne { first });
        }
    }
    for i in 1..config.pacing.len() {
        if config.pacing[i] <= config.pacing[i - 1] {
            violations.push(ConfigViolation::PacingNotIncreasing { index: i });
        }
    }
    violations
}

/// Like `validate_config`, but folds all violations into one `Config` error.
pub fn ensure_valid(config: &CurriculumConfig) -> Result<()> {
    let violations = validate_config(config);
    if violations.is_empty() {
        return Ok(());
    }
    let joined: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
    Err(Error::Config(format!("invalid curriculum: {}", joined.join("; "))))
}

/// One curriculum stage: its ceiling, when it starts, and exactly which
/// samples it admits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    /// 1-based stage number.
    pub stage: usize,
    pub level: f64,
    pub start_epoch: usize,
    /// Sample ids with difficulty <= level, sorted lexicographically.
    pub member_ids: Vec<String>,
}

/// The full stage-by-stage expansion of a curriculum over a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumPlan {
    pub config: CurriculumConfig,
    pub stages: Vec<Stage>,
    pub total_samples: usize,
}

impl CurriculumPlan {
    /// The stage active at `epoch` (1-based on both sides).
    pub fn stage_at_epoch(&self, epoch: usize) -> Result<&Stage> {
        let k = stage_at_epoch(&self.config, epoch)?;
        Ok(&self.stages[k - 1])
    }
}

/// Returns the 1-based index of the stage active at `epoch`: the largest k
/// with `pacing[k] <= epoch`. Epochs are 1-based; epoch 0 is an error.
pub fn stage_at_epoch(config: &CurriculumConfig, epoch: usize) -> Result<usize> {
    ensure_valid(config)?;
    if epoch == 0 {
        return Err(Error::Domain("epochs are 1-based; epoch 0 has no stage".into()));
    }
    let k = config.pacing.partition_point(|&start| start <= epoch);
    // pacing[0] == 1 <= epoch, so k >= 1.
    Ok(k)
}

/// Builds the stage membership table for `difficulties` under `config`.
/// A sample belongs to a stage when its difficulty is <= the stage ceiling
/// (ties included). Member lists are sorted by id, so any input ordering
/// produces the same plan. Fails if the first stage would be empty.
pub fn build_plan(difficulties: &[DifficultyRecord], config: &CurriculumConfig) -> Result<CurriculumPlan> {
    ensure_valid(config)?;
    for record in difficulties {
        if !(record.difficulty.is_finite() && (0.0..=1.0).contains(&record.difficulty)) {
            return Err(Error::Domain(format!(
                "difficulty {} for sample {} is outside [0, 1]",
                record.difficulty, record.sample_id
            )));
        }
    }
    let mut seen = std::collections::HashSet::new();
    for record in difficulties {
        if !seen.insert(record.sample_id.as_str()) {
            return Err(Error::Config(format!("duplicate sample id {}", record.sample_id)));
        }
    }

    let mut stages = Vec::with_capacity(config.levels.len());
    for (k, (&level, &start_epoch)) in config.levels.iter().zip(&config.pacing).enumerate() {
        let mut member_ids: Vec<String> = difficulties
            .iter()
            .filter(|r| r.difficulty <= level)
            .map(|r| r.sample_id.clone())
            .collect();
        member_ids.sort_unstable();
        if k == 0 && member_ids.is_empty() {
            return Err(Error::EmptyInitialStage { level });
        }
        stages.push(Stage { stage: k + 1, level, start_epoch, member_ids });
    }

    Ok(CurriculumPlan { config: config.clone(), stages, total_samples: difficulties.len() })
}

/// Serialized plan payload. `boundary` documents the membership rule so a
/// reader of the artifact does not have to guess how ties were broken.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanBody {
    pub version: u32,
    /// Human-readable membership rule; always the inclusive form.
    pub boundary: String,
    pub config: CurriculumConfig,
    pub total_samples: usize,
    pub stages: Vec<Stage>,
}

/// A plan file: the payload plus a content hash over its compact JSON form,
/// verified on read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanFile {
    pub sha256: String,
    pub body: PlanBody,
}

pub const PLAN_VERSION: u32 = 1;
pub const PLAN_BOUNDARY_NOTE: &str = "stage k contains samples with difficulty <= levels[k] (inclusive)";

fn plan_body_hash(body: &PlanBody) -> String {
    let compact = serde_json::to_string(body).expect("plan body serializes");
    sha256_hex(compact.as_bytes())
}

/// Writes `plan` as pretty JSON with an embedded content hash.
pub fn write_plan(path: &Path, plan: &CurriculumPlan) -> Result<()> {
    let body = PlanBody {
        version: PLAN_VERSION,
        boundary: PLAN_BOUNDARY_NOTE.to_string(),
        config: plan.config.clone(),
        total_samples: plan.total_samples,
        stages: plan.stages.clone(),
    };
    let file = PlanFile { sha256: plan_body_hash(&body), body };
    let mut text = serde_json::to_string_pretty(&file).expect("plan file serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

/// Reads a plan file, verifying its version, content hash, and config.
pub fn read_plan(path: &Path) -> Result<CurriculumPlan> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
    let file: PlanFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        msg: format!("bad curriculum plan: {e}"),
    })?;
    if file.body.version != PLAN_VERSION {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: format!("unsupported plan version {} (expected {PLAN_VERSION})", file.body.version),
        });
    }
    let expected = plan_body_hash(&file.body);
    if file.sha256 != expected {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: format!("content hash mismatch: file says {}, body hashes to {expected}", file.sha256),
        });
    }
    ensure_valid(&file.body.config).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        msg: format!("plan carries an invalid curriculum: {e}"),
    })?;
    Ok(CurriculumPlan {
        config: file.body.config,
        stages: file.body.stages,
        total_samples: file.body.total_samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, difficulty: f64) -> DifficultyRecord {
        DifficultyRecord { sample_id: id.to_string(), difficulty, temperature: None }
    }

    #[test]
    fn default_schedule_maps_epochs_to_the_expected_stages() {
        let config = CurriculumConfig::default();
        for (epoch, expected) in [(1, 1), (8, 1), (9, 2), (10, 2), (16, 2), (17, 3), (18, 3), (21, 4), (22, 4), (23, 5), (100, 5)] {
            assert_eq!(stage_at_epoch(&config, epoch).unwrap(), expected, "epoch {epoch}");
        }
    }

    #[test]
    fn epoch_zero_is_rejected() {
        let config = CurriculumConfig::default();
        assert!(matches!(stage_at_epoch(&config, 0), Err(Error::Domain(_))));
    }

    #[test]
    fn membership_is_inclusive_at_the_ceiling() {
        let difficulties = vec![record("a", 0.2), record("b", 0.35), record("c", 0.9)];
        let config = CurriculumConfig { levels: vec![0.35, 1.0], pacing: vec![1, 5] };
        let plan = build_plan(&difficulties, &config).unwrap();
        // b sits exactly on the first ceiling and is admitted.
        assert_eq!(plan.stages[0].member_ids, vec!["a", "b"]);
        assert_eq!(plan.stages[1].member_ids, vec!["a", "b", "c"]);
        assert_eq!(plan.total_samples, 3);
    }

    #[test]
    fn stages_are_nested() {
        let difficulties: Vec<DifficultyRecord> =
            (0..50).map(|i| record(&format!("s{i:03}"), i as f64 / 49.0)).collect();
        let plan = build_plan(&difficulties, &CurriculumConfig::default()).unwrap();
        for pair in plan.stages.windows(2) {
            let earlier: std::collections::HashSet<&String> = pair[0].member_ids.iter().collect();
            assert!(pair[1].member_ids.iter().filter(|id| earlier.contains(id)).count() == earlier.len());
            assert!(pair[1].member_ids.len() >= pair[0].member_ids.len());
        }
        // The final stage admits everything.
        assert_eq!(plan.stages.last().unwrap().member_ids.len(), 50);
    }

    #[test]
    fn input_order_does_not_change_the_plan() {
        let mut difficulties = vec![record("zeta", 0.1), record("alpha", 0.6), record("mid", 0.4)];
        let forward = build_plan(&difficulties, &CurriculumConfig::default()).unwrap();
        difficulties.reverse();
        let backward = build_plan(&difficulties, &CurriculumConfig::default()).unwrap();
        assert_eq!(forward, backward);
        assert_eq!(forward.stages[0].member_ids, vec!["zeta"]);
    }

    #[test]
    fn an_empty_first_stage_is_an_error() {
        let difficulties = vec![record("hard", 0.99)];
        let config = CurriculumConfig::default();
        match build_plan(&difficulties, &config) {
            Err(Error::EmptyInitialStage { level }) => assert_eq!(level, 0.35),
            other => panic!("expected EmptyInitialStage, got {other:?}"),
        }
    }

    #[test]
    fn difficulties_outside_unit_interval_are_rejected() {
        let config = CurriculumConfig::default();
        assert!(build_plan(&[record("x", 1.2)], &config).is_err());
        assert!(build_plan(&[record("x", -0.1)], &config).is_err());
        assert!(build_plan(&[record("x", f64::NAN)], &config).is_err());
    }

    #[test]
    fn duplicate_sample_ids_are_rejected() {
        let config = CurriculumConfig::default();
        let difficulties = vec![record("dup", 0.1), record("dup", 0.2)];
        assert!(matches!(build_plan(&difficulties, &config), Err(Error::Config(_))));
    }

    #[test]
    fn validation_reports_every_violation_at_once() {
        // Non-increasing levels, final level not 1.0, and pacing that neither
        // starts at 1 nor increases.
        let config = CurriculumConfig { levels: vec![0.5, 0.4, 0.9], pacing: vec![2, 2, 1] };
        let violations = validate_config(&config);
        assert!(violations.contains(&ConfigViolation::LevelsNotIncreasing { index: 1 }));
        assert!(violations.contains(&ConfigViolation::FinalLevelNotOne { level: 0.9 }));
        assert!(violations.contains(&ConfigViolation::PacingNotStartingAtOne { first: 2 }));
        assert!(violations.contains(&ConfigViolation::PacingNotIncreasing { index: 1 }));
        assert_eq!(violations.len(), 5, "{violations:?}"); // + the second pacing violation
        assert!(ensure_valid(&config).is_err());
    }

    #[test]
    fn mismatched_lengths_and_flat_pacing_surface_together() {
        let config = CurriculumConfig { levels: vec![0.5, 0.4, 1.0], pacing: vec![1, 1] };
        let violations = validate_config(&config);
        assert!(violations.contains(&ConfigViolation::LengthMismatch { levels: 3, pacing: 2 }));
        assert!(violations.contains(&ConfigViolation::LevelsNotIncreasing { index: 1 }));
        assert!(violations.contains(&ConfigViolation::PacingNotIncreasing { index: 1 }));
        assert_eq!(violations.len(), 3, "{violations:?}");
    }

    #[test]
    fn length_mismatch_and_empty_configs_are_violations() {
        let mismatched = CurriculumConfig { levels: vec![0.5, 1.0], pacing: vec![1] };
        assert!(validate_config(&mismatched)
            .contains(&ConfigViolation::LengthMismatch { levels: 2, pacing: 1 }));
        let empty = CurriculumConfig { levels: vec![], pacing: vec![] };
        assert!(validate_config(&empty).contains(&ConfigViolation::Empty));
    }

    #[test]
    fn single_stage_curriculum_is_valid() {
        let config = CurriculumConfig { levels: vec![1.0], pacing: vec![1] };
        assert!(validate_config(&config).is_empty());
        let plan = build_plan(&[record("only", 0.7)], &config).unwrap();
        assert_eq!(plan.stages.len(), 1);
        assert_eq!(stage_at_epoch(&config, 1).unwrap(), 1);
        assert_eq!(stage_at_epoch(&config, 999).unwrap(), 1);
    }

    #[test]
    fn plan_files_round_trip_and_detect_tampering() {
        let difficulties = vec![record("a", 0.2), record("b", 0.5), record("c", 1.0)];
        let plan = build_plan(&difficulties, &CurriculumConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plan.json");
        write_plan(&path, &plan).unwrap();
        let loaded = read_plan(&path).unwrap();
        assert_eq!(loaded, plan);

        // Flip one difficulty ceiling in the serialized body; the hash no
        // longer matches.
        let text = std::fs::read_to_string(&path).unwrap();
        let tampered = text.replace("0.35", "0.36");
        assert_ne!(text, tampered);
        std::fs::write(&path, tampered).unwrap();
        match read_plan(&path) {
            Err(Error::Parse { msg, .. }) => assert!(msg.contains("hash mismatch"), "{msg}"),
            other => panic!("expected a hash mismatch, got {other:?}"),
        }
    }

    #[test]
    fn plan_writes_are_byte_deterministic() {
        let difficulties = vec![record("a", 0.2), record("b", 0.5)];
        let plan = build_plan(&difficulties, &CurriculumConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("one.json");
        let p2 = dir.path().join("two.json");
        write_plan(&p1, &plan).unwrap();
        write_plan(&p2, &plan).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }
}
