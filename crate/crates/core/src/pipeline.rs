//! End-to-end orchestration. `prepare` fits everything that is derived from
//! the training split — normalization statistics, per-sample difficulties,
//! the naturalness threshold, the temperature policy, and the curriculum
//! plan — in one deterministic pass. `run_ablation` trains the four
//! mechanism combinations across seeds and reports per-arm test error.

use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

use crate::curriculum::{build_plan, CurriculumConfig, CurriculumPlan};
use crate::dataset::{normalize_mos, Label, NormStrategy, NormalizationStats, Sample};
use crate::difficulty::{
    difficulty_score, grid_search_threshold, DifficultyRecord, GridMode, TemperaturePolicy,
};
use crate::error::{Error, Result};
use crate::metrics::{eer, score_sample, ScoreRecord};
use crate::trainer::{check_history_invariants, train, TrainConfig};
use crate::util::median;

/// Everything `prepare` needs to know. The curriculum here is the stage
/// *configuration*; `prepare` expands it into a concrete plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepareConfig {
    pub strategy: NormStrategy,
    /// Skips the threshold search and uses this value instead. Must lie
    /// strictly inside the normalized MOS range.
    pub threshold_override: Option<f64>,
    /// Average per-class error rates in the threshold search instead of
    /// pooling all mistakes.
    pub balanced: bool,
    pub grid: GridMode,
    pub curriculum: CurriculumConfig,
    /// Curriculum level at which loss temperatures switch on.
    pub dt_activation_level: f64,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        PrepareConfig {
            strategy: NormStrategy::MinMax,
            threshold_override: None,
            balanced: false,
            grid: GridMode::Midpoints,
            curriculum: CurriculumConfig::default(),
            dt_activation_level: 0.8,
        }
    }
}

/// How the naturalness threshold was chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdDecision {
    pub threshold: f64,
    /// Training classification error at the threshold; absent when the
    /// threshold was supplied rather than searched.
    pub error_rate: Option<f64>,
    /// "grid_midpoints", "grid_fixed_N", or "override".
    pub mode: String,
    pub balanced: bool,
}

/// The output of `prepare`: the normalized training split plus every derived
/// artifact, ready for training or serialization.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub train: Vec<Sample>,
    pub stats: NormalizationStats,
    /// One record per training sample, in input order, temperatures filled.
    pub records: Vec<DifficultyRecord>,
    pub decision: ThresholdDecision,
    pub policy: TemperaturePolicy,
    pub plan: CurriculumPlan,
}

/// Fits the full preprocessing chain on the training split.
pub fn prepare(mut train: Vec<Sample>, cfg: &PrepareConfig) -> Result<Prepared> {
    for s in &train {
        if s.label.is_none() {
            return Err(Error::Config(format!(
                "sample {} has no label; preparation needs labeled training data",
                s.id
            )));
        }
    }
    let has = |label: Label| train.iter().any(|s| s.label == Some(label));
    if !(has(Label::Spoof) && has(Label::Bonafide)) {
        return Err(Error::Config(
            "preparation needs both classes in the training split to place a threshold".into(),
        ));
    }

    let stats = normalize_mos(&mut train, cfg.strategy)?;

    let mut records = Vec::with_capacity(train.len());
    let mut mos_norm = Vec::with_capacity(train.len());
    let mut labels = Vec::with_capacity(train.len());
    for s in &train {
        let m = s.mos_norm.expect("normalize_mos fills every sample");
        let label = s.label.expect("checked above");
        records.push(DifficultyRecord {
            sample_id: s.id.clone(),
            difficulty: difficulty_score(m, label)?,
            temperature: None,
        });
        mos_norm.push(m);
        labels.push(label);
    }

    let decision = match cfg.threshold_override {
        Some(t) => {
            if !t.is_finite() {
                return Err(Error::Config(format!("threshold override {t} must be finite")));
            }
            ThresholdDecision {
                threshold: t,
                error_rate: None,
                mode: "override".to_string(),
                balanced: cfg.balanced,
            }
        }
        None => {
            let search = grid_search_threshold(&mos_norm, &labels, cfg.balanced, cfg.grid)?;
            ThresholdDecision {
                threshold: search.threshold,
                error_rate: Some(search.error_rate),
                mode: cfg.grid.describe(),
                balanced: cfg.balanced,
            }
        }
    };

    let policy = TemperaturePolicy::new(&stats, decision.threshold, cfg.dt_activation_level)?;
    for (record, (&m, &label)) in records.iter_mut().zip(mos_norm.iter().zip(&labels)) {
        record.temperature = Some(policy.temperature_clamped(m, label));
    }

    let plan = build_plan(&records, &cfg.curriculum)?;
    Ok(Prepared { train, stats, records, decision, policy, plan })
}

/// One mechanism combination in the ablation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSpec {
    pub name: String,
    pub cl_enabled: bool,
    pub dt_enabled: bool,
}

/// The four standard arms: nothing, staging only, temperatures only, both.
pub fn standard_arms() -> Vec<ArmSpec> {
    vec![
        ArmSpec { name: "baseline".into(), cl_enabled: false, dt_enabled: false },
        ArmSpec { name: "cl-only".into(), cl_enabled: true, dt_enabled: false },
        ArmSpec { name: "dt-only".into(), cl_enabled: false, dt_enabled: true },
        ArmSpec { name: "cl-dt".into(), cl_enabled: true, dt_enabled: true },
    ]
}

/// One seed's result within an arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRun {
    pub seed: u64,
    pub test_eer: f64,
    pub epochs_run: usize,
    pub stopped_early: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmReport {
    pub arm: ArmSpec,
    pub runs: Vec<AblationRun>,
    pub median_test_eer: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub version: u32,
    pub seeds: Vec<u64>,
    pub arms: Vec<ArmReport>,
}

pub const ABLATION_REPORT_VERSION: u32 = 1;

/// Prepares once, then trains every arm at every seed, sequentially and in
/// the order given, so the report is byte-reproducible. Each run's history
/// is checked against the structural invariants before its test error is
/// accepted.
pub fn run_ablation(
    train_raw: &[Sample],
    val: &[Sample],
    test: &[Sample],
    prep: &PrepareConfig,
    base: &TrainConfig,
    arms: &[ArmSpec],
    seeds: &[u64],
) -> Result<AblationReport> {
    if arms.is_empty() {
        return Err(Error::Config("an ablation needs at least one arm".into()));
    }
    if seeds.is_empty() {
        return Err(Error::Config("an ablation needs at least one seed".into()));
    }
    let mut names = std::collections::HashSet::new();
    for arm in arms {
        if !names.insert(arm.name.as_str()) {
            return Err(Error::Config(format!("duplicate arm name {:?}", arm.name)));
        }
    }
    if test.is_empty() {
        return Err(Error::Config("the ablation test split is empty".into()));
    }

    let prepared = prepare(train_raw.to_vec(), prep)?;

    let mut arm_reports = Vec::with_capacity(arms.len());
    for arm in arms {
        let mut runs = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let cfg = TrainConfig {
                cl_enabled: arm.cl_enabled,
                dt_enabled: arm.dt_enabled,
                seed,
                ..base.clone()
            };
            let outcome = train(&prepared.train, val, Some(&prepared.plan), Some(&prepared.policy), &cfg)?;
            let plan_for_check = if cfg.cl_enabled { Some(&prepared.plan) } else { None };
            check_history_invariants(&outcome.history, &cfg, plan_for_check)?;

            let mut scored = Vec::with_capacity(test.len());
            for s in test {
                scored.push(ScoreRecord {
                    id: s.id.clone(),
                    score: score_sample(&outcome.final_params, &s.features)?,
                    label: s.label,
                });
            }
            let test_eer = eer(&scored)?.eer;
            runs.push(AblationRun {
                seed,
                test_eer,
                epochs_run: outcome.history.stop_epoch,
                stopped_early: outcome.history.stopped_early,
            });
        }
        let eers: Vec<f64> = runs.iter().map(|r| r.test_eer).collect();
        arm_reports.push(ArmReport { arm: arm.clone(), runs, median_test_eer: median(&eers) });
    }

    Ok(AblationReport { version: ABLATION_REPORT_VERSION, seeds: seeds.to_vec(), arms: arm_reports })
}

/// Writes the report as pretty JSON with a trailing newline; byte-identical
/// for equal reports.
pub fn write_ablation_report(path: &Path, report: &AblationReport) -> Result<()> {
    let mut text = serde_json::to_string_pretty(report).expect("report serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

pub fn read_ablation_report(path: &Path) -> Result<AblationReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        msg: format!("bad ablation report: {e}"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Separable blobs whose raw MOS correlates with naturalness: bona fide
    /// skews high, spoof skews low, with enough overlap to be interesting.
    fn toy_split(prefix: &str, n_spoof: usize, n_bonafide: usize, seed: u64) -> Vec<Sample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut samples = Vec::new();
        for i in 0..n_spoof {
            samples.push(Sample {
                id: format!("{prefix}-spoof-{i:03}"),
                label: Some(Label::Spoof),
                mos_raw: rng.gen_range(1.0..3.5),
                mos_norm: None,
                features: vec![-1.0 + rng.gen_range(-0.6..0.6), rng.gen_range(-0.6..0.6)],
            });
        }
        for i in 0..n_bonafide {
            samples.push(Sample {
                id: format!("{prefix}-bonafide-{i:03}"),
                label: Some(Label::Bonafide),
                mos_raw: rng.gen_range(2.5..5.0),
                mos_norm: None,
                features: vec![1.0 + rng.gen_range(-0.6..0.6), rng.gen_range(-0.6..0.6)],
            });
        }
        samples
    }

    fn small_prep() -> PrepareConfig {
        PrepareConfig {
            curriculum: CurriculumConfig { levels: vec![0.5, 1.0], pacing: vec![1, 2] },
            ..PrepareConfig::default()
        }
    }

    #[test]
    fn prepare_derives_a_consistent_bundle() {
        let train = toy_split("tr", 30, 30, 1);
        let prepared = prepare(train.clone(), &small_prep()).unwrap();

        assert_eq!(prepared.train.len(), 60);
        assert!(prepared.train.iter().all(|s| s.mos_norm.is_some()));
        // Records align with the input order.
        for (s, r) in prepared.train.iter().zip(&prepared.records) {
            assert_eq!(s.id, r.sample_id);
            assert!((0.0..=1.0).contains(&r.difficulty));
            let t = r.temperature.unwrap();
            assert!(t.is_finite() && t > 0.0);
        }
        // The searched threshold is strictly interior and carries its error.
        assert!(prepared.decision.threshold > prepared.stats.norm_min);
        assert!(prepared.decision.threshold < prepared.stats.norm_max);
        assert_eq!(prepared.decision.mode, "grid_midpoints");
        let err = prepared.decision.error_rate.unwrap();
        assert!((0.0..=0.5).contains(&err), "threshold error rate {err}");
        assert_eq!(prepared.policy.threshold, prepared.decision.threshold);
        // The plan's final stage admits the whole split.
        assert_eq!(prepared.plan.stages.last().unwrap().member_ids.len(), 60);
        assert!(!prepared.plan.stages[0].member_ids.is_empty());
    }

    #[test]
    fn prepare_is_deterministic() {
        let train = toy_split("tr", 20, 20, 2);
        let a = prepare(train.clone(), &small_prep()).unwrap();
        let b = prepare(train, &small_prep()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn threshold_override_skips_the_search() {
        let train = toy_split("tr", 20, 20, 3);
        let cfg = PrepareConfig { threshold_override: Some(0.45), ..small_prep() };
        let prepared = prepare(train, &cfg).unwrap();
        assert_eq!(prepared.decision.threshold, 0.45);
        assert_eq!(prepared.decision.mode, "override");
        assert!(prepared.decision.error_rate.is_none());
        assert_eq!(prepared.policy.threshold, 0.45);
    }

    #[test]
    fn prepare_rejects_bad_inputs() {
        // Unlabeled sample.
        let mut unlabeled = toy_split("tr", 5, 5, 4);
        unlabeled[0].label = None;
        assert!(matches!(prepare(unlabeled, &small_prep()), Err(Error::Config(_))));

        // Single class: no threshold can separate anything.
        let spoof_only: Vec<Sample> =
            toy_split("tr", 8, 8, 5).into_iter().filter(|s| s.label == Some(Label::Spoof)).collect();
        assert!(matches!(prepare(spoof_only, &small_prep()), Err(Error::Config(_))));

        // Constant raw MOS degenerates min-max normalization.
        let mut flat = toy_split("tr", 6, 6, 6);
        for s in flat.iter_mut() {
            s.mos_raw = 3.0;
        }
        assert!(matches!(prepare(flat, &small_prep()), Err(Error::DegenerateMosRange { .. })));

        // An override outside the normalized range cannot anchor a policy.
        let cfg = PrepareConfig { threshold_override: Some(1.5), ..small_prep() };
        assert!(matches!(
            prepare(toy_split("tr", 6, 6, 7), &cfg),
            Err(Error::DegenerateThreshold { .. })
        ));
    }

    #[test]
    fn the_standard_arms_cover_all_four_combinations() {
        let arms = standard_arms();
        assert_eq!(arms.len(), 4);
        let combos: std::collections::HashSet<(bool, bool)> =
            arms.iter().map(|a| (a.cl_enabled, a.dt_enabled)).collect();
        assert_eq!(combos.len(), 4);
        let names: std::collections::HashSet<&str> = arms.iter().map(|a| a.name.as_str()).collect();
        assert_eq!(names.len(), 4);
    }

    #[test]
    fn ablation_reports_are_reproducible_and_correctly_aggregated() {
        let train = toy_split("tr", 24, 24, 8);
        let val = toy_split("va", 8, 8, 9);
        let test = toy_split("te", 10, 10, 10);
        let base = TrainConfig {
            epochs: 4,
            batch_size: 8,
            hidden_sizes: vec![6],
            ..TrainConfig::default()
        };
        let arms = vec![
            ArmSpec { name: "baseline".into(), cl_enabled: false, dt_enabled: false },
            ArmSpec { name: "cl-dt".into(), cl_enabled: true, dt_enabled: true },
        ];
        let seeds = [101, 102, 103];
        let report = run_ablation(&train, &val, &test, &small_prep(), &base, &arms, &seeds).unwrap();

        assert_eq!(report.seeds, seeds);
        assert_eq!(report.arms.len(), 2);
        for arm_report in &report.arms {
            assert_eq!(arm_report.runs.len(), 3);
            let mut eers: Vec<f64> = arm_report.runs.iter().map(|r| r.test_eer).collect();
            assert!(eers.iter().all(|e| (0.0..=1.0).contains(e)));
            eers.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert_eq!(arm_report.median_test_eer, eers[1]);
        }

        let again = run_ablation(&train, &val, &test, &small_prep(), &base, &arms, &seeds).unwrap();
        assert_eq!(report, again);

        // The serialized report is byte-stable and reads back unchanged.
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("one.json");
        let p2 = dir.path().join("two.json");
        write_ablation_report(&p1, &report).unwrap();
        write_ablation_report(&p2, &again).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        assert_eq!(read_ablation_report(&p1).unwrap(), report);
    }

    #[test]
    fn ablation_rejects_empty_or_duplicate_specifications() {
        let train = toy_split("tr", 6, 6, 11);
        let val = toy_split("va", 4, 4, 12);
        let test = toy_split("te", 4, 4, 13);
        let base = TrainConfig { epochs: 1, hidden_sizes: vec![4], ..TrainConfig::default() };
        let arms = standard_arms();
        assert!(run_ablation(&train, &val, &test, &small_prep(), &base, &[], &[1]).is_err());
        assert!(run_ablation(&train, &val, &test, &small_prep(), &base, &arms, &[]).is_err());
        let dup = vec![arms[0].clone(), arms[0].clone()];
        assert!(run_ablation(&train, &val, &test, &small_prep(), &base, &dup, &[1]).is_err());
        assert!(run_ablation(&train, &val, &[], &small_prep(), &base, &arms, &[1]).is_err());
    }
}
