//! The training loop: staged data admission, per-sample loss temperatures,
//! early stopping that only arms once the full training set is in play, and
//! checkpoint averaging over the best validation epochs.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::curriculum::{stage_at_epoch, CurriculumPlan};
use crate::dataset::{Label, Sample};
use crate::difficulty::TemperaturePolicy;
use crate::error::{Error, Result};
use crate::metrics::{eer, ScoreRecord};
use crate::model::{
    adam_step, average_checkpoints, backward, forward, weighted_ce_loss, AdamHyper, AdamState,
    ClassWeights, Gradients, MlpParams, ModelCheckpoint, CHECKPOINT_FORMAT_VERSION,
};

/// Validation metric used to rank checkpoints and drive early stopping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankMetric {
    Loss,
    Eer,
}

/// How the selected checkpoints are weighted when averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AveragingMode {
    /// Weight each checkpoint by 1 / (metric + 1e-8), so better epochs
    /// contribute more.
    InverseMetric,
    Uniform,
}

/// Knobs for one training run. Curriculum staging and the temperature rule
/// arrive separately (as a plan and a policy); the two booleans here only say
/// whether each mechanism is used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden_sizes: Vec<usize>,
    pub cl_enabled: bool,
    pub dt_enabled: bool,
    pub patience: usize,
    pub top_k_average: usize,
    pub averaging: AveragingMode,
    pub rank_metric: RankMetric,
    pub optimizer: AdamHyper,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 20,
            hidden_sizes: vec![32, 32],
            cl_enabled: true,
            dt_enabled: true,
            patience: 7,
            top_k_average: 5,
            averaging: AveragingMode::InverseMetric,
            rank_metric: RankMetric::Loss,
            optimizer: AdamHyper::default(),
            seed: 7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.hidden_sizes.iter().any(|&h| h == 0) {
            return Err(Error::Config("hidden layer sizes must be at least 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if self.top_k_average == 0 {
            return Err(Error::Config("checkpoint averaging needs k >= 1".into()));
        }
        self.optimizer.validate()
    }
}

/// Per-epoch telemetry, one record per completed epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub stage: usize,
    pub stage_level: f64,
    pub active_subset_size: usize,
    pub dt_active: bool,
    /// Mean loss temperature over the active subset; exactly 1.0 whenever
    /// temperatures are off.
    pub mean_temperature: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_eer: f64,
}

/// The full epoch-by-epoch record of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHistory {
    pub epochs: Vec<EpochRecord>,
    pub stopped_early: bool,
    /// The last epoch that actually ran.
    pub stop_epoch: usize,
}

/// Early-stopping bookkeeping. The monitor tracks the best metric from the
/// first epoch, but the patience counter only ticks once the run has reached
/// the full training set — stopping during a partial-data stage would
/// confuse "the data just changed" with "training converged".
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopState {
    pub best: f64,
    pub epochs_since_best: usize,
    pub armed: bool,
}

impl Default for EarlyStopState {
    fn default() -> Self {
        EarlyStopState { best: f64::INFINITY, epochs_since_best: 0, armed: false }
    }
}

impl EarlyStopState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Feeds one epoch's metric. `at_full_data` is true when the active
    /// stage admits every sample; the first such epoch arms the stopper.
    /// Returns true when training should stop after this epoch.
    pub fn update(&mut self, metric: f64, at_full_data: bool, patience: usize) -> bool {
        if at_full_data {
            self.armed = true;
        }
        if metric < self.best {
            self.best = metric;
            self.epochs_since_best = 0;
        } else if self.armed {
            self.epochs_since_best += 1;
        }
        self.armed && self.epochs_since_best >= patience
    }
}

/// What a training run hands back.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// The averaged top-k model; what evaluation should use.
    pub final_params: MlpParams,
    pub history: RunHistory,
    /// One checkpoint per completed epoch, in epoch order.
    pub checkpoints: Vec<ModelCheckpoint>,
}

struct PreparedSets {
    train_labels: Vec<Label>,
    temperatures: Vec<f64>,
    stage_subsets: Vec<Vec<usize>>,
}

fn prepare_sets(
    train: &[Sample],
    val: &[Sample],
    plan: Option<&CurriculumPlan>,
    policy: Option<&TemperaturePolicy>,
    cfg: &TrainConfig,
) -> Result<PreparedSets> {
    if train.is_empty() {
        return Err(Error::Config("the training set is empty".into()));
    }
    if val.is_empty() {
        return Err(Error::Config("the validation set is empty".into()));
    }
    let feature_dim = train[0].features.len();

    let require_label = |s: &Sample| {
        s.label
            .ok_or_else(|| Error::Config(format!("sample {} has no label; training needs labels", s.id)))
    };
    let mut train_labels = Vec::with_capacity(train.len());
    for s in train {
        train_labels.push(require_label(s)?);
        if s.features.len() != feature_dim {
            return Err(Error::ShapeMismatch(format!(
                "sample {} has {} features, expected {feature_dim}",
                s.id,
                s.features.len()
            )));
        }
    }
    let mut val_labels = Vec::with_capacity(val.len());
    for s in val {
        val_labels.push(require_label(s)?);
        if s.features.len() != feature_dim {
            return Err(Error::ShapeMismatch(format!(
                "validation sample {} has {} features, expected {feature_dim}",
                s.id,
                s.features.len()
            )));
        }
    }
    if !(val_labels.contains(&Label::Spoof) && val_labels.contains(&Label::Bonafide)) {
        return Err(Error::Config(
            "the validation set needs both classes to compute an equal error rate".into(),
        ));
    }
    drop(val_labels);

    let mut index: HashMap<&str, usize> = HashMap::with_capacity(train.len());
    for (i, s) in train.iter().enumerate() {
        if index.insert(s.id.as_str(), i).is_some() {
            return Err(Error::Config(format!("duplicate training sample id {}", s.id)));
        }
    }

    let all: Vec<usize> = (0..train.len()).collect();
    let stage_subsets: Vec<Vec<usize>> = if cfg.cl_enabled {
        let plan = plan.ok_or_else(|| {
            Error::Config("curriculum training is enabled but no curriculum plan was provided".into())
        })?;
        let final_stage = plan.stages.last().expect("validated plans have stages");
        if final_stage.member_ids.len() != train.len() {
            return Err(Error::Config(format!(
                "the curriculum plan covers {} samples but the training set has {}; \
                 the plan was built for different data",
                final_stage.member_ids.len(),
                train.len()
            )));
        }
        let mut subsets = Vec::with_capacity(plan.stages.len());
        for stage in &plan.stages {
            let mut members = Vec::with_capacity(stage.member_ids.len());
            for id in &stage.member_ids {
                let &i = index.get(id.as_str()).ok_or_else(|| {
                    Error::Config(format!("the curriculum plan references unknown sample id {id}"))
                })?;
                members.push(i);
            }
            subsets.push(members);
        }
        subsets
    } else {
        vec![all]
    };

    let temperatures: Vec<f64> = if cfg.dt_enabled {
        let policy = policy.ok_or_else(|| {
            Error::Config("temperature scaling is enabled but no temperature policy was provided".into())
        })?;
        train
            .iter()
            .zip(&train_labels)
            .map(|(s, &label)| {
                let mos = s.mos_norm.ok_or_else(|| {
                    Error::Config(format!(
                        "sample {} has no normalized MOS; temperature scaling needs one",
                        s.id
                    ))
                })?;
                Ok(policy.temperature_clamped(mos, label))
            })
            .collect::<Result<_>>()?
    } else {
        vec![1.0; train.len()]
    };

    Ok(PreparedSets { train_labels, temperatures, stage_subsets })
}

/// Trains a classifier. The plan is consulted only when `cfg.cl_enabled`
/// (and is then required); the policy likewise only when `cfg.dt_enabled`.
/// With staging off, every epoch trains on the full set at level 1.0, which
/// both activates temperatures immediately and arms early stopping from
/// epoch 1.
pub fn train(
    train_set: &[Sample],
    val_set: &[Sample],
    plan: Option<&CurriculumPlan>,
    policy: Option<&TemperaturePolicy>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let prepared = prepare_sets(train_set, val_set, plan, policy, cfg)?;
    let plan = if cfg.cl_enabled { plan } else { None };

    if let Some(p) = plan {
        let last_start = *p.config.pacing.last().expect("validated plans have stages");
        if last_start > cfg.epochs {
            log::warn!(
                "the final curriculum stage starts at epoch {last_start} but training runs only \
                 {} epochs; the full training set is never reached and early stopping never arms",
                cfg.epochs
            );
        }
    }

    let mut layer_sizes = Vec::with_capacity(cfg.hidden_sizes.len() + 2);
    layer_sizes.push(train_set[0].features.len());
    layer_sizes.extend_from_slice(&cfg.hidden_sizes);
    layer_sizes.push(2);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = MlpParams::init(&layer_sizes, &mut rng)?;
    let mut adam = AdamState::new(&params);
    let mut stopper = EarlyStopState::new();
    let mut records: Vec<EpochRecord> = Vec::with_capacity(cfg.epochs);
    let mut checkpoints: Vec<ModelCheckpoint> = Vec::with_capacity(cfg.epochs);
    let mut stopped_early = false;

    for epoch in 1..=cfg.epochs {
        let (stage_no, stage_level, subset): (usize, f64, &[usize]) = match plan {
            Some(p) => {
                let k = stage_at_epoch(&p.config, epoch)?;
                (k, p.stages[k - 1].level, &prepared.stage_subsets[k - 1])
            }
            None => (1, 1.0, &prepared.stage_subsets[0]),
        };
        if subset.is_empty() {
            return Err(Error::Config(format!("stage {stage_no} admits no samples")));
        }
        let dt_active = match (cfg.dt_enabled, policy) {
            (true, Some(p)) => stage_level >= p.activation_level,
            _ => false,
        };

        let mut order: Vec<usize> = subset.to_vec();
        order.shuffle(&mut rng);

        let n_spoof = subset.iter().filter(|&&i| prepared.train_labels[i] == Label::Spoof).count();
        let weights = ClassWeights::inverse_frequency(n_spoof, subset.len() - n_spoof);

        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grad_acc = Gradients::zeros_like(&params);
            for &i in batch {
                let sample = &train_set[i];
                let label = prepared.train_labels[i];
                let tau = if dt_active { prepared.temperatures[i] } else { 1.0 };
                let trace = forward(&params, &sample.features)?;
                loss_sum += weighted_ce_loss(trace.logits, label, &weights, tau)?;
                grad_acc.add(&backward(&params, &trace, label, &weights, tau)?)?;
            }
            grad_acc.scale(1.0 / batch.len() as f64);
            adam_step(&mut params, &grad_acc, &mut adam, &cfg.optimizer)?;
        }
        let train_loss = loss_sum / subset.len() as f64;
        if !train_loss.is_finite() {
            return Err(Error::NonFinite(format!("training loss {train_loss} at epoch {epoch}")));
        }

        let (val_loss, val_eer) = validation_metrics(&params, val_set)?;

        let mean_temperature = if dt_active {
            subset.iter().map(|&i| prepared.temperatures[i]).sum::<f64>() / subset.len() as f64
        } else {
            1.0
        };

        checkpoints.push(ModelCheckpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            params: params.clone(),
            seed: cfg.seed,
            epoch,
            val_loss,
            val_eer,
        });
        records.push(EpochRecord {
            epoch,
            stage: stage_no,
            stage_level,
            active_subset_size: subset.len(),
            dt_active,
            mean_temperature,
            train_loss,
            val_loss,
            val_eer,
        });

        let metric = match cfg.rank_metric {
            RankMetric::Loss => val_loss,
            RankMetric::Eer => val_eer,
        };
        if stopper.update(metric, stage_level >= 1.0, cfg.patience) {
            stopped_early = true;
            break;
        }
    }

    let stop_epoch = records.last().expect("at least one epoch ran").epoch;
    let final_params =
        select_and_average(&checkpoints, cfg.top_k_average, cfg.averaging, cfg.rank_metric)?;
    Ok(TrainOutcome {
        final_params,
        history: RunHistory { epochs: records, stopped_early, stop_epoch },
        checkpoints,
    })
}

/// Mean unweighted cross-entropy at temperature 1 plus the equal error rate
/// of `params` on `samples`. Every sample must be labeled, with both classes
/// present.
pub fn validation_metrics(params: &MlpParams, samples: &[Sample]) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::Config("cannot validate on an empty sample set".into()));
    }
    let mut loss_sum = 0.0;
    let mut scores = Vec::with_capacity(samples.len());
    for s in samples {
        let label = s
            .label
            .ok_or_else(|| Error::Config(format!("sample {} has no label; validation needs labels", s.id)))?;
        let trace = forward(params, &s.features)?;
        loss_sum += weighted_ce_loss(trace.logits, label, &ClassWeights::UNIT, 1.0)?;
        scores.push(ScoreRecord {
            id: s.id.clone(),
            score: trace.logits[1] - trace.logits[0],
            label: Some(label),
        });
    }
    let loss = loss_sum / samples.len() as f64;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("validation loss {loss}")));
    }
    Ok((loss, eer(&scores)?.eer))
}

fn rank_value(checkpoint: &ModelCheckpoint, metric: RankMetric) -> f64 {
    match metric {
        RankMetric::Loss => checkpoint.val_loss,
        RankMetric::Eer => checkpoint.val_eer,
    }
}

/// Indices of the k best checkpoints by validation metric, best first, ties
/// broken toward the earlier epoch. Fewer than k checkpoints means all of
/// them, still sorted.
pub fn select_top_k(checkpoints: &[ModelCheckpoint], k: usize, metric: RankMetric) -> Result<Vec<usize>> {
    if checkpoints.is_empty() {
        return Err(Error::Config("no checkpoints to select from".into()));
    }
    if k == 0 {
        return Err(Error::Config("checkpoint selection needs k >= 1".into()));
    }
    for c in checkpoints {
        let v = rank_value(c, metric);
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("checkpoint metric {v} at epoch {}", c.epoch)));
        }
    }
    let mut order: Vec<usize> = (0..checkpoints.len()).collect();
    order.sort_by(|&a, &b| {
        let (ka, kb) = (rank_value(&checkpoints[a], metric), rank_value(&checkpoints[b], metric));
        ka.partial_cmp(&kb).expect("finite metrics").then(checkpoints[a].epoch.cmp(&checkpoints[b].epoch))
    });
    order.truncate(k.min(checkpoints.len()));
    Ok(order)
}

/// Picks the k checkpoints with the best validation metric (ties broken by
/// earlier epoch) and returns their weighted average. Fewer than k
/// checkpoints means all of them are used.
pub fn select_and_average(
    checkpoints: &[ModelCheckpoint],
    k: usize,
    mode: AveragingMode,
    metric: RankMetric,
) -> Result<MlpParams> {
    let chosen = select_top_k(checkpoints, k, metric)?;
    let weights: Vec<f64> = match mode {
        AveragingMode::InverseMetric => {
            chosen.iter().map(|&i| 1.0 / (rank_value(&checkpoints[i], metric) + 1e-8)).collect()
        }
        AveragingMode::Uniform => vec![1.0; chosen.len()],
    };
    let params: Vec<&MlpParams> = chosen.iter().map(|&i| &checkpoints[i].params).collect();
    average_checkpoints(&params, &weights)
}

/// Structural checks every completed run must satisfy, independent of what
/// it learned. Used by the test suites after real runs; cheap enough to call
/// anywhere.
pub fn check_history_invariants(
    history: &RunHistory,
    cfg: &TrainConfig,
    plan: Option<&CurriculumPlan>,
) -> Result<()> {
    let fail = |msg: String| Err(Error::Domain(format!("history invariant violated: {msg}")));
    if history.epochs.is_empty() {
        return fail("no epochs recorded".into());
    }
    if cfg.cl_enabled && plan.is_none() {
        return Err(Error::Config("checking a staged run needs its curriculum plan".into()));
    }

    for (i, r) in history.epochs.iter().enumerate() {
        if r.epoch != i + 1 {
            return fail(format!("epoch {} recorded at position {i}", r.epoch));
        }
        if !(r.train_loss.is_finite() && r.val_loss.is_finite()) {
            return fail(format!("non-finite loss at epoch {}", r.epoch));
        }
        if !(0.0..=1.0).contains(&r.val_eer) {
            return fail(format!("validation EER {} outside [0, 1] at epoch {}", r.val_eer, r.epoch));
        }
        if r.active_subset_size == 0 {
            return fail(format!("empty active subset at epoch {}", r.epoch));
        }
        if !r.dt_active && r.mean_temperature != 1.0 {
            return fail(format!(
                "temperatures off but mean temperature is {} at epoch {}",
                r.mean_temperature, r.epoch
            ));
        }
        if !cfg.dt_enabled && r.dt_active {
            return fail(format!("temperatures active at epoch {} in a run without them", r.epoch));
        }
        if !r.mean_temperature.is_finite() || r.mean_temperature <= 0.0 {
            return fail(format!("mean temperature {} at epoch {}", r.mean_temperature, r.epoch));
        }
    }

    for pair in history.epochs.windows(2) {
        if pair[1].active_subset_size < pair[0].active_subset_size {
            return fail(format!(
                "active subset shrank from {} to {} at epoch {}",
                pair[0].active_subset_size, pair[1].active_subset_size, pair[1].epoch
            ));
        }
        if pair[1].stage < pair[0].stage {
            return fail(format!("stage went backwards at epoch {}", pair[1].epoch));
        }
    }

    if let Some(p) = plan {
        for r in &history.epochs {
            let k = stage_at_epoch(&p.config, r.epoch)?;
            if r.stage != k {
                return fail(format!("epoch {} ran stage {} but the schedule says {k}", r.epoch, r.stage));
            }
            let stage = &p.stages[k - 1];
            if r.stage_level != stage.level {
                return fail(format!("epoch {} level {} != plan level {}", r.epoch, r.stage_level, stage.level));
            }
            if r.active_subset_size != stage.member_ids.len() {
                return fail(format!(
                    "epoch {} subset size {} != stage membership {}",
                    r.epoch,
                    r.active_subset_size,
                    stage.member_ids.len()
                ));
            }
        }
        if history.stopped_early {
            let final_start = *p.config.pacing.last().expect("validated plans have stages");
            if history.stop_epoch < final_start {
                return fail(format!(
                    "stopped early at epoch {} before the final stage begins at {final_start}",
                    history.stop_epoch
                ));
            }
        }
    } else {
        // Without staging the subset never changes size.
        let first = history.epochs[0].active_subset_size;
        if history.epochs.iter().any(|r| r.active_subset_size != first) {
            return fail("subset size changed in a run without staging".into());
        }
    }

    let last = history.epochs.last().unwrap();
    if history.stop_epoch != last.epoch {
        return fail(format!("stop epoch {} != last recorded epoch {}", history.stop_epoch, last.epoch));
    }
    if !history.stopped_early && history.stop_epoch != cfg.epochs {
        return fail(format!(
            "run claims to have finished but stopped at epoch {} of {}",
            history.stop_epoch, cfg.epochs
        ));
    }
    Ok(())
}
