//! Naturalness-guided training for spoofed-speech detection, desk scale.
//!
//! The idea: synthetic speech that *sounds* natural is hard to catch, and
//! genuine speech that sounds degraded is easy to mistake. A mean-opinion
//! naturalness score per clip therefore doubles as a difficulty signal. This
//! crate turns that signal into two training mechanisms for a small MLP
//! classifier:
//!
//! * **staged data admission** — train on the easy samples first and widen
//!   the pool on a fixed epoch schedule ([`curriculum`]);
//! * **per-sample loss temperatures** — soften the loss on deceptive samples
//!   once training has seen the full data ([`difficulty`]).
//!
//! Everything is seeded, sequential, and byte-reproducible: the same inputs
//! and seeds produce identical artifacts. [`pipeline`] wires the pieces into
//! a prepare step and a multi-arm ablation; [`dataset`] ships a synthetic
//! task generator so the whole system runs without any external data.

pub mod curriculum;
pub mod dataset;
pub mod difficulty;
pub mod error;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod trainer;
pub mod util;

pub use curriculum::{CurriculumConfig, CurriculumPlan};
pub use dataset::{
    Label, LabelPolicy, Manifest, NormStrategy, NormalizationStats, Sample, SynthConfig,
};
pub use difficulty::{DifficultyRecord, GridMode, TemperaturePolicy, ThresholdSearch};
pub use error::{Error, Result};
pub use metrics::{EerResult, EvalReport, ScoreRecord, TdcfCoeffs};
pub use model::{AdamHyper, ClassWeights, MlpParams, ModelCheckpoint};
pub use pipeline::{AblationReport, ArmSpec, PrepareConfig, Prepared};
pub use trainer::{
    AveragingMode, RankMetric, RunHistory, TrainConfig, TrainOutcome,
};
