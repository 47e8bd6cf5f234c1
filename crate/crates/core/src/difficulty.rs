//! Per-sample difficulty, decision-threshold search on normalized MOS, and
//! the asymmetric per-sample temperature rule built from both.
//!
//! The intuition: a spoof that sounds natural (high normalized MOS) is hard,
//! a bona fide clip that sounds artificial (low normalized MOS) is hard. The
//! temperature rule then softens the loss on hard samples and sharpens it on
//! easy ones, with the asymmetry factor balancing the two sides of the
//! decision threshold, which generally does not sit at the middle of the
//! range.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{Label, NormalizationStats};
use crate::error::{Error, Result};
use crate::util::sha256_hex;

/// Difficulty of one sample given its normalized MOS: the score rises as the
/// sample moves toward the wrong side of the naturalness scale for its class.
pub fn difficulty_score(mos_norm: f64, label: Label) -> Result<f64> {
    if !(0.0..=1.0).contains(&mos_norm) {
        return Err(Error::Domain(format!("normalized MOS {mos_norm} outside [0, 1]")));
    }
    Ok(match label {
        Label::Spoof => mos_norm,
        Label::Bonafide => 1.0 - mos_norm,
    })
}

/// Candidate placement for the threshold search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridMode {
    /// Midpoints between consecutive distinct values plus one sentinel on
    /// each side of the observed range. Exhaustive over distinct error
    /// patterns, so it cannot miss the optimum.
    Midpoints,
    /// A fixed number of evenly spaced candidates across the observed range
    /// (sentinels included). Resolution-limited but data-independent.
    FixedSteps(usize),
}

impl GridMode {
    pub fn describe(&self) -> String {
        match self {
            GridMode::Midpoints => "grid_midpoints".to_string(),
            GridMode::FixedSteps(n) => format!("grid_fixed_{n}"),
        }
    }
}

/// Result of the threshold search: the chosen threshold and the training
/// error rate it achieves under "predict bona fide iff mos_norm >= threshold".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSearch {
    pub threshold: f64,
    pub error_rate: f64,
}

/// Sentinel offset: half the smallest gap between distinct values, capped at
/// 1e-6 so sentinels stay tight against the observed range.
fn sentinel_offset(sorted_distinct: &[f64]) -> f64 {
    let mut half_gap = f64::INFINITY;
    for pair in sorted_distinct.windows(2) {
        half_gap = half_gap.min((pair[1] - pair[0]) / 2.0);
    }
    half_gap.min(1e-6)
}

fn classification_error_rate(
    spoof_sorted: &[f64],
    bona_sorted: &[f64],
    threshold: f64,
    balanced: bool,
) -> f64 {
    // Predict bona fide iff value >= threshold. Spoofs at or above the
    // threshold and bona fide samples below it are the errors.
    let spoof_below = spoof_sorted.partition_point(|&v| v < threshold);
    let bona_below = bona_sorted.partition_point(|&v| v < threshold);
    let spoof_errors = spoof_sorted.len() - spoof_below;
    let bona_errors = bona_below;
    if balanced {
        let mut total = 0.0;
        let mut classes = 0;
        if !spoof_sorted.is_empty() {
            total += spoof_errors as f64 / spoof_sorted.len() as f64;
            classes += 1;
        }
        if !bona_sorted.is_empty() {
            total += bona_errors as f64 / bona_sorted.len() as f64;
            classes += 1;
        }
        total / classes as f64
    } else {
        (spoof_errors + bona_errors) as f64 / (spoof_sorted.len() + bona_sorted.len()) as f64
    }
}

/// Scans candidate thresholds over the normalized MOS values and returns the
/// one minimizing the training classification error, breaking ties toward the
/// smallest threshold. `balanced` averages the per-class error rates instead
/// of pooling all mistakes.
pub fn grid_search_threshold(
    mos_norm: &[f64],
    labels: &[Label],
    balanced: bool,
    mode: GridMode,
) -> Result<ThresholdSearch> {
    if mos_norm.is_empty() {
        return Err(Error::Config("threshold search needs at least one sample".into()));
    }
    if mos_norm.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} MOS values vs {} labels",
            mos_norm.len(),
            labels.len()
        )));
    }
    for &v in mos_norm {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Domain(format!("normalized MOS {v} outside [0, 1]")));
        }
    }

    let mut spoof_sorted = Vec::new();
    let mut bona_sorted = Vec::new();
    for (&v, &l) in mos_norm.iter().zip(labels) {
        match l {
            Label::Spoof => spoof_sorted.push(v),
            Label::Bonafide => bona_sorted.push(v),
        }
    }
    spoof_sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    bona_sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));

    let mut distinct: Vec<f64> = mos_norm.to_vec();
    distinct.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    distinct.dedup();
    let delta = sentinel_offset(&distinct);

    let candidates: Vec<f64> = match mode {
        GridMode::Midpoints => {
            let mut c = Vec::with_capacity(distinct.len() + 1);
            c.push(distinct[0] - delta);
            for pair in distinct.windows(2) {
                c.push((pair[0] + pair[1]) / 2.0);
            }
            c.push(distinct[distinct.len() - 1] + delta);
            c
        }
        GridMode::FixedSteps(steps) => {
            if steps < 2 {
                return Err(Error::Config(format!("fixed grid needs at least 2 steps, got {steps}")));
            }
            let lo = distinct[0] - delta;
            let hi = distinct[distinct.len() - 1] + delta;
            (0..steps)
                .map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64)
                .collect()
        }
    };

    let mut best: Option<ThresholdSearch> = None;
    for &threshold in &candidates {
        let error_rate = classification_error_rate(&spoof_sorted, &bona_sorted, threshold, balanced);
        let better = match &best {
            None => true,
            Some(b) => error_rate < b.error_rate,
        };
        if better {
            best = Some(ThresholdSearch { threshold, error_rate });
        }
    }
    Ok(best.expect("at least one candidate"))
}

/// Ratio of the normalized-MOS mass above the threshold to the mass below it.
/// Defined only for thresholds strictly inside the observed range.
pub fn asymmetry_factor(stats: &NormalizationStats, threshold: f64) -> Result<f64> {
    if !(threshold > stats.norm_min && threshold < stats.norm_max) {
        return Err(Error::DegenerateThreshold {
            threshold,
            min: stats.norm_min,
            max: stats.norm_max,
        });
    }
    Ok((stats.norm_max - threshold) / (threshold - stats.norm_min))
}

/// Everything needed to turn a normalized MOS into a per-sample temperature,
/// plus the curriculum level at which temperatures switch on during training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperaturePolicy {
    pub threshold: f64,
    pub asymmetry: f64,
    pub norm_min: f64,
    pub norm_max: f64,
    pub activation_level: f64,
}

impl TemperaturePolicy {
    /// Builds a policy from fitted normalization statistics and a threshold.
    /// The stats range must sit inside [0, 1]: together with a strictly
    /// interior threshold that is what guarantees every temperature in range
    /// stays positive.
    pub fn new(stats: &NormalizationStats, threshold: f64, activation_level: f64) -> Result<Self> {
        if !(stats.norm_min >= 0.0 && stats.norm_max <= 1.0 && stats.norm_min < stats.norm_max) {
            return Err(Error::Config(format!(
                "normalized range [{}, {}] must be a non-empty sub-interval of [0, 1]",
                stats.norm_min, stats.norm_max
            )));
        }
        if !(activation_level > 0.0 && activation_level <= 1.0) {
            return Err(Error::Config(format!(
                "activation level {activation_level} must lie in (0, 1]"
            )));
        }
        let asymmetry = asymmetry_factor(stats, threshold)?;
        Ok(TemperaturePolicy {
            threshold,
            asymmetry,
            norm_min: stats.norm_min,
            norm_max: stats.norm_max,
            activation_level,
        })
    }

    /// Clamps `mos_norm` into the policy range, then applies the temperature
    /// rule. This is the entry point training uses for held-out-safe lookups.
    pub fn temperature_clamped(&self, mos_norm: f64, label: Label) -> f64 {
        sample_temperature(mos_norm.clamp(self.norm_min, self.norm_max), label, self)
            .expect("clamped input lies in the policy range")
    }
}

/// Per-sample temperature: spoofs heat up as their normalized MOS rises above
/// the threshold, bona fide samples heat up as theirs falls below it, and the
/// asymmetry factor scales the two sides so both ends of the range land at
/// comparable temperatures. Exactly 1 at the threshold.
///
/// Positivity is a structural guarantee of a valid policy, so it is enforced
/// with an assertion rather than an error value.
pub fn sample_temperature(mos_norm: f64, label: Label, policy: &TemperaturePolicy) -> Result<f64> {
    if !(policy.norm_min..=policy.norm_max).contains(&mos_norm) {
        return Err(Error::Domain(format!(
            "normalized MOS {mos_norm} outside the policy range [{}, {}]",
            policy.norm_min, policy.norm_max
        )));
    }
    let t = match label {
        Label::Spoof => 1.0 + policy.asymmetry * (mos_norm - policy.threshold),
        Label::Bonafide => 1.0 - (mos_norm - policy.threshold) / policy.asymmetry,
    };
    assert!(
        t.is_finite() && t > 0.0,
        "temperature {t} must be positive (mos_norm {mos_norm}, label {label}, threshold {}, asymmetry {})",
        policy.threshold,
        policy.asymmetry
    );
    Ok(t)
}

/// One row of the difficulty table. The temperature is filled in once a
/// policy exists.
#[derive(Debug, Clone, PartialEq)]
pub struct DifficultyRecord {
    pub sample_id: String,
    pub difficulty: f64,
    pub temperature: Option<f64>,
}

/// Writes the table as plain lines of `id difficulty temperature`. Floats use
/// the shortest round-trip representation so reading the file back loses
/// nothing. Every record must have its temperature set.
pub fn write_difficulty_table(path: &Path, records: &[DifficultyRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        let temperature = r.temperature.ok_or_else(|| {
            Error::Config(format!("record {:?} has no temperature to export", r.sample_id))
        })?;
        out.push_str(&format!("{} {} {}\n", r.sample_id, r.difficulty, temperature));
    }
    fs::write(path, out).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

pub fn read_difficulty_table(path: &Path) -> Result<Vec<DifficultyRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
    let mut records = Vec::new();
    for (index, line) in text.lines().enumerate() {
        let line_no = index + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                msg: format!("expected `id difficulty temperature`, got {} fields", fields.len()),
            });
        }
        let parse = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                msg: format!("bad {what} {s:?}"),
            })
        };
        records.push(DifficultyRecord {
            sample_id: fields[0].to_string(),
            difficulty: parse(fields[1], "difficulty")?,
            temperature: Some(parse(fields[2], "temperature")?),
        });
    }
    Ok(records)
}

/// How the policy's threshold was obtained, recorded for provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdProvenance {
    pub mode: String,
    pub balanced: bool,
    pub error_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyBody {
    pub version: u32,
    pub policy: TemperaturePolicy,
    pub stats: NormalizationStats,
    pub search: ThresholdProvenance,
}

pub const POLICY_VERSION: u32 = 1;

/// On-disk policy file: the body plus a content hash over its canonical
/// serialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyFile {
    pub sha256: String,
    pub body: PolicyBody,
}

pub fn write_policy(path: &Path, body: &PolicyBody) -> Result<()> {
    let canonical = serde_json::to_string(body).expect("policy serializes");
    let file = PolicyFile { sha256: sha256_hex(canonical.as_bytes()), body: body.clone() };
    let mut text = serde_json::to_string_pretty(&file).expect("policy file serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

pub fn read_policy(path: &Path) -> Result<PolicyBody> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
    let file: PolicyFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        msg: format!("bad policy file: {e}"),
    })?;
    let canonical = serde_json::to_string(&file.body).expect("policy serializes");
    if sha256_hex(canonical.as_bytes()) != file.sha256 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: "content hash mismatch, file was modified or corrupted".into(),
        });
    }
    if file.body.version != POLICY_VERSION {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: format!("unsupported policy version {} (expected {POLICY_VERSION})", file.body.version),
        });
    }
    Ok(file.body)
}
