//! Dataset manifests, MOS normalization, and synthetic data generation.
//!
//! A manifest is line-delimited JSON: one header object declaring the feature
//! dimension, then one record per line with `id`, `label`, `mos`, and
//! `features`. Raw MOS values live on the 1-5 listening-test scale and are
//! mapped to [0, 1] before any difficulty or temperature computation.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Class label. Spoof is class index 0, bona fide class index 1, matching the
/// logit ordering used throughout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Spoof,
    Bonafide,
}

impl Label {
    pub fn index(self) -> usize {
        match self {
            Label::Spoof => 0,
            Label::Bonafide => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Spoof => "spoof",
            Label::Bonafide => "bonafide",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One utterance: an id, an optional class label, the raw MOS, the normalized
/// MOS once a normalization pass has run, and a fixed-length feature vector.
///
/// Labels are optional only so that scoring-time manifests can withhold them;
/// every training-side path requires them.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub label: Option<Label>,
    pub mos_raw: f64,
    pub mos_norm: Option<f64>,
    pub features: Vec<f64>,
}

/// A loaded manifest: samples in file order plus the declared feature width.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub feature_dim: usize,
    pub samples: Vec<Sample>,
}

/// Whether `load_manifest` must reject records without a label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelPolicy {
    Required,
    Optional,
}

#[derive(Deserialize)]
struct HeaderLine {
    feature_dim: usize,
}

#[derive(Serialize)]
struct HeaderOut {
    kind: &'static str,
    version: u32,
    feature_dim: usize,
}

#[derive(Deserialize)]
struct RecordIn {
    id: String,
    #[serde(default)]
    label: Option<String>,
    mos: f64,
    features: Vec<f64>,
}

#[derive(Serialize)]
struct RecordOut<'a> {
    id: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<&'a str>,
    mos: f64,
    features: &'a [f64],
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.to_path_buf(), source }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line, msg: msg.into() }
}

/// Reads a manifest. Every malformed record is reported with its 1-based line
/// number; records must be unique by id, match the declared feature dimension,
/// and carry only finite numbers.
pub fn load_manifest(path: &Path, labels: LabelPolicy) -> Result<Manifest> {
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines();

    let header_text = match lines.next() {
        Some(result) => result.map_err(|e| io_err(path, e))?,
        None => return Err(parse_err(path, 1, "empty file, expected a manifest header")),
    };
    let header: HeaderLine = serde_json::from_str(&header_text)
        .map_err(|e| parse_err(path, 1, format!("bad manifest header: {e}")))?;
    if header.feature_dim == 0 {
        return Err(parse_err(path, 1, "feature_dim must be at least 1"));
    }

    let mut samples = Vec::new();
    let mut seen_ids: HashSet<String> = HashSet::new();
    for (index, result) in lines.enumerate() {
        let line_no = index + 2;
        let text = result.map_err(|e| io_err(path, e))?;
        if text.trim().is_empty() {
            continue;
        }
        let record: RecordIn = serde_json::from_str(&text)
            .map_err(|e| parse_err(path, line_no, format!("bad record: {e}")))?;

        let label = match record.label.as_deref() {
            Some("spoof") => Some(Label::Spoof),
            Some("bonafide") => Some(Label::Bonafide),
            Some(other) => {
                return Err(parse_err(
                    path,
                    line_no,
                    format!("unknown label {other:?}, expected \"spoof\" or \"bonafide\""),
                ))
            }
            None => match labels {
                LabelPolicy::Required => {
                    return Err(parse_err(path, line_no, format!("record {:?} has no label", record.id)))
                }
                LabelPolicy::Optional => None,
            },
        };

        if !record.mos.is_finite() {
            return Err(parse_err(path, line_no, format!("non-finite MOS value {}", record.mos)));
        }
        if record.features.len() != header.feature_dim {
            return Err(parse_err(
                path,
                line_no,
                format!(
                    "feature dimension {} does not match the declared {}",
                    record.features.len(),
                    header.feature_dim
                ),
            ));
        }
        if let Some(bad) = record.features.iter().find(|v| !v.is_finite()) {
            return Err(parse_err(path, line_no, format!("non-finite feature value {bad}")));
        }
        if !seen_ids.insert(record.id.clone()) {
            return Err(parse_err(path, line_no, format!("duplicate sample id {:?}", record.id)));
        }

        samples.push(Sample {
            id: record.id,
            label,
            mos_raw: record.mos,
            mos_norm: None,
            features: record.features,
        });
    }

    Ok(Manifest { feature_dim: header.feature_dim, samples })
}

/// Writes a manifest in the format `load_manifest` reads. Output is
/// byte-deterministic for identical input.
pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    let mut out = String::new();
    let header = HeaderOut { kind: "dataset-manifest", version: 1, feature_dim: manifest.feature_dim };
    out.push_str(&serde_json::to_string(&header).expect("header serializes"));
    out.push('\n');
    for sample in &manifest.samples {
        if sample.features.len() != manifest.feature_dim {
            return Err(Error::ShapeMismatch(format!(
                "sample {:?} has {} features, manifest declares {}",
                sample.id,
                sample.features.len(),
                manifest.feature_dim
            )));
        }
        let record = RecordOut {
            id: &sample.id,
            label: sample.label.map(Label::as_str),
            mos: sample.mos_raw,
            features: &sample.features,
        };
        out.push_str(&serde_json::to_string(&record).expect("record serializes"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// How raw MOS values are mapped onto [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormStrategy {
    /// Linear rescale of the observed raw range onto [0, 1].
    MinMax,
    /// Fixed rescale (m - 1) / 4 of the 1-5 MOS scale, clamped to [0, 1].
    /// Dataset-independent, so it never degenerates on constant input.
    FixedRange,
}

/// Normalization statistics fitted on the training split and reused verbatim
/// for any held-out data. `norm_min`/`norm_max` are the observed
/// post-normalization extremes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub strategy: NormStrategy,
    pub raw_min: f64,
    pub raw_max: f64,
    pub norm_min: f64,
    pub norm_max: f64,
}

fn raw_extremes(samples: &[Sample]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in samples {
        lo = lo.min(s.mos_raw);
        hi = hi.max(s.mos_raw);
    }
    (lo, hi)
}

fn norm_extremes(samples: &[Sample]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in samples {
        let v = s.mos_norm.expect("mos_norm set before taking extremes");
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

/// Fits normalization on `samples` (the training split), writes `mos_norm`
/// into each one, and returns the fitted statistics.
///
/// Min-max needs at least two samples and a strictly positive raw range;
/// fixed-range clamps anything outside the 1-5 scale instead of failing.
pub fn normalize_mos(samples: &mut [Sample], strategy: NormStrategy) -> Result<NormalizationStats> {
    match strategy {
        NormStrategy::MinMax => {
            if samples.len() < 2 {
                return Err(Error::Config(
                    "min-max normalization needs at least two samples".into(),
                ));
            }
            let (raw_min, raw_max) = raw_extremes(samples);
            if raw_max <= raw_min {
                return Err(Error::DegenerateMosRange { value: raw_min });
            }
            let range = raw_max - raw_min;
            for s in samples.iter_mut() {
                s.mos_norm = Some((s.mos_raw - raw_min) / range);
            }
            let (norm_min, norm_max) = norm_extremes(samples);
            Ok(NormalizationStats { strategy, raw_min, raw_max, norm_min, norm_max })
        }
        NormStrategy::FixedRange => {
            if samples.is_empty() {
                return Err(Error::Config("cannot normalize an empty sample list".into()));
            }
            for s in samples.iter_mut() {
                s.mos_norm = Some(((s.mos_raw - 1.0) / 4.0).clamp(0.0, 1.0));
            }
            let (raw_min, raw_max) = raw_extremes(samples);
            let (norm_min, norm_max) = norm_extremes(samples);
            Ok(NormalizationStats { strategy, raw_min, raw_max, norm_min, norm_max })
        }
    }
}

/// Applies already-fitted statistics to held-out samples. Values falling
/// outside the fitted range are clamped to [0, 1] so the temperature rule's
/// positivity guarantee keeps holding.
pub fn apply_normalization(samples: &mut [Sample], stats: &NormalizationStats) -> Result<()> {
    match stats.strategy {
        NormStrategy::MinMax => {
            let range = stats.raw_max - stats.raw_min;
            if !(range > 0.0) {
                return Err(Error::DegenerateMosRange { value: stats.raw_min });
            }
            for s in samples.iter_mut() {
                s.mos_norm = Some(((s.mos_raw - stats.raw_min) / range).clamp(0.0, 1.0));
            }
        }
        NormStrategy::FixedRange => {
            for s in samples.iter_mut() {
                s.mos_norm = Some(((s.mos_raw - 1.0) / 4.0).clamp(0.0, 1.0));
            }
        }
    }
    Ok(())
}

/// Configuration for the synthetic spoof/bona-fide task.
///
/// `n_bonafide`/`n_spoof` size the training split; validation and test are
/// scaled copies with the same class ratio. Spoof samples carry a latent
/// quality q drawn from `[quality_lo, quality_hi]`: their features slide from
/// a spoof center toward the bona fide center as q grows, and their MOS rises
/// with q, which is exactly what makes high-q spoofs hard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_bonafide: usize,
    pub n_spoof: usize,
    pub feature_dim: usize,
    pub quality_lo: f64,
    pub quality_hi: f64,
    pub mos_noise_sd: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_bonafide: 200,
            n_spoof: 1800,
            feature_dim: 16,
            quality_lo: 0.1,
            quality_hi: 0.9,
            mos_noise_sd: 0.25,
            val_fraction: 0.25,
            test_fraction: 0.5,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_bonafide == 0 || self.n_spoof == 0 {
            return Err(Error::Config("n_bonafide and n_spoof must both be positive".into()));
        }
        if self.feature_dim == 0 {
            return Err(Error::Config("feature_dim must be at least 1".into()));
        }
        if !(self.quality_lo.is_finite() && self.quality_hi.is_finite())
            || self.quality_lo < 0.0
            || self.quality_hi > 1.0
            || self.quality_lo >= self.quality_hi
        {
            return Err(Error::Config(format!(
                "quality range [{}, {}] must be a non-empty sub-interval of [0, 1]",
                self.quality_lo, self.quality_hi
            )));
        }
        if !self.mos_noise_sd.is_finite() || self.mos_noise_sd < 0.0 {
            return Err(Error::Config(format!(
                "mos_noise_sd {} must be finite and non-negative",
                self.mos_noise_sd
            )));
        }
        for (name, f) in [("val_fraction", self.val_fraction), ("test_fraction", self.test_fraction)] {
            if !f.is_finite() || f <= 0.0 || f > 1.0 {
                return Err(Error::Config(format!("{name} {f} must lie in (0, 1]")));
            }
        }
        let scaled = |n: usize, f: f64| (n as f64 * f).round() as usize;
        if scaled(self.n_bonafide, self.val_fraction) == 0
            || scaled(self.n_spoof, self.val_fraction) == 0
            || scaled(self.n_bonafide, self.test_fraction) == 0
            || scaled(self.n_spoof, self.test_fraction) == 0
        {
            return Err(Error::Config(
                "val/test fractions round a class count down to zero".into(),
            ));
        }
        Ok(())
    }
}

/// Distance between the spoof and bona fide feature centers.
const CENTER_DISTANCE: f64 = 4.0;
/// Per-dimension Gaussian feature noise. Chosen so the highest-quality
/// spoofs overlap the bona fide cloud heavily while the population as a
/// whole stays learnable by a small network.
const FEATURE_NOISE_SD: f64 = 0.5;
/// A shifted test split draws spoof quality from the top (1 - SHIFT_FLOOR)
/// fraction of the configured range.
const SHIFT_FLOOR: f64 = 0.6;
/// Beta parameters concentrating bona fide naturalness affinity near 1.
const BONA_AFFINITY_ALPHA: f64 = 9.0;
const BONA_AFFINITY_BETA: f64 = 1.5;

/// Per-sample generator latents, kept for debugging and for tests that check
/// the MOS/quality coupling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentRecord {
    pub id: String,
    pub split: String,
    pub label: Label,
    /// Naturalness affinity in [0, 1]: the latent quality q for spoofs, the
    /// Beta draw for bona fide samples.
    pub affinity: f64,
    pub mos_raw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub split: String,
    pub n_bonafide: usize,
    pub n_spoof: usize,
    pub mos_raw_min: f64,
    pub mos_raw_max: f64,
}

/// Sidecar written next to generated manifests: the generating config plus
/// the latents behind every sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSidecar {
    pub version: u32,
    pub shifted_test: bool,
    pub config: SynthConfig,
    pub splits: Vec<SplitStats>,
    pub latents: Vec<LatentRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub train: Manifest,
    pub val: Manifest,
    pub test: Manifest,
    pub sidecar: SynthSidecar,
}

struct SplitSpec {
    name: &'static str,
    n_bonafide: usize,
    n_spoof: usize,
    shifted: bool,
}

/// Generates the three splits of the synthetic task. The same seed always
/// produces the same samples, byte for byte once written.
///
/// With `shifted_test`, the test split draws spoof quality from the upper
/// part of the configured range only, modeling evaluation spoofs that sound
/// more natural than anything seen in training.
pub fn generate_synthetic(config: &SynthConfig, shifted_test: bool) -> Result<SyntheticData> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let dim = config.feature_dim;
    // Random unit direction separating the two class centers.
    let axis_noise = Normal::new(0.0, 1.0).expect("valid normal");
    let mut axis: Vec<f64> = (0..dim).map(|_| axis_noise.sample(&mut rng)).collect();
    let norm = axis.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    for v in axis.iter_mut() {
        *v /= norm;
    }
    let bona_center: Vec<f64> = axis.iter().map(|v| v * CENTER_DISTANCE / 2.0).collect();
    let spoof_center: Vec<f64> = axis.iter().map(|v| -v * CENTER_DISTANCE / 2.0).collect();

    let feature_noise = Normal::new(0.0, FEATURE_NOISE_SD).expect("valid normal");
    let mos_noise = Normal::new(0.0, config.mos_noise_sd).expect("validated sd");
    let bona_affinity = Beta::new(BONA_AFFINITY_ALPHA, BONA_AFFINITY_BETA).expect("valid beta");

    let scaled = |n: usize, f: f64| (n as f64 * f).round() as usize;
    let splits = [
        SplitSpec { name: "train", n_bonafide: config.n_bonafide, n_spoof: config.n_spoof, shifted: false },
        SplitSpec {
            name: "val",
            n_bonafide: scaled(config.n_bonafide, config.val_fraction),
            n_spoof: scaled(config.n_spoof, config.val_fraction),
            shifted: false,
        },
        SplitSpec {
            name: "test",
            n_bonafide: scaled(config.n_bonafide, config.test_fraction),
            n_spoof: scaled(config.n_spoof, config.test_fraction),
            shifted: shifted_test,
        },
    ];

    let mut manifests = Vec::with_capacity(3);
    let mut split_stats = Vec::with_capacity(3);
    let mut latents = Vec::new();

    for spec in &splits {
        let mut samples = Vec::with_capacity(spec.n_bonafide + spec.n_spoof);

        for i in 0..spec.n_bonafide {
            let affinity: f64 = bona_affinity.sample(&mut rng);
            let features: Vec<f64> =
                bona_center.iter().map(|c| c + feature_noise.sample(&mut rng)).collect();
            let mos = (1.0 + 4.0 * affinity + mos_noise.sample(&mut rng)).clamp(1.0, 5.0);
            let id = format!("{}-bonafide-{i:05}", spec.name);
            latents.push(LatentRecord {
                id: id.clone(),
                split: spec.name.to_string(),
                label: Label::Bonafide,
                affinity,
                mos_raw: mos,
            });
            samples.push(Sample { id, label: Some(Label::Bonafide), mos_raw: mos, mos_norm: None, features });
        }

        let q_lo = if spec.shifted {
            config.quality_lo + SHIFT_FLOOR * (config.quality_hi - config.quality_lo)
        } else {
            config.quality_lo
        };
        for i in 0..spec.n_spoof {
            let q: f64 = rng.gen_range(q_lo..config.quality_hi);
            let features: Vec<f64> = spoof_center
                .iter()
                .zip(&bona_center)
                .map(|(s, b)| s + q * (b - s) + feature_noise.sample(&mut rng))
                .collect();
            let mos = (1.0 + 4.0 * q + mos_noise.sample(&mut rng)).clamp(1.0, 5.0);
            let id = format!("{}-spoof-{i:05}", spec.name);
            latents.push(LatentRecord {
                id: id.clone(),
                split: spec.name.to_string(),
                label: Label::Spoof,
                affinity: q,
                mos_raw: mos,
            });
            samples.push(Sample { id, label: Some(Label::Spoof), mos_raw: mos, mos_norm: None, features });
        }

        let manifest = Manifest { feature_dim: dim, samples };
        let (lo, hi) = raw_extremes(&manifest.samples);
        split_stats.push(SplitStats {
            split: spec.name.to_string(),
            n_bonafide: spec.n_bonafide,
            n_spoof: spec.n_spoof,
            mos_raw_min: lo,
            mos_raw_max: hi,
        });
        manifests.push(manifest);
    }

    let mut iter = manifests.into_iter();
    let (train, val, test) = (
        iter.next().expect("train split"),
        iter.next().expect("val split"),
        iter.next().expect("test split"),
    );
    Ok(SyntheticData {
        train,
        val,
        test,
        sidecar: SynthSidecar {
            version: 1,
            shifted_test,
            config: config.clone(),
            splits: split_stats,
            latents,
        },
    })
}

/// Writes the generator sidecar as pretty JSON.
pub fn write_sidecar(path: &Path, sidecar: &SynthSidecar) -> Result<()> {
    let mut text = serde_json::to_string_pretty(sidecar).expect("sidecar serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}
