//! Shared fixtures for the criterion benchmarks.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use moscl_core::dataset::Label;
use moscl_core::metrics::ScoreRecord;

/// A labeled score set with the class skew the benchmarks care about.
pub fn score_records(n_spoof: usize, n_bonafide: usize, seed: u64) -> Vec<ScoreRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(n_spoof + n_bonafide);
    for i in 0..n_spoof {
        records.push(ScoreRecord {
            id: format!("s{i:05}"),
            score: rng.gen_range(-3.0..1.0),
            label: Some(Label::Spoof),
        });
    }
    for i in 0..n_bonafide {
        records.push(ScoreRecord {
            id: format!("b{i:05}"),
            score: rng.gen_range(-1.0..3.0),
            label: Some(Label::Bonafide),
        });
    }
    records
}

/// Normalized MOS values and labels for threshold-search benchmarks.
pub fn mos_with_labels(n: usize, seed: u64) -> (Vec<f64>, Vec<Label>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mos = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        mos.push(rng.gen_range(0.0..=1.0));
        labels.push(if i % 10 == 0 { Label::Bonafide } else { Label::Spoof });
    }
    (mos, labels)
}
