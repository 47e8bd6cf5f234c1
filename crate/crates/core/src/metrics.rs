//! Detection metrics. Scores are oriented so larger means "more bona fide";
//! a detection threshold t accepts (calls bona fide) every sample with
//! score >= t.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::model::{forward, MlpParams};

/// One scored trial. The label is optional so score files for unlabeled
/// evaluation sets can flow through the same type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub id: String,
    pub score: f64,
    pub label: Option<Label>,
}

/// Scores one feature vector: bona fide logit minus spoof logit.
pub fn score_sample(params: &MlpParams, features: &[f64]) -> Result<f64> {
    let trace = forward(params, features)?;
    let score = trace.logits[1] - trace.logits[0];
    if !score.is_finite() {
        return Err(Error::NonFinite(format!("score {score}")));
    }
    Ok(score)
}

/// Equal error rate and the threshold where it is attained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EerResult {
    pub eer: f64,
    pub threshold: f64,
}

fn split_scores(records: &[ScoreRecord]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut spoof = Vec::new();
    let mut bona = Vec::new();
    for r in records {
        if !r.score.is_finite() {
            return Err(Error::NonFinite(format!("score {} for trial {}", r.score, r.id)));
        }
        match r.label {
            Some(Label::Spoof) => spoof.push(r.score),
            Some(Label::Bonafide) => bona.push(r.score),
            None => {
                return Err(Error::Domain(format!(
                    "trial {} has no label; error rates need labeled trials",
                    r.id
                )))
            }
        }
    }
    if spoof.is_empty() || bona.is_empty() {
        return Err(Error::Domain(format!(
            "error rates need both classes; got {} spoof and {} bona fide trials",
            spoof.len(),
            bona.len()
        )));
    }
    spoof.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    bona.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    Ok((spoof, bona))
}

/// False-acceptance rate at `t`: the fraction of spoof scores >= t.
fn far_at(spoof_sorted: &[f64], t: f64) -> f64 {
    let below = spoof_sorted.partition_point(|&s| s < t);
    (spoof_sorted.len() - below) as f64 / spoof_sorted.len() as f64
}

/// False-rejection rate at `t`: the fraction of bona fide scores < t.
fn frr_at(bona_sorted: &[f64], t: f64) -> f64 {
    let below = bona_sorted.partition_point(|&s| s < t);
    below as f64 / bona_sorted.len() as f64
}

fn threshold_sweep(spoof_sorted: &[f64], bona_sorted: &[f64]) -> Vec<f64> {
    let mut all: Vec<f64> = spoof_sorted.iter().chain(bona_sorted).copied().collect();
    all.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    all.dedup();
    // One sentinel above everything: rejects every trial.
    let top = *all.last().unwrap() + 1.0;
    all.push(top);
    all
}

/// Equal error rate. FAR falls and FRR rises as the threshold sweeps the
/// distinct scores from low to high; the crossing is located at the first
/// threshold where FAR - FRR <= 0 and interpolated linearly when the two
/// rates do not meet exactly.
pub fn eer(records: &[ScoreRecord]) -> Result<EerResult> {
    let (spoof, bona) = split_scores(records)?;
    let thresholds = threshold_sweep(&spoof, &bona);

    let mut prev: Option<(f64, f64, f64, f64)> = None; // (t, far, frr, diff)
    for &t in &thresholds {
        let far = far_at(&spoof, t);
        let frr = frr_at(&bona, t);
        let diff = far - frr;
        if diff <= 0.0 {
            if diff == 0.0 {
                return Ok(EerResult { eer: far, threshold: t });
            }
            // Interpolate between the previous threshold (diff > 0) and this
            // one. At the lowest threshold FAR = 1, FRR = 0, so diff > 0
            // unless it was caught above; prev is always present here.
            let (pt, pfar, pfrr, pdiff) = prev.expect("sweep starts with FAR >= FRR");
            let alpha = pdiff / (pdiff - diff);
            let eer_far = pfar + alpha * (far - pfar);
            let eer_frr = pfrr + alpha * (frr - pfrr);
            return Ok(EerResult { eer: 0.5 * (eer_far + eer_frr), threshold: pt + alpha * (t - pt) });
        }
        prev = Some((t, far, frr, diff));
    }
    // The final sentinel rejects everything: FAR = 0, FRR = 1, diff = -1.
    unreachable!("the sweep always crosses FAR = FRR");
}

/// Cost coefficients for the detection cost function
/// `c0 + c1 * FRR(t) + c2 * FAR(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TdcfCoeffs {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
}

impl TdcfCoeffs {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("c0", self.c0), ("c1", self.c1), ("c2", self.c2)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("cost coefficient {name} = {v} must be finite and >= 0")));
            }
        }
        if self.c1 + self.c2 <= 0.0 {
            return Err(Error::Config("at least one of c1, c2 must be positive".into()));
        }
        Ok(())
    }
}

/// Minimum of the detection cost over the same threshold sweep used for the
/// equal error rate. With coefficients (0, 1, 1) this is min(FAR + FRR),
/// which never exceeds twice the equal error rate.
pub fn min_tdcf(records: &[ScoreRecord], coeffs: &TdcfCoeffs) -> Result<f64> {
    coeffs.validate()?;
    let (spoof, bona) = split_scores(records)?;
    let mut best = f64::INFINITY;
    for &t in &threshold_sweep(&spoof, &bona) {
        let cost = coeffs.c0 + coeffs.c1 * frr_at(&bona, t) + coeffs.c2 * far_at(&spoof, t);
        if cost < best {
            best = cost;
        }
    }
    Ok(best)
}

/// Writes one `<id> <score>` line per record, scores fixed to six decimals.
pub fn write_score_file(path: &Path, records: &[ScoreRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        if !r.score.is_finite() {
            return Err(Error::NonFinite(format!("score {} for trial {}", r.score, r.id)));
        }
        out.push_str(&format!("{} {:.6}\n", r.id, r.score));
    }
    fs::write(path, out).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

/// Reads a score file written by `write_score_file`. Labels come back as
/// `None`; join against a manifest to restore them.
pub fn read_score_file(path: &Path) -> Result<Vec<ScoreRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                msg: format!("expected `id score`, got {} fields", fields.len()),
            });
        }
        let score: f64 = fields[1].parse().map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            msg: format!("bad score {:?}: {e}", fields[1]),
        })?;
        if !score.is_finite() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                msg: format!("score {score} is not finite"),
            });
        }
        records.push(ScoreRecord { id: fields[0].to_string(), score, label: None });
    }
    Ok(records)
}

/// Summary of one labeled evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_spoof: usize,
    pub n_bonafide: usize,
    pub eer: f64,
    pub eer_threshold: f64,
    pub min_tdcf: Option<f64>,
    pub tdcf_coeffs: Option<TdcfCoeffs>,
}

/// Computes the equal error rate (always) and the minimum detection cost
/// (when coefficients are supplied) over labeled records.
pub fn evaluate(records: &[ScoreRecord], coeffs: Option<&TdcfCoeffs>) -> Result<EvalReport> {
    let eer_result = eer(records)?;
    let (min_cost, used) = match coeffs {
        Some(c) => (Some(min_tdcf(records, c)?), Some(*c)),
        None => (None, None),
    };
    let n_spoof = records.iter().filter(|r| r.label == Some(Label::Spoof)).count();
    let n_bonafide = records.iter().filter(|r| r.label == Some(Label::Bonafide)).count();
    Ok(EvalReport {
        n_spoof,
        n_bonafide,
        eer: eer_result.eer,
        eer_threshold: eer_result.threshold,
        min_tdcf: min_cost,
        tdcf_coeffs: used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trials(spoof: &[f64], bona: &[f64]) -> Vec<ScoreRecord> {
        let mut v = Vec::new();
        for (i, &s) in spoof.iter().enumerate() {
            v.push(ScoreRecord { id: format!("s{i}"), score: s, label: Some(Label::Spoof) });
        }
        for (i, &s) in bona.iter().enumerate() {
            v.push(ScoreRecord { id: format!("b{i}"), score: s, label: Some(Label::Bonafide) });
        }
        v
    }

    #[test]
    fn perfectly_separated_scores_have_zero_eer() {
        let records = trials(&[-3.0, -2.0, -1.0], &[1.0, 2.0, 3.0]);
        let result = eer(&records).unwrap();
        assert_eq!(result.eer, 0.0);
        // The crossing threshold rejects all spoofs and accepts all bona fide.
        assert!(result.threshold > -1.0 && result.threshold <= 1.0);
    }

    #[test]
    fn fully_inverted_scores_have_eer_one() {
        // Every spoof outscores every bona fide trial.
        let records = trials(&[1.0, 2.0], &[-2.0, -1.0]);
        let result = eer(&records).unwrap();
        assert!((result.eer - 1.0).abs() < 1e-12, "eer = {}", result.eer);
    }

    #[test]
    fn identical_score_distributions_give_eer_half() {
        let records = trials(&[0.5, 0.5], &[0.5, 0.5]);
        let result = eer(&records).unwrap();
        assert!((result.eer - 0.5).abs() < 1e-12, "eer = {}", result.eer);
    }

    #[test]
    fn exact_crossings_are_returned_without_interpolation() {
        // spoof [0, 2], bona [1, 3]: at t = 2, FAR = 1/2 and FRR = 1/2 meet
        // exactly, so the EER is read off directly.
        let records = trials(&[0.0, 2.0], &[1.0, 3.0]);
        let result = eer(&records).unwrap();
        assert!((result.eer - 0.5).abs() < 1e-12);
        assert_eq!(result.threshold, 2.0);
    }

    #[test]
    fn interpolation_lands_between_bracketing_rates() {
        // spoof [0, 1, 2, 3], bona [2.5, 3.5]:
        //   t=2.5: FAR=1/4, FRR=0   -> diff  0.25
        //   t=3.0: FAR=1/4, FRR=1/2 -> diff -0.25
        // alpha = 0.5, interpolated FAR = FRR = 0.25 at t = 2.75.
        let records = trials(&[0.0, 1.0, 2.0, 3.0], &[2.5, 3.5]);
        let result = eer(&records).unwrap();
        assert!((result.eer - 0.25).abs() < 1e-12, "eer = {}", result.eer);
        assert!((result.threshold - 2.75).abs() < 1e-12);
    }

    #[test]
    fn eer_requires_both_classes_and_labels() {
        let only_spoof = trials(&[0.0, 1.0], &[]);
        assert!(matches!(eer(&only_spoof), Err(Error::Domain(_))));
        let only_bona = trials(&[], &[0.0]);
        assert!(matches!(eer(&only_bona), Err(Error::Domain(_))));
        let mut unlabeled = trials(&[0.0], &[1.0]);
        unlabeled[0].label = None;
        assert!(matches!(eer(&unlabeled), Err(Error::Domain(_))));
        let records = vec![ScoreRecord { id: "x".into(), score: f64::NAN, label: Some(Label::Spoof) }];
        assert!(matches!(eer(&records), Err(Error::NonFinite(_))));
    }

    #[test]
    fn eer_is_invariant_to_monotone_score_transforms() {
        let records = trials(&[-1.0, 0.3, 0.8, 2.0], &[0.5, 1.4, 2.2]);
        let base = eer(&records).unwrap().eer;
        let transformed: Vec<ScoreRecord> = records
            .iter()
            .map(|r| ScoreRecord { id: r.id.clone(), score: (r.score * 0.7).tanh() * 3.0 + 1.0, label: r.label })
            .collect();
        assert!((eer(&transformed).unwrap().eer - base).abs() < 1e-12);
    }

    #[test]
    fn min_cost_matches_hand_computed_examples() {
        // Perfect separation: zero cost with (0, 1, 1).
        let perfect = trials(&[-3.0, -2.0], &[2.0, 3.0]);
        assert_eq!(min_tdcf(&perfect, &TdcfCoeffs { c0: 0.0, c1: 1.0, c2: 1.0 }).unwrap(), 0.0);
        // A floor cost c0 = 0.05 shows up unchanged.
        let floored = min_tdcf(&perfect, &TdcfCoeffs { c0: 0.05, c1: 1.0, c2: 1.0 }).unwrap();
        assert!((floored - 0.05).abs() < 1e-15);
        // All scores equal: any threshold errs fully on one side; the sweep's
        // best is min(c1, c2) when one rate can be driven to zero.
        let flat = trials(&[0.5], &[0.5]);
        let cost = min_tdcf(&flat, &TdcfCoeffs { c0: 0.0, c1: 1.0, c2: 1.0 }).unwrap();
        assert!((cost - 1.0).abs() < 1e-12, "cost = {cost}");
    }

    #[test]
    fn min_cost_with_unit_coeffs_never_exceeds_twice_the_eer() {
        let cases = [
            trials(&[-1.0, 0.0, 0.4, 0.9], &[0.2, 0.6, 1.5]),
            trials(&[0.5, 0.5, 0.5], &[0.5, 0.5]),
            trials(&[1.0, 2.0], &[-1.0, -2.0]),
        ];
        let unit = TdcfCoeffs { c0: 0.0, c1: 1.0, c2: 1.0 };
        for records in &cases {
            let e = eer(records).unwrap().eer;
            let c = min_tdcf(records, &unit).unwrap();
            assert!(c <= 2.0 * e + 1e-9, "cost {c} vs 2*eer {}", 2.0 * e);
        }
    }

    #[test]
    fn bad_cost_coefficients_are_rejected() {
        let records = trials(&[0.0], &[1.0]);
        assert!(min_tdcf(&records, &TdcfCoeffs { c0: -0.1, c1: 1.0, c2: 1.0 }).is_err());
        assert!(min_tdcf(&records, &TdcfCoeffs { c0: 0.0, c1: 0.0, c2: 0.0 }).is_err());
        assert!(min_tdcf(&records, &TdcfCoeffs { c0: 0.0, c1: f64::NAN, c2: 1.0 }).is_err());
    }

    #[test]
    fn score_of_a_two_logit_network_is_bona_minus_spoof() {
        // Identity 2->2 network: logits equal the input.
        let params = MlpParams {
            layer_sizes: vec![2, 2],
            weights: vec![vec![1.0, 0.0, 0.0, 1.0]],
            biases: vec![vec![0.0, 0.0]],
        };
        let score = score_sample(&params, &[3.0, 1.0]).unwrap();
        assert_eq!(score, -2.0);
    }

    #[test]
    fn score_files_round_trip_at_six_decimals() {
        let records = vec![
            ScoreRecord { id: "trial-a".into(), score: 1.25, label: Some(Label::Bonafide) },
            ScoreRecord { id: "trial-b".into(), score: -0.333333333, label: None },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.txt");
        write_score_file(&path, &records).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "trial-a 1.250000\ntrial-b -0.333333\n");
        let loaded = read_score_file(&path).unwrap();
        assert_eq!(loaded.len(), 2);
        assert_eq!(loaded[0].id, "trial-a");
        assert!((loaded[1].score + 0.333333).abs() < 1e-12);
        assert!(loaded.iter().all(|r| r.label.is_none()));
    }

    #[test]
    fn malformed_score_lines_name_their_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.txt");
        std::fs::write(&path, "ok 1.0\nbad-line\n").unwrap();
        match read_score_file(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected a parse error, got {other:?}"),
        }
        std::fs::write(&path, "ok 1.0\nbad not-a-number\n").unwrap();
        match read_score_file(&path) {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, 2);
                assert!(msg.contains("not-a-number"));
            }
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn evaluate_bundles_counts_and_optional_cost() {
        let records = trials(&[-1.0, -0.5, 0.1], &[0.5, 1.0]);
        let bare = evaluate(&records, None).unwrap();
        assert_eq!((bare.n_spoof, bare.n_bonafide), (3, 2));
        assert!(bare.min_tdcf.is_none() && bare.tdcf_coeffs.is_none());
        let unit = TdcfCoeffs { c0: 0.0, c1: 1.0, c2: 1.0 };
        let full = evaluate(&records, Some(&unit)).unwrap();
        assert_eq!(full.eer, bare.eer);
        assert!(full.min_tdcf.is_some());
        assert_eq!(full.tdcf_coeffs, Some(unit));
    }
}
