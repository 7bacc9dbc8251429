//! Mapping raw model outputs onto the continuous severity score.
//!
//! * binary: the sigmoid output itself, range `[0, 1]`;
//! * multi-class: the probability-weighted class index, `sum_i p_i * i - 1`
//!   with 1-based `i`, range `[0, k-1]`;
//! * ordinal: the sum of the `k-1` rank outputs, range `[0, k-1]`;
//! * regression: the raw output, clamped into `[0, k-1]`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{ModelFamily, ModelKind, PredictionRecord, SeverityScore, SIMPLEX_TOLERANCE};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoreError {
    #[error("need at least 2 values, got {0}")]
    TooFewValues(usize),
    #[error("value {index} is not finite")]
    NonFinite { index: usize },
    #[error("probabilities sum to {sum}, not 1")]
    NotOnSimplex { sum: f64 },
    #[error("value {index} = {value} outside [0, 1]")]
    OutOfUnitRange { index: usize, value: f64 },
    #[error("class {class} out of range for k = {k}")]
    ClassOutOfRange { class: usize, k: usize },
    #[error("passthrough scoring is only defined for binary and regression, not {0}")]
    NotPassthrough(ModelFamily),
    #[error("expected {expected} outputs, got {got}")]
    OutputLength { expected: usize, got: usize },
}

fn check_finite(values: &[f64]) -> Result<(), ScoreError> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(ScoreError::NonFinite { index }),
        None => Ok(()),
    }
}

fn check_unit(values: &[f64]) -> Result<(), ScoreError> {
    check_finite(values)?;
    match values.iter().position(|v| !(0.0..=1.0).contains(v)) {
        Some(index) => Err(ScoreError::OutOfUnitRange {
            index,
            value: values[index],
        }),
        None => Ok(()),
    }
}

/// Max-subtracted softmax.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>, ScoreError> {
    if logits.len() < 2 {
        return Err(ScoreError::TooFewValues(logits.len()));
    }
    check_finite(logits)?;
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Probability-weighted class index of a probability vector.
pub fn multiclass_severity(probs: &[f64]) -> Result<SeverityScore, ScoreError> {
    if probs.len() < 2 {
        return Err(ScoreError::TooFewValues(probs.len()));
    }
    check_finite(probs)?;
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOLERANCE || probs.iter().any(|&p| p < 0.0) {
        return Err(ScoreError::NotOnSimplex { sum });
    }
    let value: f64 = probs
        .iter()
        .enumerate()
        .map(|(class, p)| p * class as f64)
        .sum();
    let range_max = (probs.len() - 1) as f64;
    // sums within the simplex tolerance can stray a hair outside the range
    Ok(SeverityScore::new(value.clamp(0.0, range_max), range_max))
}

/// Sum of the ordinal rank outputs.
pub fn ordinal_severity(unit_outputs: &[f64]) -> Result<SeverityScore, ScoreError> {
    check_unit(unit_outputs)?;
    Ok(SeverityScore::new(
        unit_outputs.iter().sum(),
        unit_outputs.len() as f64,
    ))
}

/// Binary outputs pass through unchanged; regression outputs are clamped.
pub fn passthrough_severity(output: f64, kind: ModelKind) -> Result<SeverityScore, ScoreError> {
    check_finite(&[output])?;
    let range_max = kind.range_max();
    match kind.family() {
        ModelFamily::Binary => {
            check_unit(&[output])?;
            Ok(SeverityScore::new(output, range_max))
        }
        ModelFamily::Regression => {
            let value = output.clamp(0.0, range_max);
            Ok(SeverityScore {
                value,
                range_max,
                clamped: value != output,
            })
        }
        other => Err(ScoreError::NotPassthrough(other)),
    }
}

/// Severity of one record, applying softmax first when a multi-class record
/// carries logits.
pub fn score_record(record: &PredictionRecord) -> Result<SeverityScore, ScoreError> {
    let expected = record.kind.output_len();
    if record.outputs.len() != expected {
        return Err(ScoreError::OutputLength {
            expected,
            got: record.outputs.len(),
        });
    }
    match record.kind.family() {
        ModelFamily::Binary | ModelFamily::Regression => {
            passthrough_severity(record.outputs[0], record.kind)
        }
        ModelFamily::MultiClass if record.is_probability => multiclass_severity(&record.outputs),
        ModelFamily::MultiClass => multiclass_severity(&softmax(&record.outputs)?),
        ModelFamily::Ordinal => ordinal_severity(&record.outputs),
    }
}

/// Rank encoding of a class label: level `j` is set iff `class > j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrdinalEncoding {
    pub levels: Vec<bool>,
}

impl OrdinalEncoding {
    pub fn decode(&self) -> usize {
        self.levels.iter().filter(|&&l| l).count()
    }

    pub fn as_reals(&self) -> Vec<f64> {
        self.levels
            .iter()
            .map(|&l| if l { 1.0 } else { 0.0 })
            .collect()
    }
}

pub fn encode_ordinal_label(true_class: usize, k: usize) -> Result<OrdinalEncoding, ScoreError> {
    if k < 2 {
        return Err(ScoreError::TooFewValues(k));
    }
    if true_class >= k {
        return Err(ScoreError::ClassOutOfRange {
            class: true_class,
            k,
        });
    }
    Ok(OrdinalEncoding {
        levels: (0..k - 1).map(|j| true_class > j).collect(),
    })
}

/// Rule for turning ordinal rank outputs into a discrete class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum OrdinalDecode {
    /// Number of rank outputs strictly above the threshold.
    CountAbove { threshold: f64 },
    /// Summed score rounded half-up.
    RoundSum,
}

impl Default for OrdinalDecode {
    fn default() -> Self {
        OrdinalDecode::CountAbove { threshold: 0.5 }
    }
}

pub fn decode_ordinal_prediction(unit_outputs: &[f64], rule: OrdinalDecode) -> usize {
    match rule {
        OrdinalDecode::CountAbove { threshold } => {
            unit_outputs.iter().filter(|&&v| v > threshold).count()
        }
        OrdinalDecode::RoundSum => {
            let sum: f64 = unit_outputs.iter().sum();
            ((sum + 0.5).floor().max(0.0) as usize).min(unit_outputs.len())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const EPS: f64 = 1e-12;

    #[test]
    fn softmax_uniform() {
        let p = softmax(&[0.0, 0.0, 0.0]).unwrap();
        for v in p {
            assert!((v - 1.0 / 3.0).abs() < EPS);
        }
    }

    #[test]
    fn softmax_is_stable_for_large_logits() {
        let p = softmax(&[1000.0, 0.0]).unwrap();
        assert!(p.iter().all(|v| v.is_finite()));
        assert!((p[0] - 1.0).abs() < EPS && p[1] < 1e-300);
        assert!(softmax(&[f64::NAN, 0.0]).is_err());
        assert!(softmax(&[1.0]).is_err());
    }

    #[test]
    fn multiclass_examples() {
        assert_eq!(multiclass_severity(&[1.0, 0.0, 0.0]).unwrap().value, 0.0);
        assert_eq!(multiclass_severity(&[0.0, 0.0, 1.0]).unwrap().value, 2.0);
        let s = multiclass_severity(&[0.2, 0.5, 0.3]).unwrap();
        assert!((s.value - 1.1).abs() < EPS);
        assert_eq!(s.range_max, 2.0);
        assert!(matches!(
            multiclass_severity(&[0.5, 0.6]),
            Err(ScoreError::NotOnSimplex { .. })
        ));
    }

    #[test]
    fn ordinal_examples() {
        assert_eq!(ordinal_severity(&[0.0, 0.0]).unwrap().value, 0.0);
        assert_eq!(ordinal_severity(&[1.0, 1.0]).unwrap().value, 2.0);
        assert!((ordinal_severity(&[0.9, 0.2]).unwrap().value - 1.1).abs() < EPS);
        assert!(ordinal_severity(&[1.2, 0.0]).is_err());
    }

    #[test]
    fn passthrough_examples() {
        let b = ModelKind::binary();
        assert_eq!(passthrough_severity(0.98, b).unwrap().value, 0.98);
        assert_eq!(passthrough_severity(0.01, b).unwrap().value, 0.01);
        assert!(passthrough_severity(1.01, b).is_err());
        let r = ModelKind::new(ModelFamily::Regression, 3).unwrap();
        let s = passthrough_severity(2.4, r).unwrap();
        assert_eq!(s.value, 2.0);
        assert!(s.clamped);
        assert!(!passthrough_severity(1.4, r).unwrap().clamped);
        let o = ModelKind::new(ModelFamily::Ordinal, 3).unwrap();
        assert!(matches!(
            passthrough_severity(0.5, o),
            Err(ScoreError::NotPassthrough(_))
        ));
    }

    #[test]
    fn ordinal_encoding_examples() {
        let enc = |c, k| encode_ordinal_label(c, k).unwrap().as_reals();
        assert_eq!(enc(0, 3), vec![0.0, 0.0]);
        assert_eq!(enc(1, 3), vec![1.0, 0.0]);
        assert_eq!(enc(2, 3), vec![1.0, 1.0]);
        assert_eq!(enc(3, 4), vec![1.0, 1.0, 1.0]);
        assert!(encode_ordinal_label(3, 3).is_err());
    }

    #[test]
    fn ordinal_decode_examples() {
        let rule = OrdinalDecode::default();
        assert_eq!(decode_ordinal_prediction(&[0.9, 0.8], rule), 2);
        assert_eq!(decode_ordinal_prediction(&[0.2, 0.1], rule), 0);
        assert_eq!(decode_ordinal_prediction(&[0.9, 0.2], rule), 1);
        assert_eq!(
            decode_ordinal_prediction(&[0.9, 0.7], OrdinalDecode::RoundSum),
            2
        );
        assert_eq!(
            decode_ordinal_prediction(&[0.3, 0.1], OrdinalDecode::RoundSum),
            0
        );
    }

    #[test]
    fn score_record_applies_softmax_to_logits_only() {
        let kind = ModelKind::new(ModelFamily::MultiClass, 3).unwrap();
        let mut r = PredictionRecord::deterministic("p", "i", kind, vec![0.0, 0.0, 0.0]);
        r.is_probability = false;
        assert!((score_record(&r).unwrap().value - 1.0).abs() < EPS);
        let r = PredictionRecord::deterministic("p", "i", kind, vec![0.2, 0.5, 0.3]);
        assert!((score_record(&r).unwrap().value - 1.1).abs() < EPS);
    }

    fn simplex(k: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, k).prop_map(|mut v| {
            v[0] += 1e-3;
            let s: f64 = v.iter().sum();
            v.iter_mut().for_each(|x| *x /= s);
            v
        })
    }

    proptest! {
        #[test]
        fn weighted_index_forms_agree(p in (2usize..10).prop_flat_map(simplex)) {
            let one_based: f64 = p.iter().enumerate().map(|(i, v)| v * (i + 1) as f64).sum::<f64>() - 1.0;
            let s = multiclass_severity(&p).unwrap();
            prop_assert!((s.value - one_based).abs() <= 1e-12);
            prop_assert!(s.value >= 0.0 && s.value <= s.range_max);
        }

        #[test]
        fn linear_in_probabilities(
            (p, q) in (2usize..8).prop_flat_map(|k| (simplex(k), simplex(k))),
            alpha in 0.0f64..=1.0,
        ) {
            let mix: Vec<f64> = p.iter().zip(&q).map(|(a, b)| alpha * a + (1.0 - alpha) * b).collect();
            let lhs = multiclass_severity(&mix).unwrap().value;
            let rhs = alpha * multiclass_severity(&p).unwrap().value
                + (1.0 - alpha) * multiclass_severity(&q).unwrap().value;
            prop_assert!((lhs - rhs).abs() <= 1e-12);
        }

        #[test]
        fn one_hot_and_encoding_are_exact(k in 2usize..=10, c in 0usize..10) {
            let c = c % k;
            let mut onehot = vec![0.0; k];
            onehot[c] = 1.0;
            prop_assert_eq!(multiclass_severity(&onehot).unwrap().value, c as f64);
            let enc = encode_ordinal_label(c, k).unwrap();
            prop_assert_eq!(ordinal_severity(&enc.as_reals()).unwrap().value, c as f64);
            prop_assert_eq!(enc.decode(), c);
            prop_assert_eq!(decode_ordinal_prediction(&enc.as_reals(), OrdinalDecode::default()), c);
            // monotone 1s-then-0s pattern
            prop_assert!(enc.levels.windows(2).all(|w| w[0] >= w[1]));
        }

        #[test]
        fn ordinal_severity_in_range(v in prop::collection::vec(0.0f64..=1.0, 1..9)) {
            let s = ordinal_severity(&v).unwrap();
            prop_assert!(s.value >= 0.0 && s.value <= s.range_max);
        }
    }
}
