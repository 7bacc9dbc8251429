//! Collapsing Monte Carlo dropout samples into one prediction per image.

use thiserror::Error;

use crate::severity::{softmax, ScoreError};
use crate::types::{ModelFamily, ModelKind, PredictionRecord};

/// Default number of stochastic forward passes per image.
pub const DEFAULT_MC_SAMPLES: usize = 50;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AggregateError {
    #[error("sample set for {patient_id}/{image_id} is empty")]
    Empty {
        patient_id: String,
        image_id: String,
    },
    #[error("sample {index} has {got} values, expected {expected}")]
    ShapeMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("sample {index} belongs to {patient_id}/{image_id}, not to this set")]
    ForeignSample {
        index: usize,
        patient_id: String,
        image_id: String,
    },
    #[error("dispersion needs at least 2 samples, got {0}")]
    TooFewForDispersion(usize),
    #[error(transparent)]
    Score(#[from] ScoreError),
}

/// All MC samples of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct MCSampleSet {
    pub patient_id: String,
    pub image_id: String,
    pub kind: ModelKind,
    /// Multi-class only: samples are probabilities rather than logits.
    pub is_probability: bool,
    samples: Vec<Vec<f64>>,
}

impl MCSampleSet {
    pub fn new(
        patient_id: impl Into<String>,
        image_id: impl Into<String>,
        kind: ModelKind,
        is_probability: bool,
        samples: Vec<Vec<f64>>,
    ) -> Result<Self, AggregateError> {
        let patient_id = patient_id.into();
        let image_id = image_id.into();
        if samples.is_empty() {
            return Err(AggregateError::Empty {
                patient_id,
                image_id,
            });
        }
        let expected = kind.output_len();
        if let Some((index, s)) = samples
            .iter()
            .enumerate()
            .find(|(_, s)| s.len() != expected)
        {
            return Err(AggregateError::ShapeMismatch {
                index,
                expected,
                got: s.len(),
            });
        }
        Ok(MCSampleSet {
            patient_id,
            image_id,
            kind,
            is_probability,
            samples,
        })
    }

    /// Builds a set from MC records that must all share one patient and image.
    pub fn from_records(records: &[PredictionRecord]) -> Result<Self, AggregateError> {
        let first = records.first().ok_or_else(|| AggregateError::Empty {
            patient_id: String::new(),
            image_id: String::new(),
        })?;
        for (index, r) in records.iter().enumerate() {
            if r.patient_id != first.patient_id || r.image_id != first.image_id {
                return Err(AggregateError::ForeignSample {
                    index,
                    patient_id: r.patient_id.clone(),
                    image_id: r.image_id.clone(),
                });
            }
        }
        MCSampleSet::new(
            first.patient_id.clone(),
            first.image_id.clone(),
            first.kind,
            first.is_probability,
            records.iter().map(|r| r.outputs.clone()).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    /// Samples in the space averaging happens in: probabilities for
    /// multi-class, raw outputs otherwise.
    fn averaging_space(&self) -> Result<Vec<Vec<f64>>, ScoreError> {
        if self.kind.family() == ModelFamily::MultiClass && !self.is_probability {
            self.samples.iter().map(|s| softmax(s)).collect()
        } else {
            Ok(self.samples.clone())
        }
    }
}

/// Elementwise mean of the samples, in probability space for multi-class.
pub fn aggregate_mean(set: &MCSampleSet) -> Result<PredictionRecord, AggregateError> {
    let samples = set.averaging_space()?;
    // running mean: exact when every sample is identical
    let mut mean = samples[0].clone();
    for (i, s) in samples.iter().enumerate().skip(1) {
        let w = 1.0 / (i + 1) as f64;
        for (acc, v) in mean.iter_mut().zip(s) {
            *acc += (v - *acc) * w;
        }
    }
    Ok(PredictionRecord {
        patient_id: set.patient_id.clone(),
        image_id: set.image_id.clone(),
        mc_sample: None,
        outputs: mean,
        kind: set.kind,
        is_probability: set.kind.family() == ModelFamily::MultiClass,
    })
}

/// Per-element sample standard deviation (n-1 denominator).
pub fn mc_dispersion(set: &MCSampleSet) -> Result<Vec<f64>, AggregateError> {
    if set.len() < 2 {
        return Err(AggregateError::TooFewForDispersion(set.len()));
    }
    let samples = set.averaging_space()?;
    let n = samples.len() as f64;
    let width = set.kind.output_len();
    (0..width)
        .map(|j| {
            let mean = samples.iter().map(|s| s[j]).sum::<f64>() / n;
            let ss = samples.iter().map(|s| (s[j] - mean).powi(2)).sum::<f64>();
            Ok((ss / (n - 1.0)).sqrt())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::severity::score_record;
    use proptest::prelude::*;

    fn set(kind: ModelKind, samples: Vec<Vec<f64>>) -> MCSampleSet {
        let prob = kind.family() == ModelFamily::MultiClass;
        MCSampleSet::new("p", "i", kind, prob, samples).unwrap()
    }

    #[test]
    fn single_sample_is_identity() {
        let agg = aggregate_mean(&set(ModelKind::binary(), vec![vec![0.7]])).unwrap();
        assert_eq!(agg.outputs, vec![0.7]);
        assert!(agg.mc_sample.is_none());
    }

    #[test]
    fn binary_mean() {
        let s = set(ModelKind::binary(), vec![vec![0.2], vec![0.4], vec![0.6]]);
        assert!((aggregate_mean(&s).unwrap().outputs[0] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn multiclass_mean_stays_on_simplex() {
        let kind = ModelKind::new(ModelFamily::MultiClass, 3).unwrap();
        let s = set(kind, vec![vec![0.2, 0.5, 0.3], vec![0.4, 0.3, 0.3]]);
        let out = aggregate_mean(&s).unwrap().outputs;
        for (a, b) in out.iter().zip([0.3, 0.4, 0.3]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn logits_are_averaged_after_softmax() {
        let kind = ModelKind::new(ModelFamily::MultiClass, 2).unwrap();
        let s =
            MCSampleSet::new("p", "i", kind, false, vec![vec![0.0, 0.0], vec![10.0, 0.0]]).unwrap();
        let out = aggregate_mean(&s).unwrap();
        assert!(out.is_probability);
        let expected = (0.5 + 1.0 / (1.0 + (-10.0f64).exp())) / 2.0;
        assert!((out.outputs[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        let kind = ModelKind::binary();
        assert!(matches!(
            MCSampleSet::new("p", "i", kind, false, vec![]),
            Err(AggregateError::Empty { .. })
        ));
        assert!(matches!(
            MCSampleSet::new("p", "i", kind, false, vec![vec![0.1], vec![0.1, 0.2]]),
            Err(AggregateError::ShapeMismatch { index: 1, .. })
        ));
        let one = set(kind, vec![vec![0.3]]);
        assert!(matches!(
            mc_dispersion(&one),
            Err(AggregateError::TooFewForDispersion(1))
        ));
        let a = PredictionRecord::deterministic("p", "a", kind, vec![0.1]);
        let b = PredictionRecord::deterministic("p", "b", kind, vec![0.1]);
        assert!(matches!(
            MCSampleSet::from_records(&[a, b]),
            Err(AggregateError::ForeignSample { index: 1, .. })
        ));
    }

    #[test]
    fn dispersion_examples() {
        let kind = ModelKind::binary();
        assert_eq!(
            mc_dispersion(&set(kind, vec![vec![0.3]; 4])).unwrap(),
            vec![0.0]
        );
        let d = mc_dispersion(&set(kind, vec![vec![0.0], vec![1.0]])).unwrap();
        assert!((d[0] - 0.5f64.sqrt()).abs() < 1e-15);
        let d = mc_dispersion(&set(kind, vec![vec![0.0], vec![0.5], vec![1.0]])).unwrap();
        assert!((d[0] - 0.5).abs() < 1e-15);
    }

    fn unit_samples(width: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(prop::collection::vec(0.0f64..=1.0, width), 1..20)
    }

    proptest! {
        #[test]
        fn permutation_invariant(mut samples in unit_samples(2), seed in any::<u64>()) {
            let kind = ModelKind::new(ModelFamily::Ordinal, 3).unwrap();
            let a = aggregate_mean(&set(kind, samples.clone())).unwrap();
            use rand::seq::SliceRandom;
            samples.shuffle(&mut crate::rng::stream(seed, 0));
            let b = aggregate_mean(&set(kind, samples)).unwrap();
            for (x, y) in a.outputs.iter().zip(&b.outputs) {
                prop_assert!((x - y).abs() <= 1e-15);
            }
        }

        #[test]
        fn mean_score_commutes_for_ordinal(samples in unit_samples(3)) {
            let kind = ModelKind::new(ModelFamily::Ordinal, 4).unwrap();
            let s = set(kind, samples.clone());
            let agg = score_record(&aggregate_mean(&s).unwrap()).unwrap().value;
            let per: f64 = samples
                .iter()
                .map(|o| score_record(&PredictionRecord::deterministic("p", "i", kind, o.clone())).unwrap().value)
                .sum::<f64>() / samples.len() as f64;
            prop_assert!((agg - per).abs() <= 1e-12);
            prop_assert!(aggregate_mean(&s).unwrap().outputs.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
