//! Domain vocabulary shared by every module.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on the probability-simplex sum for multi-class records.
pub const SIMPLEX_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TypeError {
    #[error("{family} model requires num_classes {expected}, got {got}")]
    ClassCount {
        family: ModelFamily,
        expected: &'static str,
        got: usize,
    },
    #[error("unknown model kind {0:?} (expected binary, multiclass, ordinal or regression)")]
    UnknownFamily(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelFamily {
    Binary,
    MultiClass,
    Ordinal,
    Regression,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 4] = [
        ModelFamily::Binary,
        ModelFamily::MultiClass,
        ModelFamily::Ordinal,
        ModelFamily::Regression,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelFamily::Binary => "binary",
            ModelFamily::MultiClass => "multiclass",
            ModelFamily::Ordinal => "ordinal",
            ModelFamily::Regression => "regression",
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelFamily {
    type Err = TypeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "binary" => Ok(ModelFamily::Binary),
            "multiclass" | "multi-class" | "multi_class" => Ok(ModelFamily::MultiClass),
            "ordinal" => Ok(ModelFamily::Ordinal),
            "regression" => Ok(ModelFamily::Regression),
            other => Err(TypeError::UnknownFamily(other.to_string())),
        }
    }
}

/// Model family plus class count `k`. The severity range is `[0, k-1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawModelKind", into = "RawModelKind")]
pub struct ModelKind {
    family: ModelFamily,
    num_classes: usize,
}

#[derive(Serialize, Deserialize)]
struct RawModelKind {
    family: ModelFamily,
    num_classes: usize,
}

impl TryFrom<RawModelKind> for ModelKind {
    type Error = TypeError;

    fn try_from(raw: RawModelKind) -> Result<Self, Self::Error> {
        ModelKind::new(raw.family, raw.num_classes)
    }
}

impl From<ModelKind> for RawModelKind {
    fn from(kind: ModelKind) -> Self {
        RawModelKind {
            family: kind.family,
            num_classes: kind.num_classes,
        }
    }
}

impl ModelKind {
    pub fn new(family: ModelFamily, num_classes: usize) -> Result<Self, TypeError> {
        match family {
            ModelFamily::Binary if num_classes != 2 => Err(TypeError::ClassCount {
                family,
                expected: "= 2",
                got: num_classes,
            }),
            _ if num_classes < 2 => Err(TypeError::ClassCount {
                family,
                expected: ">= 2",
                got: num_classes,
            }),
            _ => Ok(ModelKind {
                family,
                num_classes,
            }),
        }
    }

    pub fn binary() -> Self {
        ModelKind {
            family: ModelFamily::Binary,
            num_classes: 2,
        }
    }

    pub fn family(&self) -> ModelFamily {
        self.family
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Number of values one output vector carries for this kind.
    pub fn output_len(&self) -> usize {
        match self.family {
            ModelFamily::Binary | ModelFamily::Regression => 1,
            ModelFamily::MultiClass => self.num_classes,
            ModelFamily::Ordinal => self.num_classes - 1,
        }
    }

    /// Upper end of the severity range, `k - 1`.
    pub fn range_max(&self) -> f64 {
        (self.num_classes - 1) as f64
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (k={})", self.family, self.num_classes)
    }
}

/// One model output vector for one image, optionally one MC dropout sample of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub patient_id: String,
    pub image_id: String,
    /// `None` for a deterministic (non-MC) prediction.
    pub mc_sample: Option<u32>,
    pub outputs: Vec<f64>,
    pub kind: ModelKind,
    /// Multi-class only: whether `outputs` are probabilities (true) or logits.
    pub is_probability: bool,
}

impl PredictionRecord {
    pub fn deterministic(
        patient_id: impl Into<String>,
        image_id: impl Into<String>,
        kind: ModelKind,
        outputs: Vec<f64>,
    ) -> Self {
        PredictionRecord {
            patient_id: patient_id.into(),
            image_id: image_id.into(),
            mc_sample: None,
            outputs,
            kind,
            is_probability: kind.family() == ModelFamily::MultiClass,
        }
    }

    pub fn is_mc_sample(&self) -> bool {
        self.mc_sample.is_some()
    }
}

/// A single invariant violation found by [`validate_record`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EmptyPatientId,
    EmptyImageId,
    OutputLength { expected: usize, got: usize },
    NonFinite { index: usize },
    OutOfUnitRange { index: usize, value: f64 },
    NotOnSimplex { sum: f64 },
    NegativeProbability { index: usize, value: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyPatientId => write!(f, "empty patient_id"),
            Violation::EmptyImageId => write!(f, "empty image_id"),
            Violation::OutputLength { expected, got } => {
                write!(f, "expected {expected} outputs, got {got}")
            }
            Violation::NonFinite { index } => write!(f, "output {index} is not finite"),
            Violation::OutOfUnitRange { index, value } => {
                write!(f, "output {index} = {value} outside [0, 1]")
            }
            Violation::NotOnSimplex { sum } => {
                write!(f, "probabilities sum to {sum}, not 1")
            }
            Violation::NegativeProbability { index, value } => {
                write!(f, "probability {index} = {value} is negative")
            }
        }
    }
}

/// Checks every [`PredictionRecord`] invariant and lists all violations found.
pub fn validate_record(record: &PredictionRecord) -> Result<(), Vec<Violation>> {
    let mut violations = Vec::new();
    if record.patient_id.is_empty() {
        violations.push(Violation::EmptyPatientId);
    }
    if record.image_id.is_empty() {
        violations.push(Violation::EmptyImageId);
    }
    let expected = record.kind.output_len();
    if record.outputs.len() != expected {
        violations.push(Violation::OutputLength {
            expected,
            got: record.outputs.len(),
        });
    }
    let mut all_finite = true;
    for (index, &value) in record.outputs.iter().enumerate() {
        if !value.is_finite() {
            all_finite = false;
            violations.push(Violation::NonFinite { index });
        }
    }
    match record.kind.family() {
        ModelFamily::Binary | ModelFamily::Ordinal => {
            for (index, &value) in record.outputs.iter().enumerate() {
                if value.is_finite() && !(0.0..=1.0).contains(&value) {
                    violations.push(Violation::OutOfUnitRange { index, value });
                }
            }
        }
        ModelFamily::MultiClass if record.is_probability => {
            for (index, &value) in record.outputs.iter().enumerate() {
                if value < 0.0 {
                    violations.push(Violation::NegativeProbability { index, value });
                }
            }
            if all_finite {
                let sum: f64 = record.outputs.iter().sum();
                if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
                    violations.push(Violation::NotOnSimplex { sum });
                }
            }
        }
        ModelFamily::MultiClass | ModelFamily::Regression => {}
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

/// A scalar on the disease-severity continuum `[0, range_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeverityScore {
    pub value: f64,
    pub range_max: f64,
    /// Set when a regression output was clamped into range.
    pub clamped: bool,
}

impl SeverityScore {
    pub fn new(value: f64, range_max: f64) -> Self {
        SeverityScore {
            value,
            range_max,
            clamped: false,
        }
    }
}

/// Ground-truth class for one image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub patient_id: String,
    pub image_id: String,
    pub true_class: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn kind(family: ModelFamily, k: usize) -> ModelKind {
        ModelKind::new(family, k).unwrap()
    }

    #[test]
    fn binary_requires_two_classes() {
        assert!(ModelKind::new(ModelFamily::Binary, 3).is_err());
        assert!(ModelKind::new(ModelFamily::Ordinal, 1).is_err());
        assert_eq!(kind(ModelFamily::Ordinal, 4).output_len(), 3);
        assert_eq!(kind(ModelFamily::Regression, 4).range_max(), 3.0);
    }

    #[test]
    fn binary_half_is_valid() {
        let r = PredictionRecord::deterministic("p1", "a", ModelKind::binary(), vec![0.5]);
        assert!(validate_record(&r).is_ok());
    }

    #[test]
    fn multiclass_length_mismatch() {
        let r = PredictionRecord::deterministic(
            "p1",
            "a",
            kind(ModelFamily::MultiClass, 3),
            vec![0.5, 0.5],
        );
        let v = validate_record(&r).unwrap_err();
        assert_eq!(
            v,
            vec![Violation::OutputLength {
                expected: 3,
                got: 2
            }]
        );
    }

    #[test]
    fn ordinal_out_of_range() {
        let r = PredictionRecord::deterministic(
            "p1",
            "a",
            kind(ModelFamily::Ordinal, 3),
            vec![1.2, 0.3],
        );
        let v = validate_record(&r).unwrap_err();
        assert!(matches!(v[0], Violation::OutOfUnitRange { index: 0, .. }));
    }

    #[test]
    fn logits_need_not_sum_to_one() {
        let mut r = PredictionRecord::deterministic(
            "p1",
            "a",
            kind(ModelFamily::MultiClass, 3),
            vec![3.0, -1.0, 9.0],
        );
        assert!(validate_record(&r).is_err());
        r.is_probability = false;
        assert!(validate_record(&r).is_ok());
    }

    #[test]
    fn family_parsing() {
        assert_eq!(
            "Multi-Class".parse::<ModelFamily>().unwrap(),
            ModelFamily::MultiClass
        );
        assert!("svm".parse::<ModelFamily>().is_err());
    }

    fn arb_record() -> impl Strategy<Value = PredictionRecord> {
        (
            0usize..4,
            2usize..6,
            prop::collection::vec(
                prop_oneof![
                    4 => -0.5f64..1.5,
                    1 => Just(f64::NAN),
                    1 => Just(0.0),
                    1 => Just(1.0),
                ],
                0..7,
            ),
            any::<bool>(),
            any::<bool>(),
            any::<bool>(),
        )
            .prop_map(|(fam, k, mut outputs, is_prob, normalise, empty_id)| {
                let family = ModelFamily::ALL[fam];
                let k = if family == ModelFamily::Binary { 2 } else { k };
                if normalise && !outputs.is_empty() {
                    let s: f64 = outputs.iter().map(|v| v.abs()).sum();
                    if s > 0.0 {
                        outputs.iter_mut().for_each(|v| *v = v.abs() / s);
                    }
                }
                PredictionRecord {
                    patient_id: if empty_id { String::new() } else { "p".into() },
                    image_id: "i".into(),
                    mc_sample: None,
                    outputs,
                    kind: ModelKind::new(family, k).unwrap(),
                    is_probability: is_prob,
                }
            })
    }

    // Independent restatement of the record invariants.
    fn satisfies_invariants(r: &PredictionRecord) -> bool {
        let k = r.kind.num_classes();
        let len_ok = match r.kind.family() {
            ModelFamily::Binary | ModelFamily::Regression => r.outputs.len() == 1,
            ModelFamily::MultiClass => r.outputs.len() == k,
            ModelFamily::Ordinal => r.outputs.len() == k - 1,
        };
        let finite = r.outputs.iter().all(|v| v.is_finite());
        let range_ok = match r.kind.family() {
            ModelFamily::Binary | ModelFamily::Ordinal => {
                r.outputs.iter().all(|&v| (0.0..=1.0).contains(&v))
            }
            ModelFamily::MultiClass if r.is_probability => {
                r.outputs.iter().all(|&v| v >= 0.0)
                    && (r.outputs.iter().sum::<f64>() - 1.0).abs() <= 1e-6
            }
            _ => true,
        };
        !r.patient_id.is_empty() && !r.image_id.is_empty() && len_ok && finite && range_ok
    }

    proptest! {
        #[test]
        fn validation_matches_invariants(r in arb_record()) {
            prop_assert_eq!(validate_record(&r).is_ok(), satisfies_invariants(&r));
        }
    }
}
