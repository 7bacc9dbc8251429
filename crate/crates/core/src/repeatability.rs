//! Test-retest pairing and non-parametric Bland-Altman limits of agreement.
//!
//! Each patient contributes one signed difference: the image pair with the
//! largest absolute severity difference among all of that patient's images.
//! The 95% limits of agreement are the empirical 2.5th and 97.5th
//! percentiles of those differences, and are reported both in score units
//! and as a fraction of the score range `k - 1`.

use std::collections::BTreeSet;

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::shapiro::{shapiro_wilk, MAX_SAMPLES, MIN_SAMPLES};

/// Below this many patients the 2.5/97.5 percentiles are unstable.
pub const DEFAULT_MIN_PATIENTS: usize = 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RepeatabilityError {
    #[error("patient {patient_id} has {count} image(s); at least 2 are needed for a pair")]
    TooFewImages { patient_id: String, count: usize },
    #[error("patient {patient_id} lists image {image_id} more than once")]
    DuplicateImage {
        patient_id: String,
        image_id: String,
    },
    #[error("percentile of an empty sample")]
    EmptySample,
    #[error("percentile q = {0} outside [0, 100]")]
    InvalidQuantile(f64),
    #[error("sample contains a non-finite value")]
    NonFinite,
    #[error("limits of agreement need at least 2 patients, got {0}")]
    TooFewPatients(usize),
    #[error("score range must be positive, got {0}")]
    InvalidRange(f64),
}

/// The selected test-retest pair of one patient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientPairDifference {
    pub patient_id: String,
    pub first_image: String,
    pub second_image: String,
    /// `score(first) - score(second)`, with `first < second` in image-id order
    /// unless a sign policy flipped it.
    pub difference: f64,
    pub pair_mean: f64,
    pub num_images: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitsOfAgreement {
    pub lower: f64,
    pub upper: f64,
    pub width: f64,
    /// `width / range_max`.
    pub width_fraction: f64,
    pub range_max: f64,
    pub n_patients: usize,
}

/// How the sign of each patient's difference is fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignedPolicy {
    /// First image of the pair in image-id order minus the second.
    #[default]
    StableOrder,
    /// Stable order, then a seeded coin flip per patient.
    RandomSeeded,
}

impl std::str::FromStr for SignedPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "stable-order" => Ok(SignedPolicy::StableOrder),
            "random-seeded" => Ok(SignedPolicy::RandomSeeded),
            other => Err(format!(
                "unknown signed policy {other:?} (expected stable-order or random-seeded)"
            )),
        }
    }
}

/// What the Bland-Altman x coordinate averages over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairMeanPolicy {
    #[default]
    SelectedPair,
    AllImages,
}

/// Picks the image pair with the largest absolute score difference.
///
/// Ties go to the lexicographically smallest `(first, second)` image-id pair.
pub fn select_max_diff_pair(
    patient_id: &str,
    scores: &[(String, f64)],
) -> Result<PatientPairDifference, RepeatabilityError> {
    if scores.len() < 2 {
        return Err(RepeatabilityError::TooFewImages {
            patient_id: patient_id.to_string(),
            count: scores.len(),
        });
    }
    let mut sorted: Vec<&(String, f64)> = scores.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    if let Some(w) = sorted.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(RepeatabilityError::DuplicateImage {
            patient_id: patient_id.to_string(),
            image_id: w[0].0.clone(),
        });
    }
    let mut best = (0, 1, sorted[0].1 - sorted[1].1);
    for i in 0..sorted.len() {
        for j in i + 1..sorted.len() {
            let d = sorted[i].1 - sorted[j].1;
            if d.abs() > best.2.abs() {
                best = (i, j, d);
            }
        }
    }
    let (i, j, difference) = best;
    Ok(PatientPairDifference {
        patient_id: patient_id.to_string(),
        first_image: sorted[i].0.clone(),
        second_image: sorted[j].0.clone(),
        difference,
        pair_mean: (sorted[i].1 + sorted[j].1) / 2.0,
        num_images: scores.len(),
    })
}

/// Replaces each pair mean by the mean over all of that patient's images.
pub fn use_all_image_mean(diff: &mut PatientPairDifference, scores: &[(String, f64)]) {
    diff.pair_mean = scores.iter().map(|(_, s)| s).sum::<f64>() / scores.len() as f64;
}

/// Applies the sign policy. Diffs are visited in patient-id order so the
/// random policy is reproducible for a fixed seed.
pub fn apply_sign_policy(diffs: &mut [PatientPairDifference], policy: SignedPolicy, seed: u64) {
    if policy == SignedPolicy::StableOrder {
        return;
    }
    let mut order: Vec<usize> = (0..diffs.len()).collect();
    order.sort_by(|&a, &b| diffs[a].patient_id.cmp(&diffs[b].patient_id));
    let mut rng = crate::rng::stream(seed, crate::rng::tags::SIGN);
    for idx in order {
        if rng.random::<bool>() {
            let d = &mut diffs[idx];
            d.difference = -d.difference;
            std::mem::swap(&mut d.first_image, &mut d.second_image);
        }
    }
}

/// Linear-interpolation ("type 7") percentile: position `h = (n-1) q / 100`.
pub fn empirical_percentile(samples: &[f64], q: f64) -> Result<f64, RepeatabilityError> {
    let sorted = sorted_finite(samples)?;
    percentile_of_sorted(&sorted, q)
}

fn sorted_finite(samples: &[f64]) -> Result<Vec<f64>, RepeatabilityError> {
    if samples.is_empty() {
        return Err(RepeatabilityError::EmptySample);
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(RepeatabilityError::NonFinite);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted)
}

fn percentile_of_sorted(sorted: &[f64], q: f64) -> Result<f64, RepeatabilityError> {
    if !(0.0..=100.0).contains(&q) {
        return Err(RepeatabilityError::InvalidQuantile(q));
    }
    let h = (sorted.len() - 1) as f64 * q / 100.0;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 >= sorted.len() || frac == 0.0 {
        return Ok(sorted[lo]);
    }
    Ok(sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]))
}

/// Non-parametric 95% limits from raw signed differences.
pub fn loa_from_differences(
    differences: &[f64],
    range_max: f64,
) -> Result<LimitsOfAgreement, RepeatabilityError> {
    if !range_max.is_finite() || range_max <= 0.0 {
        return Err(RepeatabilityError::InvalidRange(range_max));
    }
    if differences.is_empty() {
        return Err(RepeatabilityError::EmptySample);
    }
    if differences.len() < 2 {
        return Err(RepeatabilityError::TooFewPatients(differences.len()));
    }
    let sorted = sorted_finite(differences)?;
    let lower = percentile_of_sorted(&sorted, 2.5)?;
    let upper = percentile_of_sorted(&sorted, 97.5)?;
    let width = upper - lower;
    Ok(LimitsOfAgreement {
        lower,
        upper,
        width,
        width_fraction: width / range_max,
        range_max,
        n_patients: differences.len(),
    })
}

/// Non-parametric 95% limits of agreement over patient pairs.
pub fn limits_of_agreement(
    diffs: &[PatientPairDifference],
    range_max: f64,
    min_patients: usize,
) -> Result<LimitsOfAgreement, RepeatabilityError> {
    if !diffs.is_empty() && diffs.len() < min_patients {
        warn!(
            "only {} patients with test-retest pairs (< {min_patients}); percentile limits are unstable",
            diffs.len()
        );
    }
    let values: Vec<f64> = diffs.iter().map(|d| d.difference).collect();
    loa_from_differences(&values, range_max)
}

/// Parametric limits `mean +/- 1.96 sd`.
pub fn parametric_loa(differences: &[f64], range_max: f64) -> Option<LimitsOfAgreement> {
    let n = differences.len();
    if n < 2 {
        return None;
    }
    let mean = differences.iter().sum::<f64>() / n as f64;
    let var = differences.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    let (lower, upper) = (mean - 1.96 * sd, mean + 1.96 * sd);
    Some(LimitsOfAgreement {
        lower,
        upper,
        width: upper - lower,
        width_fraction: (upper - lower) / range_max,
        range_max,
        n_patients: n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalityVerdict {
    Normal,
    NonNormal,
    NotTested,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityGate {
    pub verdict: NormalityVerdict,
    pub w: Option<f64>,
    pub p_value: Option<f64>,
    pub alpha: f64,
    /// Why the test was not run, when it was not.
    pub note: Option<String>,
}

/// Shapiro-Wilk gate deciding whether parametric limits are also reported.
pub fn normality_gate(differences: &[f64], alpha: f64) -> NormalityGate {
    let n = differences.len();
    let not_tested = |note: String| NormalityGate {
        verdict: NormalityVerdict::NotTested,
        w: None,
        p_value: None,
        alpha,
        note: Some(note),
    };
    if !(MIN_SAMPLES..=MAX_SAMPLES).contains(&n) {
        return not_tested(format!(
            "n = {n} outside the supported range {MIN_SAMPLES}..={MAX_SAMPLES}"
        ));
    }
    match shapiro_wilk(differences) {
        Ok(sw) => NormalityGate {
            verdict: if sw.p_value < alpha {
                NormalityVerdict::NonNormal
            } else {
                NormalityVerdict::Normal
            },
            w: Some(sw.w),
            p_value: Some(sw.p_value),
            alpha,
            note: None,
        },
        Err(e) => not_tested(e.to_string()),
    }
}

/// Distinct patient ids, sorted.
pub fn patient_ids(diffs: &[PatientPairDifference]) -> BTreeSet<&str> {
    diffs.iter().map(|d| d.patient_id.as_str()).collect()
}
