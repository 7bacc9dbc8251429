use super::StatsError;
use crate::severity::{decode_ordinal_prediction, softmax, OrdinalDecode};
use crate::types::{LabeledExample, ModelFamily, PredictionRecord};

/// Equal-width cut points `range_max * j / k` for `j = 1..k-1`.
pub fn regression_thresholds(k: usize, range_max: f64) -> Vec<f64> {
    (1..k).map(|j| range_max * j as f64 / k as f64).collect()
}

/// Band of a regression score: `s <= cut_1` is class 0, `cut_j < s <= cut_{j+1}`
/// is class `j`, and everything above the last cut is the top class.
pub fn regression_class(score: f64, thresholds: &[f64]) -> usize {
    thresholds.iter().filter(|&&cut| score > cut).count()
}

/// Discrete class predicted by one (deterministic or aggregated) record.
pub fn predicted_class(record: &PredictionRecord, ordinal_rule: OrdinalDecode) -> usize {
    let kind = record.kind;
    let out = &record.outputs;
    match kind.family() {
        ModelFamily::Binary => usize::from(out[0] > 0.5),
        ModelFamily::MultiClass => {
            let probs = if record.is_probability {
                out.clone()
            } else {
                softmax(out).unwrap_or_else(|_| out.clone())
            };
            // first maximum wins ties
            probs
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &p)| {
                    if p > best.1 {
                        (i, p)
                    } else {
                        best
                    }
                })
                .0
        }
        ModelFamily::Ordinal => decode_ordinal_prediction(out, ordinal_rule),
        ModelFamily::Regression => {
            let range_max = kind.range_max();
            let score = out[0].clamp(0.0, range_max);
            regression_class(score, &regression_thresholds(kind.num_classes(), range_max))
        }
    }
}

/// Fraction of predictions equal to their aligned label.
pub fn accuracy(predicted: &[usize], labels: &[LabeledExample]) -> Result<f64, StatsError> {
    if predicted.len() != labels.len() {
        return Err(StatsError::LengthMismatch {
            predictions: predicted.len(),
            labels: labels.len(),
        });
    }
    if predicted.is_empty() {
        return Err(StatsError::TooFewSamples { needed: 1, got: 0 });
    }
    let correct = predicted
        .iter()
        .zip(labels)
        .filter(|(p, l)| **p == l.true_class)
        .count();
    Ok(correct as f64 / predicted.len() as f64)
}
