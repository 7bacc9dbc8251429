//! validate -> aggregate MC samples -> score -> pair -> LoA and accuracy with
//! bootstrap intervals -> normality gate -> report.

use std::collections::{BTreeMap, HashMap};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::mc::{aggregate_mean, MCSampleSet};
use crate::repeatability::{
    apply_sign_policy, limits_of_agreement, loa_from_differences, normality_gate, parametric_loa,
    select_max_diff_pair, use_all_image_mean, NormalityVerdict, PairMeanPolicy,
    PatientPairDifference, SignedPolicy,
};
use crate::report::{RepeatabilityReport, SCHEMA_VERSION};
use crate::severity::{score_record, OrdinalDecode};
use crate::stats::bootstrap::{bootstrap_metric, CiMethod};
use crate::stats::predicted_class;
use crate::stats::ttest::COMPARISON_PROCEDURE;
use crate::types::{validate_record, LabeledExample, ModelKind, PredictionRecord, SeverityScore};

/// Everything `evaluate` needs besides the data; echoed into the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub model_label: String,
    pub seed: u64,
    pub alpha: f64,
    pub signed_policy: SignedPolicy,
    pub pair_mean: PairMeanPolicy,
    pub bootstrap_iterations: usize,
    pub ci_method: CiMethod,
    pub min_patients: usize,
    pub ordinal_decode: OrdinalDecode,
    /// Use only the first `n` MC samples (by sample index) of each image.
    pub mc_samples: Option<usize>,
}

impl EvalSettings {
    pub fn from_config(config: &Config, model_label: &str) -> Self {
        let e = &config.evaluate;
        EvalSettings {
            model_label: model_label.to_string(),
            seed: config.seed,
            alpha: config.alpha,
            signed_policy: config.signed_policy,
            pair_mean: e.pair_mean,
            bootstrap_iterations: e.bootstrap_iterations,
            ci_method: e.ci_method,
            min_patients: e.min_patients,
            ordinal_decode: e.ordinal_decode,
            mc_samples: config.mc_samples,
        }
    }
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings::from_config(&Config::default(), "model")
    }
}

/// Score of one image after MC aggregation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageScore {
    pub patient_id: String,
    pub image_id: String,
    /// 0 for deterministic predictions.
    pub mc_samples: usize,
    pub severity: SeverityScore,
    pub predicted_class: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: RepeatabilityReport,
    pub differences: Vec<PatientPairDifference>,
    pub images: Vec<ImageScore>,
}

type PatientImages = (Vec<(usize, usize)>, Vec<(String, f64)>);

fn single_kind(records: &[PredictionRecord]) -> Result<ModelKind> {
    let first = records
        .first()
        .ok_or_else(|| Error::Evaluate("no prediction records".into()))?;
    if let Some(other) = records.iter().find(|r| r.kind != first.kind) {
        return Err(Error::Evaluate(format!(
            "mixed model kinds: {} and {} ({}/{})",
            first.kind, other.kind, other.patient_id, other.image_id
        )));
    }
    Ok(first.kind)
}

/// One aggregated or deterministic record per image, sorted by
/// `(patient_id, image_id)`, with the number of MC samples behind each.
pub fn aggregate_images(
    records: &[PredictionRecord],
    mc_limit: Option<usize>,
) -> Result<Vec<(PredictionRecord, usize)>> {
    for r in records {
        if let Err(v) = validate_record(r) {
            let list: Vec<String> = v.iter().map(|x| x.to_string()).collect();
            return Err(Error::Evaluate(format!(
                "invalid record {}/{}: {}",
                r.patient_id,
                r.image_id,
                list.join("; ")
            )));
        }
    }
    let mut groups: BTreeMap<(&str, &str), Vec<&PredictionRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.patient_id.as_str(), r.image_id.as_str()))
            .or_default()
            .push(r);
    }
    let mut out = Vec::with_capacity(groups.len());
    for ((pid, iid), mut group) in groups {
        let mc = group.iter().filter(|r| r.is_mc_sample()).count();
        if mc == 0 {
            if group.len() > 1 {
                return Err(Error::Evaluate(format!(
                    "{} deterministic predictions for {pid}/{iid}",
                    group.len()
                )));
            }
            out.push((group[0].clone(), 0));
            continue;
        }
        if mc != group.len() {
            return Err(Error::Evaluate(format!(
                "{pid}/{iid} mixes deterministic and MC-sample rows"
            )));
        }
        group.sort_by_key(|r| r.mc_sample);
        if let Some(w) = group.windows(2).find(|w| w[0].mc_sample == w[1].mc_sample) {
            return Err(Error::Evaluate(format!(
                "duplicate MC sample {} for {pid}/{iid}",
                w[0].mc_sample.unwrap_or_default()
            )));
        }
        if let Some(limit) = mc_limit {
            if group.len() < limit {
                return Err(Error::Evaluate(format!(
                    "{pid}/{iid} has {} MC samples, {limit} requested",
                    group.len()
                )));
            }
            group.truncate(limit);
        }
        let owned: Vec<PredictionRecord> = group.into_iter().cloned().collect();
        let set = MCSampleSet::from_records(&owned)?;
        out.push((aggregate_mean(&set)?, owned.len()));
    }
    Ok(out)
}

/// Severity and predicted class of every image.
pub fn score_images(
    records: &[PredictionRecord],
    mc_limit: Option<usize>,
    ordinal_decode: OrdinalDecode,
) -> Result<Vec<ImageScore>> {
    aggregate_images(records, mc_limit)?
        .into_iter()
        .map(|(record, n)| {
            Ok(ImageScore {
                severity: score_record(&record)?,
                predicted_class: predicted_class(&record, ordinal_decode),
                patient_id: record.patient_id,
                image_id: record.image_id,
                mc_samples: n,
            })
        })
        .collect()
}

/// The full pipeline on in-memory records.
pub fn evaluate_records(
    records: &[PredictionRecord],
    labels: &[LabeledExample],
    settings: &EvalSettings,
) -> Result<Evaluation> {
    let kind = single_kind(records)?;
    let k = kind.num_classes();
    let range_max = kind.range_max();
    let images = score_images(records, settings.mc_samples, settings.ordinal_decode)?;

    let mut label_of: HashMap<(&str, &str), usize> = HashMap::with_capacity(labels.len());
    for l in labels {
        if label_of
            .insert((l.patient_id.as_str(), l.image_id.as_str()), l.true_class)
            .is_some()
        {
            return Err(Error::Evaluate(format!(
                "duplicate label for {}/{}",
                l.patient_id, l.image_id
            )));
        }
    }
    if labels.len() > images.len() {
        warn!(
            "{} labels have no prediction",
            labels.len().saturating_sub(images.len())
        );
    }

    // per patient: (predicted, true) of every image, and the image scores
    let mut patients: BTreeMap<&str, PatientImages> = BTreeMap::new();
    for im in &images {
        let truth = *label_of
            .get(&(im.patient_id.as_str(), im.image_id.as_str()))
            .ok_or_else(|| {
                Error::Evaluate(format!("no label for {}/{}", im.patient_id, im.image_id))
            })?;
        if truth >= k {
            return Err(Error::Evaluate(format!(
                "label class {truth} for {}/{} out of range for k = {k}",
                im.patient_id, im.image_id
            )));
        }
        let entry = patients.entry(im.patient_id.as_str()).or_default();
        entry.0.push((im.predicted_class, truth));
        entry.1.push((im.image_id.clone(), im.severity.value));
    }

    let mut differences = Vec::new();
    let mut skipped = 0;
    for (pid, (_, scores)) in &patients {
        if scores.len() < 2 {
            skipped += 1;
            continue;
        }
        let mut d = select_max_diff_pair(pid, scores)?;
        if settings.pair_mean == PairMeanPolicy::AllImages {
            use_all_image_mean(&mut d, scores);
        }
        differences.push(d);
    }
    apply_sign_policy(&mut differences, settings.signed_policy, settings.seed);

    let loa = limits_of_agreement(&differences, range_max, settings.min_patients)?;
    let loa_ci = bootstrap_metric(
        "loa_width_fraction",
        &differences,
        |sample: &[&PatientPairDifference]| {
            let values: Vec<f64> = sample.iter().map(|d| d.difference).collect();
            loa_from_differences(&values, range_max).map(|l| l.width_fraction)
        },
        settings.bootstrap_iterations,
        settings.seed,
        settings.ci_method,
    )?;

    let units: Vec<&Vec<(usize, usize)>> = patients.values().map(|(pairs, _)| pairs).collect();
    let correct: usize = units
        .iter()
        .flat_map(|u| u.iter())
        .filter(|(p, t)| p == t)
        .count();
    let accuracy = correct as f64 / images.len() as f64;
    let accuracy_ci = bootstrap_metric(
        "accuracy",
        &units,
        |sample: &[&&Vec<(usize, usize)>]| {
            let (hit, total) = sample.iter().fold((0usize, 0usize), |(h, t), u| {
                (h + u.iter().filter(|(p, t)| p == t).count(), t + u.len())
            });
            if total == 0 {
                Err("empty resample")
            } else {
                Ok(hit as f64 / total as f64)
            }
        },
        settings.bootstrap_iterations,
        settings.seed,
        settings.ci_method,
    )?;

    let values: Vec<f64> = differences.iter().map(|d| d.difference).collect();
    let normality = normality_gate(&values, settings.alpha);
    let loa_parametric = if normality.verdict == NormalityVerdict::Normal {
        parametric_loa(&values, range_max)
    } else {
        None
    };

    let mc_counts: Vec<usize> = images
        .iter()
        .map(|i| i.mc_samples)
        .filter(|&n| n > 0)
        .collect();
    let mc_samples_per_image = match mc_counts.first() {
        Some(&n) if mc_counts.iter().all(|&m| m == n) && mc_counts.len() == images.len() => Some(n),
        _ => None,
    };

    let report = RepeatabilityReport {
        schema_version: SCHEMA_VERSION,
        toolkit_version: crate::TOOLKIT_VERSION.to_string(),
        model_label: settings.model_label.clone(),
        model_kind: kind,
        n_records: records.len(),
        n_images: images.len(),
        n_patients: patients.len(),
        n_paired_patients: differences.len(),
        skipped_single_image_patients: skipped,
        mc_aggregated_images: mc_counts.len(),
        mc_samples_per_image,
        clamped_scores: images.iter().filter(|i| i.severity.clamped).count(),
        loa,
        loa_parametric,
        loa_ci,
        accuracy,
        accuracy_ci,
        normality,
        small_cohort_warning: differences.len() < settings.min_patients,
        comparison_procedure: COMPARISON_PROCEDURE.to_string(),
        config: settings.clone(),
        seed: settings.seed,
    };
    Ok(Evaluation {
        report,
        differences,
        images,
    })
}
