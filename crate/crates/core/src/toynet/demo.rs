//! Four heads trained on one synthetic cohort, each evaluated with and
//! without MC dropout on the held-out patients.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cohort::{generate_cohort, CohortConfig, SyntheticPatient};
use super::mc_predict;
use super::net::{DropoutMode, NetConfig, ToyNet};
use super::train::{examples_for, head_label, train, LossCurve, TrainConfig};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::evaluate::{evaluate_records, EvalSettings, Evaluation};
use crate::io::IoError;
use crate::mc::DEFAULT_MC_SAMPLES;
use crate::plot::bland_altman_svg;
use crate::report::to_canonical_json;
use crate::rng::{self, tags};
use crate::stats::{compare_models, SignificanceVerdict};
use crate::types::{LabeledExample, ModelFamily, ModelKind, PredictionRecord};

/// Which dropout masks MC inference uses across images.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskPolicy {
    /// The same `N` masks for every image, so the MC prediction is a fixed
    /// function of the input.
    #[default]
    Shared,
    /// Fresh masks for every image.
    PerImage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemoConfig {
    pub hidden: Vec<usize>,
    pub dropout_rate: f64,
    pub mc_masks: MaskPolicy,
    pub cohort: CohortConfig,
    pub train: TrainConfig,
}

impl Default for DemoConfig {
    fn default() -> Self {
        DemoConfig {
            hidden: vec![64, 64],
            dropout_rate: 0.2,
            mc_masks: MaskPolicy::default(),
            cohort: CohortConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl DemoConfig {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err("demo.hidden needs at least one positive width".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(format!(
                "demo.dropout_rate {} outside [0, 1)",
                self.dropout_rate
            ));
        }
        let c = &self.cohort;
        if c.num_classes < 2 || c.images_per_patient < 2 || c.input_dim == 0 {
            return Err(
                "demo.cohort needs num_classes >= 2, images_per_patient >= 2, input_dim >= 1"
                    .into(),
            );
        }
        if c.train_patients == 0 || c.test_patients < 2 {
            return Err("demo.cohort needs train patients and at least 2 test patients".into());
        }
        if !c.sigma_img.is_finite() || c.sigma_img < 0.0 {
            return Err(format!("demo.cohort.sigma_img {} invalid", c.sigma_img));
        }
        if self.train.batch_size == 0
            || self.train.learning_rate.is_nan()
            || self.train.learning_rate < 0.0
        {
            return Err("demo.train needs batch_size >= 1 and learning_rate >= 0".into());
        }
        Ok(())
    }
}

pub const HEADS: [ModelFamily; 4] = [
    ModelFamily::Binary,
    ModelFamily::MultiClass,
    ModelFamily::Ordinal,
    ModelFamily::Regression,
];

#[derive(Debug, Clone, PartialEq)]
pub struct DemoModel {
    pub label: String,
    pub head: ModelFamily,
    pub mc: bool,
    pub evaluation: Evaluation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadTraining {
    pub head: ModelFamily,
    pub loss: LossCurve,
}

/// One row of the summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub label: String,
    pub head: ModelFamily,
    pub mc: bool,
    pub width_fraction: f64,
    pub width_fraction_ci: [f64; 2],
    pub accuracy: f64,
    pub accuracy_ci: [f64; 2],
}

/// MC versus non-MC change of one head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadImprovement {
    pub head: ModelFamily,
    /// `(non-MC - MC) * 100`, in points of the score range.
    pub width_fraction_points: f64,
    /// `(non-MC - MC) / non-MC * 100`.
    pub width_relative_percent: f64,
    pub accuracy_change: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoSummary {
    pub seed: u64,
    pub mc_samples: usize,
    pub hyperparameter_note: String,
    pub config: Config,
    pub rows: Vec<SummaryRow>,
    pub improvements: Vec<HeadImprovement>,
    /// Means over the binary, multi-class and ordinal heads.
    pub mean_classification_width_points: f64,
    pub mean_classification_width_relative_percent: f64,
    pub training: Vec<HeadTraining>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoOutput {
    pub models: Vec<DemoModel>,
    pub verdicts: Vec<SignificanceVerdict>,
    pub summary: DemoSummary,
}

fn model_kind(head: ModelFamily, k: usize) -> Result<ModelKind> {
    Ok(match head {
        ModelFamily::Binary => ModelKind::binary(),
        other => ModelKind::new(other, k)?,
    })
}

fn labels_for(kind: ModelKind, patients: &[SyntheticPatient], k: usize) -> Vec<LabeledExample> {
    patients
        .iter()
        .flat_map(|p| {
            (0..p.images.len()).map(move |i| LabeledExample {
                patient_id: p.patient_id.clone(),
                image_id: SyntheticPatient::image_id(i),
                true_class: head_label(kind, p.true_class, k),
            })
        })
        .collect()
}

fn deterministic_records(
    net: &ToyNet,
    patients: &[SyntheticPatient],
) -> Result<Vec<PredictionRecord>> {
    let kind = net.kind();
    let mut out = Vec::new();
    for p in patients {
        for (i, x) in p.images.iter().enumerate() {
            let mut r = PredictionRecord::deterministic(
                p.patient_id.clone(),
                SyntheticPatient::image_id(i),
                kind,
                net.forward(x, DropoutMode::Off)?,
            );
            r.is_probability = false;
            out.push(r);
        }
    }
    Ok(out)
}

fn mc_records(
    net: &ToyNet,
    patients: &[SyntheticPatient],
    n: usize,
    seed: u64,
    masks: MaskPolicy,
) -> Result<Vec<PredictionRecord>> {
    let kind = net.kind();
    let mut out = Vec::new();
    let mut image_index = 0u64;
    for p in patients {
        for (i, x) in p.images.iter().enumerate() {
            let image_seed = match masks {
                MaskPolicy::Shared => seed,
                MaskPolicy::PerImage => rng::derive_seed(seed, image_index),
            };
            image_index += 1;
            let image_id = SyntheticPatient::image_id(i);
            let set = mc_predict(net, x, n, image_seed, &p.patient_id, &image_id)?;
            for (s, outputs) in set.samples().iter().enumerate() {
                out.push(PredictionRecord {
                    patient_id: p.patient_id.clone(),
                    image_id: image_id.clone(),
                    mc_sample: Some(s as u32),
                    outputs: outputs.clone(),
                    kind,
                    is_probability: false,
                });
            }
        }
    }
    Ok(out)
}

/// Trains the four heads and evaluates the eight models.
pub fn run_demo(config: &Config) -> Result<DemoOutput> {
    config.validate()?;
    let demo = &config.demo;
    let seed = config.seed;
    let k = demo.cohort.num_classes;
    let n_mc = config.mc_samples.unwrap_or(DEFAULT_MC_SAMPLES);
    let cohort = generate_cohort(&demo.cohort, rng::derive_seed(seed, tags::COHORT))?;

    let trained: Vec<(ModelFamily, ToyNet, LossCurve)> = HEADS
        .par_iter()
        .enumerate()
        .map(|(h, &head)| -> Result<_> {
            let kind = model_kind(head, k)?;
            let mut net = ToyNet::new(
                NetConfig {
                    input_dim: demo.cohort.input_dim,
                    hidden: demo.hidden.clone(),
                    dropout_rate: demo.dropout_rate,
                    kind,
                },
                rng::derive_seed(seed, tags::INIT + h as u64),
            )?;
            let train_set = examples_for(kind, &cohort.train, k)?;
            let val_set = examples_for(kind, &cohort.val, k)?;
            let curve = train(
                &mut net,
                &train_set,
                &val_set,
                &demo.train,
                rng::derive_seed(seed, tags::TRAIN + h as u64),
            )?;
            Ok((head, net, curve))
        })
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, bool)> = (0..trained.len())
        .flat_map(|h| [(h, false), (h, true)])
        .collect();
    let models: Vec<DemoModel> = jobs
        .par_iter()
        .map(|&(h, mc)| -> Result<DemoModel> {
            let (head, net, _) = &trained[h];
            let records = if mc {
                let mc_seed = rng::derive_seed(seed, tags::MC + h as u64);
                mc_records(net, &cohort.test, n_mc, mc_seed, demo.mc_masks)?
            } else {
                deterministic_records(net, &cohort.test)?
            };
            let labels = labels_for(net.kind(), &cohort.test, k);
            let label = if mc {
                format!("{}-mc", head.as_str())
            } else {
                head.as_str().to_string()
            };
            let mut settings = EvalSettings::from_config(config, &label);
            settings.mc_samples = None;
            let evaluation = evaluate_records(&records, &labels, &settings)?;
            Ok(DemoModel {
                label,
                head: *head,
                mc,
                evaluation,
            })
        })
        .collect::<Result<_>>()?;

    let mut verdicts = Vec::new();
    let mut improvements = Vec::new();
    for pair in models.chunks(2) {
        let (base, mc) = (&pair[0], &pair[1]);
        let (rb, rm) = (&base.evaluation.report, &mc.evaluation.report);
        verdicts.push(compare_models(
            "loa_width_fraction",
            &base.label,
            &mc.label,
            &rb.loa_ci.replicates,
            &rm.loa_ci.replicates,
            config.alpha,
        )?);
        verdicts.push(compare_models(
            "accuracy",
            &base.label,
            &mc.label,
            &rb.accuracy_ci.replicates,
            &rm.accuracy_ci.replicates,
            config.alpha,
        )?);
        let wb = rb.loa.width_fraction;
        let wm = rm.loa.width_fraction;
        improvements.push(HeadImprovement {
            head: base.head,
            width_fraction_points: (wb - wm) * 100.0,
            width_relative_percent: if wb > 0.0 {
                (wb - wm) / wb * 100.0
            } else {
                0.0
            },
            accuracy_change: rm.accuracy - rb.accuracy,
        });
    }
    let classification: Vec<&HeadImprovement> = improvements
        .iter()
        .filter(|i| i.head != ModelFamily::Regression)
        .collect();
    let mean = |f: fn(&HeadImprovement) -> f64| {
        classification.iter().map(|i| f(i)).sum::<f64>() / classification.len().max(1) as f64
    };

    let rows = models
        .iter()
        .map(|m| {
            let r = &m.evaluation.report;
            SummaryRow {
                label: m.label.clone(),
                head: m.head,
                mc: m.mc,
                width_fraction: r.loa.width_fraction,
                width_fraction_ci: [r.loa_ci.ci_low, r.loa_ci.ci_high],
                accuracy: r.accuracy,
                accuracy_ci: [r.accuracy_ci.ci_low, r.accuracy_ci.ci_high],
            }
        })
        .collect();
    let mut echoed = config.clone();
    echoed.mc_samples = Some(n_mc);
    let summary = DemoSummary {
        seed,
        mc_samples: n_mc,
        hyperparameter_note: "network size, dropout rate, noise scale, optimiser, learning rate, \
                              epochs and batch size are toolkit defaults chosen for this \
                              demonstration, not values taken from a published study"
            .to_string(),
        config: echoed,
        rows,
        mean_classification_width_points: mean(|i| i.width_fraction_points),
        mean_classification_width_relative_percent: mean(|i| i.width_relative_percent),
        improvements,
        training: trained
            .into_iter()
            .map(|(head, _, loss)| HeadTraining { head, loss })
            .collect(),
    };
    Ok(DemoOutput {
        models,
        verdicts,
        summary,
    })
}

fn write(path: PathBuf, text: &str) -> Result<PathBuf> {
    std::fs::write(&path, text).map_err(|source| IoError::Write {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

fn canonical<T: Serialize>(value: &T) -> Result<String> {
    to_canonical_json(value).map_err(|e| Error::Evaluate(e.to_string()))
}

impl DemoOutput {
    /// Markdown table of the eight models, `mean [low, high]`.
    pub fn table(&self) -> String {
        let mut s = String::from(
            "| model | LoA width fraction (95% CI) | accuracy (95% CI) |\n|---|---|---|\n",
        );
        for r in &self.summary.rows {
            s.push_str(&format!(
                "| {} | {:.3} [{:.3}, {:.3}] | {:.3} [{:.3}, {:.3}] |\n",
                r.label,
                r.width_fraction,
                r.width_fraction_ci[0],
                r.width_fraction_ci[1],
                r.accuracy,
                r.accuracy_ci[0],
                r.accuracy_ci[1]
            ));
        }
        s
    }

    /// Writes one report and one Bland-Altman plot per model, the
    /// significance verdicts and the summary into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|source| IoError::Write {
            path: dir.to_path_buf(),
            source,
        })?;
        let mut written = Vec::new();
        for m in &self.models {
            let report = &m.evaluation.report;
            let json = report
                .to_json()
                .map_err(|e| Error::Evaluate(e.to_string()))?;
            written.push(write(dir.join(format!("{}.json", m.label)), &json)?);
            let svg = bland_altman_svg(&m.evaluation.differences, &report.loa, &m.label)?;
            written.push(write(dir.join(format!("{}.svg", m.label)), &svg)?);
        }
        written.push(write(
            dir.join("significance.json"),
            &canonical(&self.verdicts)?,
        )?);
        written.push(write(dir.join("summary.json"), &canonical(&self.summary)?)?);
        written.push(write(dir.join("summary.md"), &self.table())?);
        Ok(written)
    }
}
