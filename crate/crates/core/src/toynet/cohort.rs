//! Synthetic patients with repeated noisy "images" of one latent severity.
//!
//! Each patient draws `u ~ U[0, 1)` and gets class `floor(u * k)`. Feature
//! `d` of an image is `tanh(s_d * (u - c_d)) + sigma_img * e` with a fixed
//! random slope `s_d`, location `c_d` and fresh standard normal noise `e`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::NetError;
use crate::rng::{self, tags};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortConfig {
    pub num_classes: usize,
    pub train_patients: usize,
    pub val_patients: usize,
    pub test_patients: usize,
    pub images_per_patient: usize,
    pub input_dim: usize,
    pub sigma_img: f64,
}

impl Default for CohortConfig {
    fn default() -> Self {
        CohortConfig {
            num_classes: 3,
            train_patients: 500,
            val_patients: 75,
            test_patients: 200,
            images_per_patient: 2,
            input_dim: 16,
            sigma_img: 0.4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPatient {
    pub patient_id: String,
    pub latent: f64,
    pub true_class: usize,
    pub images: Vec<Vec<f64>>,
}

impl SyntheticPatient {
    pub fn image_id(index: usize) -> String {
        format!("img{index}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCohort {
    pub num_classes: usize,
    pub sigma_img: f64,
    pub seed: u64,
    pub train: Vec<SyntheticPatient>,
    pub val: Vec<SyntheticPatient>,
    pub test: Vec<SyntheticPatient>,
}

struct Embedding {
    slope: Vec<f64>,
    centre: Vec<f64>,
}

impl Embedding {
    fn apply(&self, u: f64) -> Vec<f64> {
        self.slope
            .iter()
            .zip(&self.centre)
            .map(|(s, c)| (s * (u - c)).tanh())
            .collect()
    }
}

/// Patient-level train/val/test splits of one seeded cohort.
pub fn generate_cohort(config: &CohortConfig, seed: u64) -> Result<SyntheticCohort, NetError> {
    if config.num_classes < 2 {
        return Err(NetError::InvalidCohort("need at least 2 classes".into()));
    }
    if config.images_per_patient < 2 {
        return Err(NetError::InvalidCohort(
            "need at least 2 images per patient".into(),
        ));
    }
    if config.input_dim == 0 {
        return Err(NetError::InvalidCohort("input_dim must be positive".into()));
    }
    if !config.sigma_img.is_finite() || config.sigma_img < 0.0 {
        return Err(NetError::InvalidCohort(format!(
            "sigma_img {} must be finite and non-negative",
            config.sigma_img
        )));
    }
    let mut rng = rng::stream(seed, tags::COHORT);
    let mut slope = Vec::with_capacity(config.input_dim);
    let mut centre = Vec::with_capacity(config.input_dim);
    for _ in 0..config.input_dim {
        let magnitude = rng.random_range(2.0..6.0);
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        slope.push(sign * magnitude);
        centre.push(rng.random::<f64>());
    }
    let embedding = Embedding { slope, centre };

    let k = config.num_classes;
    let split = |prefix: &str, count: usize, index: u64| {
        let mut rng = rng::stream(seed, tags::COHORT + index);
        (0..count)
            .map(|p| {
                let u: f64 = rng.random();
                let true_class = ((u * k as f64) as usize).min(k - 1);
                let clean = embedding.apply(u);
                let images = (0..config.images_per_patient)
                    .map(|_| {
                        clean
                            .iter()
                            .map(|&g| {
                                let e: f64 = StandardNormal.sample(&mut rng);
                                g + config.sigma_img * e
                            })
                            .collect()
                    })
                    .collect();
                SyntheticPatient {
                    patient_id: format!("{prefix}{p:04}"),
                    latent: u,
                    true_class,
                    images,
                }
            })
            .collect::<Vec<_>>()
    };
    let train = split("train", config.train_patients, 1);
    let val = split("val", config.val_patients, 2);
    let test = split("test", config.test_patients, 3);
    Ok(SyntheticCohort {
        num_classes: k,
        sigma_img: config.sigma_img,
        seed,
        train,
        val,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CohortConfig {
        CohortConfig {
            train_patients: 30,
            val_patients: 5,
            test_patients: 10,
            ..CohortConfig::default()
        }
    }

    #[test]
    fn same_seed_same_cohort() {
        let a = generate_cohort(&small(), 3).unwrap();
        assert_eq!(a, generate_cohort(&small(), 3).unwrap());
        assert_ne!(a.train, generate_cohort(&small(), 4).unwrap().train);
    }

    #[test]
    fn labels_follow_latent_bins() {
        let c = generate_cohort(&small(), 11).unwrap();
        for p in c.train.iter().chain(&c.val).chain(&c.test) {
            assert_eq!(p.true_class, (p.latent * 3.0).floor() as usize);
            assert_eq!(p.images.len(), 2);
            assert!(p.images.iter().all(|im| im.len() == 16));
        }
        assert_eq!((c.train.len(), c.val.len(), c.test.len()), (30, 5, 10));
        assert_eq!(c.test[3].patient_id, "test0003");
    }

    #[test]
    fn noiseless_images_are_identical() {
        let cfg = CohortConfig {
            sigma_img: 0.0,
            ..small()
        };
        let c = generate_cohort(&cfg, 1).unwrap();
        assert!(c.test.iter().all(|p| p.images[0] == p.images[1]));
    }

    #[test]
    fn rejects_bad_configs() {
        for cfg in [
            CohortConfig {
                num_classes: 1,
                ..small()
            },
            CohortConfig {
                images_per_patient: 1,
                ..small()
            },
            CohortConfig {
                sigma_img: -1.0,
                ..small()
            },
            CohortConfig {
                input_dim: 0,
                ..small()
            },
        ] {
            assert!(generate_cohort(&cfg, 1).is_err());
        }
    }
}
