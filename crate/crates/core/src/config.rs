//! TOML configuration.
//!
//! ```toml
//! seed = 7
//! alpha = 0.05
//! mc_samples = 50                  # demo: N per image; evaluate: first N used
//! signed_policy = "stable-order"   # or "random-seeded"
//!
//! [evaluate]
//! bootstrap_iterations = 500
//! ci_method = "percentile"         # or "t-based"
//! min_patients = 20
//! pair_mean = "selected-pair"      # or "all-images"
//! ordinal_decode = { rule = "count-above", threshold = 0.5 }
//!
//! [demo]
//! hidden = [64, 64]
//! dropout_rate = 0.2
//!
//! [demo.cohort]
//! num_classes = 3
//! sigma_img = 0.4
//!
//! [demo.train]
//! epochs = 20
//! learning_rate = 0.05
//! ```
//!
//! Every key is optional; unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::repeatability::{PairMeanPolicy, SignedPolicy, DEFAULT_MIN_PATIENTS};
use crate::severity::OrdinalDecode;
use crate::stats::bootstrap::{CiMethod, DEFAULT_ITERATIONS};
use crate::toynet::DemoConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub alpha: f64,
    pub mc_samples: Option<usize>,
    pub signed_policy: SignedPolicy,
    pub evaluate: EvaluateSection,
    pub demo: DemoConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 0,
            alpha: 0.05,
            mc_samples: None,
            signed_policy: SignedPolicy::default(),
            evaluate: EvaluateSection::default(),
            demo: DemoConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub bootstrap_iterations: usize,
    pub ci_method: CiMethod,
    pub min_patients: usize,
    pub pair_mean: PairMeanPolicy,
    pub ordinal_decode: OrdinalDecode,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        EvaluateSection {
            bootstrap_iterations: DEFAULT_ITERATIONS,
            ci_method: CiMethod::default(),
            min_patients: DEFAULT_MIN_PATIENTS,
            pair_mean: PairMeanPolicy::default(),
            ordinal_decode: OrdinalDecode::default(),
        }
    }
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Config::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!(
                "alpha {} outside (0, 1)",
                self.alpha
            )));
        }
        if self.mc_samples == Some(0) {
            return Err(Error::Config("mc_samples must be at least 1".into()));
        }
        if self.evaluate.bootstrap_iterations == 0 {
            return Err(Error::Config(
                "bootstrap_iterations must be at least 1".into(),
            ));
        }
        if let OrdinalDecode::CountAbove { threshold } = self.evaluate.ordinal_decode {
            if !(0.0..=1.0).contains(&threshold) {
                return Err(Error::Config(format!(
                    "ordinal threshold {threshold} outside [0, 1]"
                )));
            }
        }
        self.demo.validate().map_err(Error::Config)
    }
}
