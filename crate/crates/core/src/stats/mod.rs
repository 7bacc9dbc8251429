//! Normality testing, bootstrap intervals, model comparison and accuracy.

pub mod accuracy;
pub mod bootstrap;
pub mod shapiro;
pub mod ttest;

use thiserror::Error;

pub use accuracy::{accuracy, predicted_class, regression_class, regression_thresholds};
pub use bootstrap::{bootstrap_metric, BootstrapResult, CiMethod};
pub use shapiro::{shapiro_wilk, ShapiroWilk};
pub use ttest::{compare_models, welch_t_test, SignificanceVerdict, WelchTest};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("sample size {n} outside supported range {min}..={max}")]
    SampleSize { n: usize, min: usize, max: usize },
    #[error("all values are identical")]
    ZeroVariance,
    #[error("sample contains a non-finite value")]
    NonFinite,
    #[error("need at least {needed} values, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("bootstrap needs at least one iteration")]
    NoIterations,
    #[error("metric failed: {0}")]
    Metric(String),
    #[error("{missing} of {iterations} bootstrap replicates failed (more than 10%)")]
    TooManyMissing { missing: usize, iterations: usize },
    #[error("replicate counts differ: {a} vs {b}")]
    ReplicateCountMismatch { a: usize, b: usize },
    #[error("{predictions} predictions but {labels} labels")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("distribution: {0}")]
    Distribution(String),
}
