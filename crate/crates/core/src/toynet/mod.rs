//! Small dropout MLP, synthetic test-retest cohort and MC-dropout inference.

pub mod cohort;
pub mod demo;
pub mod net;
pub mod train;

use rayon::prelude::*;
use thiserror::Error;

use crate::mc::{AggregateError, MCSampleSet};
use crate::rng;
use crate::types::ModelKind;

pub use cohort::{generate_cohort, CohortConfig, SyntheticCohort, SyntheticPatient};
pub use demo::{run_demo, DemoConfig, DemoOutput};
pub use net::{DropoutMode, Example, NetConfig, Target, ToyNet};
pub use train::{train, LossCurve, TrainConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetError {
    #[error("invalid network config: {0}")]
    InvalidConfig(String),
    #[error("input has width {got}, network expects {expected}")]
    InputWidth { expected: usize, got: usize },
    #[error("target {target} does not fit a {kind} head")]
    TargetMismatch { kind: ModelKind, target: String },
    #[error("empty batch")]
    EmptyBatch,
    #[error("training diverged in epoch {epoch} (loss {loss})")]
    Divergence { epoch: usize, loss: f64 },
    #[error("need at least one MC sample")]
    NoSamples,
    #[error("{0}")]
    Aggregate(#[from] AggregateError),
    #[error("invalid cohort config: {0}")]
    InvalidCohort(String),
}

/// `n` sampled forward passes of one input. Sample `i` uses the dropout mask
/// seeded by `rng::derive_seed(seed, i)`.
pub fn mc_predict(
    net: &ToyNet,
    x: &[f64],
    n: usize,
    seed: u64,
    patient_id: &str,
    image_id: &str,
) -> Result<MCSampleSet, NetError> {
    if n == 0 {
        return Err(NetError::NoSamples);
    }
    let samples = (0..n)
        .into_par_iter()
        .map(|i| net.forward(x, DropoutMode::Sample(rng::derive_seed(seed, i as u64))))
        .collect::<Result<Vec<_>, _>>()?;
    // multi-class heads emit logits, so samples are never probabilities
    Ok(MCSampleSet::new(
        patient_id,
        image_id,
        net.kind(),
        false,
        samples,
    )?)
}
