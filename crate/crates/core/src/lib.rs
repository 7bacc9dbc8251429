//! Test-retest repeatability evaluation for probabilistic classifiers.
//!
//! The pipeline turns per-image model outputs (binary, multi-class, ordinal
//! or regression heads, optionally as Monte Carlo dropout samples) into
//! continuous severity scores, pairs images of the same patient, and reports
//! non-parametric Bland-Altman limits of agreement together with accuracy,
//! bootstrap confidence intervals and significance tests between model
//! variants.
//!
//! The [`toynet`] module contains a small from-scratch dropout network and a
//! synthetic test-retest cohort used to demonstrate end to end that Monte
//! Carlo averaging narrows the limits of agreement.

pub mod cli;
pub mod config;
pub mod error;
pub mod evaluate;
pub mod io;
pub mod mc;
pub mod plot;
pub mod repeatability;
pub mod report;
pub mod rng;
pub mod severity;
pub mod stats;
pub mod toynet;
pub mod types;

pub use error::{Error, Result};
pub use types::{LabeledExample, ModelFamily, ModelKind, PredictionRecord, SeverityScore};

/// Version string embedded in every report.
pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");
