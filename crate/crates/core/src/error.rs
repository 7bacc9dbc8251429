use thiserror::Error;

use crate::io::IoError;
use crate::mc::AggregateError;
use crate::repeatability::RepeatabilityError;
use crate::severity::ScoreError;
use crate::stats::StatsError;
use crate::toynet::NetError;
use crate::types::TypeError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Crate-level error. Each variant names the module the failure came from.
#[derive(Debug, Error)]
pub enum Error {
    #[error("types: {0}")]
    Types(#[from] TypeError),
    #[error("severity scoring: {0}")]
    Score(#[from] ScoreError),
    #[error("mc aggregation: {0}")]
    Aggregate(#[from] AggregateError),
    #[error("repeatability: {0}")]
    Repeatability(#[from] RepeatabilityError),
    #[error("statistics: {0}")]
    Stats(#[from] StatsError),
    #[error("toynet: {0}")]
    Net(#[from] NetError),
    #[error("io: {0}")]
    Io(#[from] IoError),
    #[error("config: {0}")]
    Config(String),
    #[error("evaluate: {0}")]
    Evaluate(String),
}
