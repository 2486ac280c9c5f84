//! Benchmark harness: synthetic data, scorers, metrics, experiments and
//! the checks behind `topk verify`.

pub mod experiment;
pub mod metrics;
pub mod scorers;
pub mod synthetic;
pub mod verify;

use thiserror::Error;

use crate::bandit::QueryError;
use crate::histogram::HistogramError;
use crate::index::IndexError;
use crate::oracle::OracleError;
use crate::plugin::PluginError;
use crate::topk::ValueError;

pub use experiment::{
    run_experiment, Algorithm, CsvSink, ExperimentConfig, ExperimentSummary, MetricRow,
    PreparedIndex, CSV_HEADER,
};
pub use metrics::{precision_at_k, GroundTruth, GroundTruthCache};
pub use scorers::{DatasetScorer, ExternalScorer, ScorerKind};
pub use synthetic::{gen_synthetic, Dataset, Record, SyntheticSpec};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("dataset: {0}")]
    Dataset(String),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Plugin(#[from] PluginError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Histogram(#[from] HistogramError),
    #[error(transparent)]
    Value(#[from] ValueError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
