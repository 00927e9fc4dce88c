//! Benchmarking of counterfactual generators: per-query metrics, ranking
//! across datasets, Friedman and Nemenyi statistics, and spider-plot area.

mod adapter;
mod bench;
mod metrics;
mod stats;

pub use adapter::{parse_adapters, AdapterQuery, DanceAdapter, ExternalAdapter, MethodAdapter};
pub use bench::{
    cd_reference, dataset_files, run_benchmark, AusEntry, BenchmarkConfig, BenchmarkReport, CdReference, CellMetrics,
    CellReport, CellStatus, CellTiming, CriticalDistance, Metric, MetricRanks, OracleChoice, PlotData, PlotPoint,
    RankTable, TimingSection, REPORT_SCHEMA_VERSION,
};
pub use metrics::{compute_metrics, MetricConfig, MetricReport};
pub use stats::{aus, average_ranks, friedman, nemenyi_cd, rank_row, AusScore, Direction, FriedmanResult};

use crate::data::DataError;
use crate::graph::GraphError;
use crate::loss::LossError;
use crate::oracle::OracleError;
use crate::search::SearchError;
use crate::structlearn::LearnError;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("adapter error: {0}")]
    Adapter(String),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error("io error: {0}")]
    Io(String),
}
