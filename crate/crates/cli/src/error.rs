use dance_core::data::DataError;
use dance_core::evalbench::EvalError;
use dance_core::graph::GraphError;
use dance_core::loss::LossError;
use dance_core::oracle::OracleError;
use dance_core::search::SearchError;
use dance_core::structlearn::LearnError;

/// Failure classes of the exit-code contract.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    pub fn context(self, what: &str) -> Self {
        match self {
            CliError::Usage(m) => CliError::Usage(format!("{what}: {m}")),
            CliError::Data(m) => CliError::Data(format!("{what}: {m}")),
            CliError::Runtime(m) => CliError::Runtime(format!("{what}: {m}")),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<LearnError> for CliError {
    fn from(e: LearnError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::SingleClass
            | OracleError::DimensionMismatch { .. }
            | OracleError::Persist(_)
            | OracleError::Data(_) => {
                CliError::Data(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<SearchError> for CliError {
    fn from(e: SearchError) -> Self {
        match e {
            SearchError::InvalidRequest(_) => CliError::Usage(e.to_string()),
            SearchError::Loss(LossError::Oracle(o)) | SearchError::Oracle(o) => o.into(),
            SearchError::Tpe(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Adapter(_) => CliError::Usage(e.to_string()),
            EvalError::Data(_) | EvalError::Degenerate(_) | EvalError::Io(_) | EvalError::Graph(_) | EvalError::Learn(_) => {
                CliError::Data(e.to_string())
            }
            EvalError::Search(s) => s.into(),
            EvalError::Oracle(o) => o.into(),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}
