use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use dance_core::data::DataError;
use dance_core::graph::GraphError;
use dance_core::loss::LossError;
use dance_core::oracle::OracleError;
use dance_core::search::SearchError;
use dance_core::structlearn::LearnError;
use serde::Serialize;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

/// Error surfaced to HTTP clients. Internal errors are logged with an
/// incident id and only the id is returned.
#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("{message}")]
    Validation { message: String, fields: Vec<FieldError> },
    #[error("unknown {kind} `{id}`")]
    NotFound { kind: &'static str, id: String },
    #[error("{0}")]
    Conflict(String),
    #[error("request exceeded the {0} s time limit")]
    Timeout(u64),
    #[error("internal error: {0}")]
    Internal(String),
}

impl ApiError {
    pub fn field(field: &str, message: impl Into<String>) -> Self {
        let message = message.into();
        ApiError::Validation {
            message: message.clone(),
            fields: vec![FieldError { field: field.to_string(), message }],
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::Validation { .. } => StatusCode::BAD_REQUEST,
            ApiError::NotFound { .. } => StatusCode::NOT_FOUND,
            ApiError::Conflict(_) => StatusCode::CONFLICT,
            ApiError::Timeout(_) => StatusCode::GATEWAY_TIMEOUT,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

#[derive(Serialize)]
struct Body<'a> {
    error: Detail<'a>,
}

#[derive(Serialize)]
struct Detail<'a> {
    code: &'static str,
    message: String,
    #[serde(skip_serializing_if = "<[FieldError]>::is_empty")]
    fields: &'a [FieldError],
    #[serde(skip_serializing_if = "Option::is_none")]
    incident: Option<String>,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = self.status();
        let (code, fields, incident) = match &self {
            ApiError::Validation { fields, .. } => ("validation", fields.as_slice(), None),
            ApiError::NotFound { .. } => ("not_found", &[][..], None),
            ApiError::Conflict(_) => ("conflict", &[][..], None),
            ApiError::Timeout(_) => ("timeout", &[][..], None),
            ApiError::Internal(detail) => {
                let id = uuid::Uuid::new_v4().to_string();
                log::error!("incident {id}: {detail}");
                ("internal", &[][..], Some(id))
            }
        };
        let message = match &self {
            ApiError::Internal(_) => "internal error".to_string(),
            other => other.to_string(),
        };
        let body = Body { error: Detail { code, message, fields, incident } };
        (status, Json(body)).into_response()
    }
}

impl From<DataError> for ApiError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Io(_) => ApiError::Internal(e.to_string()),
            DataError::DimensionMismatch { .. } => ApiError::field("instance", e.to_string()),
            DataError::MissingTarget(_) => ApiError::field("target", e.to_string()),
            DataError::UnknownOverride(_) | DataError::InvalidSchema { .. } => ApiError::field("schema", e.to_string()),
            _ => ApiError::field("file", e.to_string()),
        }
    }
}

impl From<GraphError> for ApiError {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::DimensionMismatch { .. } | GraphError::NodeSetMismatch => ApiError::Conflict(e.to_string()),
            _ => ApiError::field("graph", e.to_string()),
        }
    }
}

impl From<OracleError> for ApiError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::SingleClass => ApiError::field("dataset_id", e.to_string()),
            OracleError::DimensionMismatch { .. } => ApiError::Conflict(e.to_string()),
            OracleError::Data(d) => d.into(),
            _ => ApiError::Internal(e.to_string()),
        }
    }
}

impl From<LearnError> for ApiError {
    fn from(e: LearnError) -> Self {
        match e {
            LearnError::Graph(g) => g.into(),
            LearnError::Data(d) => d.into(),
            other => ApiError::field("params", other.to_string()),
        }
    }
}

impl From<SearchError> for ApiError {
    fn from(e: SearchError) -> Self {
        match e {
            SearchError::EmptySearchSpace => ApiError::field("locks", e.to_string()),
            SearchError::UnknownFeature(_) => ApiError::field("locks", e.to_string()),
            SearchError::InvalidRequest(_) | SearchError::Tpe(_) => ApiError::field("request", e.to_string()),
            SearchError::Loss(LossError::DesiredOutOfRange { .. }) => ApiError::field("desired", e.to_string()),
            SearchError::Loss(LossError::Graph(g)) => g.into(),
            SearchError::Loss(LossError::Oracle(o)) => o.into(),
            SearchError::Loss(LossError::DimensionMismatch(..)) => ApiError::field("feature_weights", e.to_string()),
            SearchError::Loss(l) => ApiError::field("weights", l.to_string()),
            SearchError::Data(d) => d.into(),
            SearchError::Graph(g) => g.into(),
            SearchError::Oracle(o) => o.into(),
        }
    }
}
