//! HTTP facade over `dance-core`: upload datasets, fit oracles, learn and
//! merge relationship graphs, and request counterfactual explanations.
//!
//! Every artifact is immutable and addressed by a content hash, so the same
//! upload or fit always yields the same id. All routes live under `/v1`.

mod error;
mod routes;
mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::DefaultBodyLimit;
use axum::http::HeaderValue;
use axum::routing::{get, post};
use axum::Router;
use tower_http::cors::{Any, CorsLayer};

pub use error::{ApiError, FieldError};
pub use routes::AppState;
pub use store::{content_id, Artifact, ArtifactStore, DatasetArtifact, GraphArtifact, ModelArtifact};

const MAX_UPLOAD_BYTES: usize = 256 * 1024 * 1024;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("artifact directory: {0}")]
    Store(std::io::Error),
    #[error("invalid CORS origin `{0}`")]
    Origin(String),
    #[error("server: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub addr: SocketAddr,
    /// Artifacts are persisted here and reloaded on start; `None` keeps them in memory.
    pub artifact_dir: Option<PathBuf>,
    pub explain_timeout: Duration,
    /// Allowed browser origin; `None` allows any.
    pub cors_origin: Option<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            addr: SocketAddr::from(([127, 0, 0, 1], 8080)),
            artifact_dir: None,
            explain_timeout: Duration::from_secs(120),
            cors_origin: None,
        }
    }
}

impl ServiceConfig {
    pub fn state(&self) -> Result<AppState, ServiceError> {
        let store = match &self.artifact_dir {
            Some(dir) => ArtifactStore::open(dir).map_err(ServiceError::Store)?,
            None => ArtifactStore::in_memory(),
        };
        Ok(AppState { store, explain_timeout: self.explain_timeout })
    }

    fn cors(&self) -> Result<CorsLayer, ServiceError> {
        let layer = CorsLayer::new().allow_methods(Any).allow_headers(Any);
        Ok(match &self.cors_origin {
            None => layer.allow_origin(Any),
            Some(o) => layer.allow_origin(HeaderValue::from_str(o).map_err(|_| ServiceError::Origin(o.clone()))?),
        })
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let v1 = Router::new()
        .route("/health", get(routes::health))
        .route("/datasets", post(routes::upload_dataset))
        .route("/datasets/{id}", get(routes::get_dataset))
        .route("/models", post(routes::fit_model))
        .route("/models/{id}", get(routes::get_model))
        .route("/graphs/learn", post(routes::learn))
        .route("/graphs/merge", post(routes::merge))
        .route("/graphs/{id}", get(routes::get_graph))
        .route("/explain", post(routes::explain));
    Router::new()
        .nest("/v1", v1)
        .fallback(|| async { ApiError::NotFound { kind: "route", id: String::new() } })
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .with_state(state)
}

/// Binds `config.addr` and serves until ctrl-c.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let app = router(Arc::new(config.state()?)).layer(config.cors()?);
    let listener = tokio::net::TcpListener::bind(config.addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            if let Err(e) = tokio::signal::ctrl_c().await {
                log::warn!("ctrl-c handler unavailable: {e}");
                std::future::pending::<()>().await;
            }
        })
        .await?;
    Ok(())
}
