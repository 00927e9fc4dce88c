use std::sync::Arc;
use std::time::Duration;

use axum::extract::{FromRequest, Multipart, Path, Request, State};
use axum::http::header::CONTENT_TYPE;
use axum::http::StatusCode;
use axum::Json;
use dance_core::data::{read_csv, Dataset, FeatureSpec, SchemaOverride};
use dance_core::graph::{GraphJson, GraphMode, Provenance};
use dance_core::oracle::{accuracy, fit_logistic, fit_stumps, LogisticConfig, SavedModel, StumpConfig};
use dance_core::search::{explanation_diff, generate_counterfactuals, DiffTable, ExplainRequest, ExplanationSet};
use dance_core::structlearn::{learn_graph, LearnConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::ApiError;
use crate::store::{content_id, Artifact, ArtifactStore, DatasetArtifact, GraphArtifact, ModelArtifact};

pub struct AppState {
    pub store: ArtifactStore,
    pub explain_timeout: Duration,
}

pub type Shared = Arc<AppState>;

/// `Json` whose rejections are reported as 400 validation errors.
pub struct ApiJson<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for ApiJson<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(ApiJson(v)),
            Err(rej) => Err(ApiError::field("body", rej.body_text())),
        }
    }
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::Internal(format!("worker task: {e}")))?
}

/// Overlays a partial JSON object on `T::default()`, so clients only send
/// the parameters they want to change.
fn params_or_default<T: Default + Serialize + DeserializeOwned>(params: Option<Value>) -> Result<T, ApiError> {
    let mut base = serde_json::to_value(T::default()).map_err(|e| ApiError::Internal(e.to_string()))?;
    match params {
        None | Some(Value::Null) => {}
        Some(Value::Object(over)) => {
            let Value::Object(map) = &mut base else {
                return Err(ApiError::Internal("parameter defaults are not an object".into()));
            };
            for (k, v) in over {
                if !map.contains_key(&k) {
                    return Err(ApiError::field("params", format!("unknown parameter `{k}`")));
                }
                map.insert(k, v);
            }
        }
        Some(_) => return Err(ApiError::field("params", "params must be a JSON object")),
    }
    serde_json::from_value(base).map_err(|e| ApiError::field("params", e.to_string()))
}

pub async fn health(State(st): State<Shared>) -> Json<Value> {
    Json(serde_json::json!({
        "status": "ok",
        "version": env!("CARGO_PKG_VERSION"),
        "artifacts": st.store.len(),
    }))
}

#[derive(Serialize)]
pub struct DatasetSummary {
    pub id: String,
    pub target: String,
    pub rows: usize,
    pub features: Vec<FeatureSpec>,
    pub class_labels: Vec<String>,
}

fn summarize(id: String, a: &DatasetArtifact) -> DatasetSummary {
    DatasetSummary {
        id,
        target: a.target.clone(),
        rows: a.dataset.n(),
        features: a.dataset.features.clone(),
        class_labels: a.dataset.class_labels.clone(),
    }
}

#[derive(Deserialize)]
struct JsonUpload {
    csv: String,
    #[serde(default)]
    target: Option<String>,
    #[serde(default)]
    schema: Option<Vec<SchemaOverride>>,
}

struct Upload {
    csv: Vec<u8>,
    target: String,
    schema: Option<Vec<SchemaOverride>>,
}

const DEFAULT_TARGET: &str = "target";

async fn read_multipart(mut mp: Multipart) -> Result<Upload, ApiError> {
    let mut csv = None;
    let mut target = None;
    let mut schema = None;
    while let Some(field) = mp.next_field().await.map_err(|e| ApiError::field("body", e.body_text()))? {
        let name = field.name().unwrap_or_default().to_string();
        let bytes = field.bytes().await.map_err(|e| ApiError::field(&name, e.body_text()))?;
        match name.as_str() {
            "file" | "csv" => csv = Some(bytes.to_vec()),
            "target" => {
                let t = std::str::from_utf8(&bytes).map_err(|_| ApiError::field("target", "target must be UTF-8"))?;
                target = Some(t.trim().to_string());
            }
            "schema" => {
                let parsed: Vec<SchemaOverride> =
                    serde_json::from_slice(&bytes).map_err(|e| ApiError::field("schema", e.to_string()))?;
                schema = Some(parsed);
            }
            other => log::warn!("ignoring multipart field `{other}`"),
        }
    }
    let csv = csv.ok_or_else(|| ApiError::field("file", "missing CSV file part"))?;
    Ok(Upload { csv, target: target.unwrap_or_else(|| DEFAULT_TARGET.into()), schema })
}

/// `POST /v1/datasets`: multipart (`file`, `target`, `schema`) or JSON
/// (`csv`, `target`, `schema`). Identical uploads map to the same id.
pub async fn upload_dataset(State(st): State<Shared>, req: Request) -> Result<(StatusCode, Json<DatasetSummary>), ApiError> {
    let is_multipart = req
        .headers()
        .get(CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"));
    let upload = if is_multipart {
        let mp = Multipart::from_request(req, &()).await.map_err(|e| ApiError::field("body", e.body_text()))?;
        read_multipart(mp).await?
    } else {
        let ApiJson(body) = ApiJson::<JsonUpload>::from_request(req, &()).await?;
        Upload { csv: body.csv.into_bytes(), target: body.target.unwrap_or_else(|| DEFAULT_TARGET.into()), schema: body.schema }
    };
    let schema_key = match &upload.schema {
        Some(s) => serde_json::to_vec(s).map_err(|e| ApiError::Internal(e.to_string()))?,
        None => Vec::new(),
    };
    let id = content_id("dataset", &[&upload.csv, upload.target.as_bytes(), &schema_key]);
    if let Ok(existing) = st.store.dataset(&id) {
        return Ok((StatusCode::OK, Json(summarize(id, &existing))));
    }
    let Upload { csv, target, schema } = upload;
    let artifact = blocking(move || {
        let dataset = read_csv(csv.as_slice(), &target, schema.as_deref())?;
        Ok(DatasetArtifact { target, dataset })
    })
    .await?;
    let summary = summarize(id.clone(), &artifact);
    st.store.insert(&id, Artifact::Dataset(artifact))?;
    Ok((StatusCode::CREATED, Json(summary)))
}

pub async fn get_dataset(State(st): State<Shared>, Path(id): Path<String>) -> Result<Json<DatasetSummary>, ApiError> {
    let a = st.store.dataset(&id)?;
    Ok(Json(summarize(id, &a)))
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Logistic,
    Stumps,
}

#[derive(Deserialize)]
pub struct FitBody {
    dataset_id: String,
    kind: ModelKind,
    #[serde(default)]
    params: Option<Value>,
}

#[derive(Serialize)]
pub struct ModelSummary {
    id: String,
    dataset_id: String,
    kind: ModelKind,
    training_accuracy: f64,
}

fn model_kind(m: &SavedModel) -> ModelKind {
    match m {
        SavedModel::Logistic(_) => ModelKind::Logistic,
        SavedModel::Stumps(_) => ModelKind::Stumps,
    }
}

pub async fn fit_model(
    State(st): State<Shared>,
    ApiJson(body): ApiJson<FitBody>,
) -> Result<(StatusCode, Json<ModelSummary>), ApiError> {
    let ds = st.store.dataset(&body.dataset_id)?;
    let kind = body.kind;
    let params = body.params;
    let (model, training_accuracy) = blocking(move || {
        let model = match kind {
            ModelKind::Logistic => SavedModel::Logistic(fit_logistic(&ds.dataset, &params_or_default::<LogisticConfig>(params)?)?),
            ModelKind::Stumps => SavedModel::Stumps(fit_stumps(&ds.dataset, &params_or_default::<StumpConfig>(params)?)?),
        };
        let acc = accuracy(model.as_oracle(), &ds.dataset)?;
        Ok((model, acc))
    })
    .await?;
    let bytes = serde_json::to_vec(&model).map_err(|e| ApiError::Internal(e.to_string()))?;
    let id = content_id("model", &[body.dataset_id.as_bytes(), &bytes]);
    let summary = ModelSummary { id: id.clone(), dataset_id: body.dataset_id.clone(), kind: body.kind, training_accuracy };
    st.store.insert(&id, Artifact::Model(ModelArtifact { dataset_id: body.dataset_id, training_accuracy, model }))?;
    Ok((StatusCode::CREATED, Json(summary)))
}

#[derive(Serialize)]
pub struct ModelDocument {
    id: String,
    dataset_id: String,
    kind: ModelKind,
    training_accuracy: f64,
    model: SavedModel,
}

pub async fn get_model(State(st): State<Shared>, Path(id): Path<String>) -> Result<Json<ModelDocument>, ApiError> {
    let a = st.store.model(&id)?;
    Ok(Json(ModelDocument {
        id,
        dataset_id: a.dataset_id.clone(),
        kind: model_kind(&a.model),
        training_accuracy: a.training_accuracy,
        model: a.model.clone(),
    }))
}

#[derive(Deserialize)]
pub struct LearnBody {
    dataset_id: String,
    #[serde(default)]
    mode: Option<GraphMode>,
    #[serde(default)]
    params: Option<Value>,
}

#[derive(Serialize)]
pub struct GraphDocument {
    id: String,
    dataset_id: String,
    graph: GraphJson,
}

fn store_graph(st: &AppState, a: GraphArtifact) -> Result<GraphDocument, ApiError> {
    let bytes = serde_json::to_vec(&a.graph).map_err(|e| ApiError::Internal(e.to_string()))?;
    let id = content_id("graph", &[a.dataset_id.as_bytes(), &bytes]);
    let doc = GraphDocument { id: id.clone(), dataset_id: a.dataset_id.clone(), graph: a.graph.clone() };
    st.store.insert(&id, Artifact::Graph(a))?;
    Ok(doc)
}

pub async fn learn(
    State(st): State<Shared>,
    ApiJson(body): ApiJson<LearnBody>,
) -> Result<(StatusCode, Json<GraphDocument>), ApiError> {
    let ds = st.store.dataset(&body.dataset_id)?;
    let mut cfg: LearnConfig = params_or_default(body.params)?;
    if let Some(mode) = body.mode {
        cfg.mode = mode;
    }
    let dataset_id = body.dataset_id;
    let artifact = blocking(move || {
        let learned = learn_graph(&ds.dataset, &cfg, None)?;
        Ok(GraphArtifact::new(dataset_id, cfg, &learned.graph))
    })
    .await?;
    Ok((StatusCode::CREATED, Json(store_graph(&st, artifact)?)))
}

#[derive(Deserialize)]
pub struct MergeBody {
    expert: GraphJson,
    learned_id: String,
}

/// Re-runs learning on the learned graph's dataset with the expert graph
/// merged in, so intercepts and (in CPD mode) tables match the merged
/// structure.
pub async fn merge(
    State(st): State<Shared>,
    ApiJson(body): ApiJson<MergeBody>,
) -> Result<(StatusCode, Json<GraphDocument>), ApiError> {
    let learned = st.store.graph(&body.learned_id)?;
    let ds = st.store.dataset(&learned.dataset_id)?;
    let expert = body.expert.into_graph(Provenance::Expert)?;
    check_nodes(&expert.nodes, &ds.dataset, "expert graph")?;
    let cfg = learned.config.clone();
    let dataset_id = learned.dataset_id.clone();
    let artifact = blocking(move || {
        let merged = learn_graph(&ds.dataset, &cfg, Some(&expert))?;
        Ok(GraphArtifact::new(dataset_id, cfg, &merged.graph))
    })
    .await?;
    Ok((StatusCode::CREATED, Json(store_graph(&st, artifact)?)))
}

pub async fn get_graph(State(st): State<Shared>, Path(id): Path<String>) -> Result<Json<GraphDocument>, ApiError> {
    let a = st.store.graph(&id)?;
    Ok(Json(GraphDocument { id, dataset_id: a.dataset_id.clone(), graph: a.graph.clone() }))
}

fn check_nodes(nodes: &[String], ds: &Dataset, what: &str) -> Result<(), ApiError> {
    let names: Vec<&str> = ds.features.iter().map(|f| f.name.as_str()).collect();
    if nodes.iter().map(String::as_str).ne(names.iter().copied()) {
        return Err(ApiError::Conflict(format!(
            "{what} nodes [{}] do not match the dataset features [{}]",
            nodes.join(", "),
            names.join(", ")
        )));
    }
    Ok(())
}

#[derive(Deserialize)]
pub struct ExplainBody {
    model_id: String,
    #[serde(default)]
    graph_id: Option<String>,
    #[serde(flatten)]
    request: ExplainRequest,
}

#[derive(Serialize)]
pub struct ExplainResponse {
    model_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    graph_id: Option<String>,
    #[serde(flatten)]
    set: ExplanationSet,
    diffs: Vec<DiffTable>,
}

/// `POST /v1/explain`. Reads artifacts only; the search runs on a blocking
/// worker under the configured time limit.
pub async fn explain(
    State(st): State<Shared>,
    ApiJson(body): ApiJson<ExplainBody>,
) -> Result<Json<ExplainResponse>, ApiError> {
    let model = st.store.model(&body.model_id)?;
    let ds = st.store.dataset(&model.dataset_id)?;
    let graph = match &body.graph_id {
        Some(gid) => {
            let g = st.store.graph(gid)?.graph()?;
            check_nodes(&g.nodes, &ds.dataset, "graph")?;
            Some(g)
        }
        None => None,
    };
    let req = body.request;
    let limit = st.explain_timeout;
    let task = tokio::task::spawn_blocking(move || {
        generate_counterfactuals(&req, &ds.dataset, model.model.as_oracle(), graph.as_ref())
    });
    let set = match tokio::time::timeout(limit, task).await {
        Ok(joined) => joined.map_err(|e| ApiError::Internal(format!("worker task: {e}")))??,
        Err(_) => {
            log::warn!("explain for model {} exceeded {} s", body.model_id, limit.as_secs());
            return Err(ApiError::Timeout(limit.as_secs()));
        }
    };
    let diffs = explanation_diff(&set, &set.query);
    Ok(Json(ExplainResponse { model_id: body.model_id, graph_id: body.graph_id, set, diffs }))
}
