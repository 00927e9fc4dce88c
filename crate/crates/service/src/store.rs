use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use dance_core::data::Dataset;
use dance_core::graph::{GraphJson, RelationshipGraph};
use dance_core::oracle::SavedModel;
use dance_core::structlearn::LearnConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::ApiError;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetArtifact {
    pub target: String,
    pub dataset: Dataset,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub dataset_id: String,
    pub training_accuracy: f64,
    pub model: SavedModel,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GraphArtifact {
    pub dataset_id: String,
    pub config: LearnConfig,
    pub graph: GraphJson,
    #[serde(skip)]
    resolved: Option<RelationshipGraph>,
}

impl GraphArtifact {
    pub fn new(dataset_id: String, config: LearnConfig, graph: &RelationshipGraph) -> Self {
        Self { dataset_id, config, graph: GraphJson::from(graph), resolved: Some(graph.clone()) }
    }

    pub fn graph(&self) -> Result<RelationshipGraph, ApiError> {
        match &self.resolved {
            Some(g) => Ok(g.clone()),
            None => Ok(self.graph.clone().into_graph(dance_core::graph::Provenance::Learned)?),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Artifact {
    Dataset(DatasetArtifact),
    Model(ModelArtifact),
    Graph(GraphArtifact),
}

/// `kind-` followed by the sha256 of `parts`, each length-prefixed so
/// concatenations cannot collide.
pub fn content_id(kind: &str, parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    h.update(kind.as_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    format!("{kind}-{}", hex::encode(h.finalize()))
}

#[derive(Default)]
struct Maps {
    datasets: HashMap<String, Arc<DatasetArtifact>>,
    models: HashMap<String, Arc<ModelArtifact>>,
    graphs: HashMap<String, Arc<GraphArtifact>>,
}

impl Maps {
    fn add(&mut self, id: String, a: Artifact) {
        match a {
            Artifact::Dataset(d) => {
                self.datasets.insert(id, Arc::new(d));
            }
            Artifact::Model(m) => {
                self.models.insert(id, Arc::new(m));
            }
            Artifact::Graph(g) => {
                self.graphs.insert(id, Arc::new(g));
            }
        }
    }

    fn contains(&self, id: &str) -> bool {
        self.datasets.contains_key(id) || self.models.contains_key(id) || self.graphs.contains_key(id)
    }
}

/// Append-only, content-addressed artifact store. Artifacts are immutable
/// once inserted; with a directory they are also written through to disk
/// and reloaded on start.
pub struct ArtifactStore {
    dir: Option<PathBuf>,
    maps: RwLock<Maps>,
}

fn poisoned<T>(_: T) -> ApiError {
    ApiError::Internal("artifact store lock poisoned".into())
}

impl ArtifactStore {
    pub fn in_memory() -> Self {
        Self { dir: None, maps: RwLock::new(Maps::default()) }
    }

    pub fn open(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        let mut maps = Maps::default();
        for entry in std::fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.extension().is_none_or(|e| e != "json") {
                continue;
            }
            let Some(id) = path.file_stem().map(|s| s.to_string_lossy().into_owned()) else { continue };
            let parsed = std::fs::read_to_string(&path)
                .map_err(|e| e.to_string())
                .and_then(|s| serde_json::from_str::<Artifact>(&s).map_err(|e| e.to_string()));
            match parsed {
                Ok(a) => maps.add(id, a),
                Err(e) => log::warn!("skipping unreadable artifact {}: {e}", path.display()),
            }
        }
        Ok(Self { dir: Some(dir), maps: RwLock::new(maps) })
    }

    /// Stores `artifact` under `id` unless an artifact with that id exists.
    pub fn insert(&self, id: &str, artifact: Artifact) -> Result<(), ApiError> {
        let mut maps = self.maps.write().map_err(poisoned)?;
        if maps.contains(id) {
            return Ok(());
        }
        if let Some(dir) = &self.dir {
            let body = serde_json::to_vec_pretty(&artifact).map_err(|e| ApiError::Internal(e.to_string()))?;
            std::fs::write(dir.join(format!("{id}.json")), body)
                .map_err(|e| ApiError::Internal(format!("writing artifact {id}: {e}")))?;
        }
        maps.add(id.to_string(), artifact);
        Ok(())
    }

    pub fn dataset(&self, id: &str) -> Result<Arc<DatasetArtifact>, ApiError> {
        let maps = self.maps.read().map_err(poisoned)?;
        maps.datasets.get(id).cloned().ok_or_else(|| ApiError::NotFound { kind: "dataset", id: id.into() })
    }

    pub fn model(&self, id: &str) -> Result<Arc<ModelArtifact>, ApiError> {
        let maps = self.maps.read().map_err(poisoned)?;
        maps.models.get(id).cloned().ok_or_else(|| ApiError::NotFound { kind: "model", id: id.into() })
    }

    pub fn graph(&self, id: &str) -> Result<Arc<GraphArtifact>, ApiError> {
        let maps = self.maps.read().map_err(poisoned)?;
        maps.graphs.get(id).cloned().ok_or_else(|| ApiError::NotFound { kind: "graph", id: id.into() })
    }

    pub fn len(&self) -> usize {
        self.maps.read().map(|m| m.datasets.len() + m.models.len() + m.graphs.len()).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use dance_core::synth;

    #[test]
    fn content_id_separates_part_boundaries() {
        assert_ne!(content_id("d", &[b"ab", b"c"]), content_id("d", &[b"a", b"bc"]));
        assert_eq!(content_id("d", &[b"ab"]), content_id("d", &[b"ab"]));
        assert!(content_id("model", &[]).starts_with("model-"));
    }

    #[test]
    fn first_insert_wins() {
        let store = ArtifactStore::in_memory();
        let a = DatasetArtifact { target: "t".into(), dataset: synth::blobs(10, 1) };
        let b = DatasetArtifact { target: "u".into(), dataset: synth::blobs(10, 2) };
        store.insert("dataset-1", Artifact::Dataset(a)).unwrap();
        store.insert("dataset-1", Artifact::Dataset(b)).unwrap();
        assert_eq!(store.dataset("dataset-1").unwrap().target, "t");
        assert_eq!(store.len(), 1);
        assert!(matches!(store.model("dataset-1"), Err(ApiError::NotFound { kind: "model", .. })));
    }

    #[test]
    fn reopening_skips_unreadable_files() {
        let dir = tempfile::tempdir().unwrap();
        let store = ArtifactStore::open(dir.path()).unwrap();
        let a = DatasetArtifact { target: "t".into(), dataset: synth::blobs(10, 1) };
        store.insert("dataset-1", Artifact::Dataset(a)).unwrap();
        std::fs::write(dir.path().join("junk.json"), "{").unwrap();
        let again = ArtifactStore::open(dir.path()).unwrap();
        assert_eq!(again.len(), 1);
        assert_eq!(again.dataset("dataset-1").unwrap().dataset, store.dataset("dataset-1").unwrap().dataset);
    }
}
