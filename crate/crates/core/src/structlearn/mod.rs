//! Learning the relationship graph from data.
//!
//! Linear mode runs DirectLiNGAM and keeps its least-squares weights. CPD
//! mode reuses the learned structure, discretizes each feature into
//! equal-frequency bins and estimates smoothed conditional tables.

mod discretize;
mod lingam;

pub use discretize::{discretize, estimate_cpds, quantile_binning, DiscretizedDataset};
pub use lingam::{direct_lingam, LingamResult};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, Dataset};
use crate::graph::{merge, GraphError, GraphMode, RelationshipGraph};

#[derive(Debug, Error, PartialEq)]
pub enum LearnError {
    #[error("structure learning needs at least 2 features, got {0}")]
    TooFewFeatures(usize),
    #[error("structure learning needs at least M + 2 rows: n = {n}, M = {m}")]
    TooFewRows { n: usize, m: usize },
    #[error("parent configurations of `{node}` exceed the cap of {cap}; use fewer bins")]
    TooManyConfigurations { node: String, cap: usize },
    #[error("invalid learning config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnConfig {
    pub mode: GraphMode,
    /// Learned weights with smaller magnitude (normalized units) are dropped.
    pub prune_threshold: f64,
    pub bins: usize,
    /// Dirichlet pseudo-count; 0 gives maximum likelihood.
    pub alpha: f64,
    pub max_configurations: usize,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            mode: GraphMode::Linear,
            prune_threshold: 0.05,
            bins: 5,
            alpha: 1.0,
            max_configurations: 1_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LearnedGraph {
    pub graph: RelationshipGraph,
    pub lingam: LingamResult,
}

/// Full pipeline: DirectLiNGAM, optional expert merge, then (CPD mode)
/// discretization of the normalized data and table estimation.
pub fn learn_graph(
    ds: &Dataset,
    cfg: &LearnConfig,
    expert: Option<&RelationshipGraph>,
) -> Result<LearnedGraph, LearnError> {
    let lingam = direct_lingam(ds, cfg.prune_threshold)?;
    let names: Vec<String> = ds.features.iter().map(|f| f.name.clone()).collect();
    let mut graph = lingam.to_graph(names);
    let norm = ds.normalize();
    if let Some(expert) = expert {
        graph = merge(expert, &graph)?;
        refit_intercepts(&mut graph, &norm.rows);
    }
    if cfg.mode == GraphMode::Cpd {
        let dd = discretize(&norm, cfg.bins)?;
        graph = estimate_cpds(&dd, &graph, cfg.alpha, cfg.max_configurations)?;
    }
    Ok(LearnedGraph { graph, lingam })
}

/// Sets every child's intercept to the mean of its value minus the weighted
/// parent sum, which leaves least-squares intercepts unchanged and makes
/// expert-weighted nodes unbiased on the training rows.
pub fn refit_intercepts(g: &mut RelationshipGraph, rows: &[Vec<f64>]) {
    let m = g.m();
    let mut intercepts = vec![0.0; m];
    for (i, b) in intercepts.iter_mut().enumerate() {
        let incoming: Vec<_> = g.edges.iter().filter(|e| e.dst == i).collect();
        if incoming.is_empty() || rows.is_empty() {
            continue;
        }
        *b = rows
            .iter()
            .map(|r| r[i] - incoming.iter().map(|e| e.weight * r[e.src]).sum::<f64>())
            .sum::<f64>()
            / rows.len() as f64;
    }
    g.intercepts = intercepts;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FeatureSpec;
    use crate::graph::{Edge, Provenance};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn chain_ds() -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let rows: Vec<Vec<f64>> = (0..800)
            .map(|_| {
                let a: f64 = rng.random_range(0.0..1.0);
                let b = 0.8 * a + rng.random_range(0.0..0.2);
                let c = 0.5 * b + rng.random_range(0.0..0.5);
                vec![a, b, c]
            })
            .collect();
        let features = ["a", "b", "c"]
            .iter()
            .enumerate()
            .map(|(j, n)| {
                let lo = rows.iter().map(|r| r[j]).fold(f64::INFINITY, f64::min);
                let hi = rows.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max);
                FeatureSpec::continuous(*n, lo, hi)
            })
            .collect();
        Dataset::new(features, rows, vec![0; 800], vec!["0".into()]).unwrap()
    }

    #[test]
    fn linear_pipeline_produces_valid_graph() {
        let learned = learn_graph(&chain_ds(), &LearnConfig::default(), None).unwrap();
        learned.graph.validate().unwrap();
        assert!(learned.graph.edge(0, 1).is_some());
        assert!(learned.graph.edge(1, 2).is_some());
    }

    #[test]
    fn expert_edges_survive_the_pipeline() {
        let ds = chain_ds();
        let mut expert = RelationshipGraph::with_edges(
            vec!["a".into(), "b".into(), "c".into()],
            vec![Edge::expert(0, 2, 0.1)],
        );
        expert.forbidden = vec![(1, 2)];
        let learned = learn_graph(&ds, &LearnConfig::default(), Some(&expert)).unwrap();
        assert_eq!(learned.graph.edge(0, 2).unwrap().provenance, Provenance::Expert);
        assert!(learned.graph.edge(1, 2).is_none());
        assert!(learned.graph.intercept(2).abs() > 0.0);
    }

    #[test]
    fn cpd_pipeline_has_tables_for_every_node() {
        let cfg = LearnConfig { mode: GraphMode::Cpd, ..Default::default() };
        let g = learn_graph(&chain_ds(), &cfg, None).unwrap().graph;
        assert_eq!(g.mode, GraphMode::Cpd);
        assert_eq!(g.cpds.len(), 3);
        assert!(g.binnings.iter().all(|b| b.k() == 5));
        g.validate().unwrap();
    }

    #[test]
    fn refit_keeps_least_squares_intercepts() {
        let ds = chain_ds();
        let learned = learn_graph(&ds, &LearnConfig::default(), None).unwrap();
        let mut g = learned.graph.clone();
        refit_intercepts(&mut g, &ds.normalize().rows);
        for (a, b) in g.intercepts.iter().zip(&learned.graph.intercepts) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}
