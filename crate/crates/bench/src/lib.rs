//! Shared fixtures for the criterion benchmarks.

use dance_core::oracle::{fit_stumps, SavedModel, StumpConfig};
use dance_core::structlearn::{learn_graph, LearnConfig};
use dance_core::{synth, Dataset, RelationshipGraph};

/// A 4-feature graph dataset with a fitted stump oracle, its learned linear
/// graph, and a class-0 query row.
pub struct Fixture {
    pub ds: Dataset,
    pub model: SavedModel,
    pub graph: RelationshipGraph,
    pub query: Vec<f64>,
}

impl Fixture {
    pub fn new(seed: u64) -> Self {
        let ds = synth::linear_graph(400, seed);
        let model = SavedModel::Stumps(fit_stumps(&ds, &StumpConfig::default()).expect("two classes"));
        let graph = learn_graph(&ds, &LearnConfig::default(), None).expect("learnable").graph;
        let row = ds.target.iter().position(|&t| t == 0).expect("class 0 present");
        let query = ds.rows[row].clone();
        Self { ds, model, graph, query }
    }

    /// The query in normalized space.
    pub fn query_normalized(&self) -> Vec<f64> {
        self.query.iter().enumerate().map(|(j, &v)| self.ds.norm_stats.normalize_value(j, v)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_query_is_class_zero() {
        let f = Fixture::new(1);
        assert_eq!(f.query.len(), 4);
        assert_eq!(f.graph.nodes.len(), 4);
        assert!(f.query_normalized().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
