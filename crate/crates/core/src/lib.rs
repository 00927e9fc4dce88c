//! Counterfactual explanations for tabular classifiers that stay close to
//! the query, change few features, differ from each other, and remain
//! plausible under a causal graph learned from the data.

pub mod data;
pub mod evalbench;
pub mod graph;
pub mod loss;
pub mod oracle;
pub mod search;
pub mod structlearn;
pub mod synth;
pub mod tpe;

pub use data::{load_csv, DataError, Dataset, FeatureKind, FeatureSpec, Instance, Monotonic, SchemaOverride};
pub use graph::{GraphError, RelationshipGraph};
pub use loss::{LossBreakdown, LossError, LossWeights};
pub use oracle::{Oracle, OracleError, SavedModel};
pub use search::{
    generate_counterfactuals, Counterfactual, ExplainRequest, ExplanationSet, FeatureConstraint, SearchError,
};
pub use structlearn::{learn_graph, LearnConfig, LearnError};
