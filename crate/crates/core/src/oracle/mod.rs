//! Black-box prediction oracles.
//!
//! The search engine only ever sees [`Oracle`]: a function from instances to
//! class probabilities. Two reference classifiers are built in (a multinomial
//! logistic model and a boosted stump ensemble), both additive in their
//! features so the candidate pool can be seeded from feature contributions.
//! Anything else plugs in through [`ExternalOracle`].

mod external;
mod logistic;
mod stumps;

pub use external::ExternalOracle;
pub use logistic::{fit_logistic, LogisticConfig, LogisticModel};
pub use stumps::{fit_stumps, Stump, StumpConfig, StumpModel};

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, Dataset, Instance, NormStats, Space};

/// Lower clip applied to probabilities before any downstream log or ratio.
pub const PROBA_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("training data has a single class; at least two are required")]
    SingleClass,
    #[error("instance has {actual} features, oracle expects {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("external oracle protocol failure: {0}")]
    Protocol(String),
    #[error("invalid probability vector: {0}")]
    InvalidProbabilities(String),
    #[error("model file: {0}")]
    Persist(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleKind {
    BuiltinLogistic,
    BuiltinStumps,
    External,
}

/// A classifier exposing per-class probabilities.
pub trait Oracle: Send + Sync {
    fn class_count(&self) -> usize;

    fn kind(&self) -> OracleKind;

    fn metadata(&self) -> String {
        String::new()
    }

    /// One probability vector per instance, in input order.
    fn predict_proba_batch(&self, instances: &[Instance]) -> Result<Vec<Vec<f64>>, OracleError>;

    fn predict_proba(&self, inst: &Instance) -> Result<Vec<f64>, OracleError> {
        let mut out = self.predict_proba_batch(std::slice::from_ref(inst))?;
        out.pop()
            .ok_or_else(|| OracleError::Protocol("empty response".into()))
    }

    fn predict(&self, inst: &Instance) -> Result<usize, OracleError> {
        Ok(argmax(&self.predict_proba(inst)?))
    }

    /// Present when the model decomposes into per-feature additive scores.
    fn additive(&self) -> Option<&dyn AdditiveModel> {
        None
    }
}

/// Per-class score `intercept(c) + Σ_j contribution(c, j, x_j)`, turned into
/// probabilities by softmax.
pub trait AdditiveModel {
    fn feature_count(&self) -> usize;

    fn intercept(&self, class: usize) -> f64;

    /// Contribution of feature `feature` at raw value `raw` to the score of `class`.
    fn contribution(&self, class: usize, feature: usize, raw: f64) -> f64;
}

pub fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) })
        .0
}

pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Scales an instance (either space) to the unit cube used by built-in models.
pub(crate) fn model_inputs(stats: &NormStats, inst: &Instance) -> Result<Vec<f64>, OracleError> {
    if inst.len() != stats.len() {
        return Err(OracleError::DimensionMismatch {
            expected: stats.len(),
            actual: inst.len(),
        });
    }
    Ok(inst
        .values
        .iter()
        .enumerate()
        .map(|(j, &v)| {
            let raw = match inst.space {
                Space::Raw => v,
                Space::Normalized => stats.denormalize_value(j, v),
            };
            stats.unit_scale(j, raw)
        })
        .collect())
}

pub(crate) fn check_classes(ds: &Dataset) -> Result<(), OracleError> {
    let first = ds.target.first().copied();
    if ds.class_count() < 2 || ds.target.iter().all(|&t| Some(t) == first) {
        return Err(OracleError::SingleClass);
    }
    Ok(())
}

/// On-disk form of the built-in models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SavedModel {
    Logistic(LogisticModel),
    Stumps(StumpModel),
}

impl SavedModel {
    pub fn as_oracle(&self) -> &dyn Oracle {
        match self {
            SavedModel::Logistic(m) => m,
            SavedModel::Stumps(m) => m,
        }
    }

    pub fn into_oracle(self) -> Box<dyn Oracle> {
        match self {
            SavedModel::Logistic(m) => Box::new(m),
            SavedModel::Stumps(m) => Box::new(m),
        }
    }

    pub fn feature_names(&self) -> &[String] {
        match self {
            SavedModel::Logistic(m) => &m.feature_names,
            SavedModel::Stumps(m) => &m.feature_names,
        }
    }

    pub fn class_labels(&self) -> &[String] {
        match self {
            SavedModel::Logistic(m) => &m.class_labels,
            SavedModel::Stumps(m) => &m.class_labels,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, OracleError> {
        serde_json::from_str(s).map_err(|e| OracleError::Persist(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), OracleError> {
        std::fs::write(path, self.to_json()).map_err(|e| OracleError::Persist(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, OracleError> {
        let s = std::fs::read_to_string(path).map_err(|e| OracleError::Persist(e.to_string()))?;
        Self::from_json(&s)
    }
}

/// Training-set accuracy, used for reporting.
pub fn accuracy(oracle: &dyn Oracle, ds: &Dataset) -> Result<f64, OracleError> {
    let instances: Vec<Instance> = (0..ds.n()).map(|i| ds.instance(i)).collect();
    let probas = oracle.predict_proba_batch(&instances)?;
    let correct = probas
        .iter()
        .zip(&ds.target)
        .filter(|(p, &t)| argmax(p) == t)
        .count();
    Ok(correct as f64 / ds.n() as f64)
}
