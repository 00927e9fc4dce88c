//! Tabular datasets, feature schemas and min-max normalization.
//!
//! Every downstream module works on normalized instances: continuous
//! features are mapped into `[0, 1]` using the training minimum and maximum,
//! categorical features keep their integer codes.

mod load;

pub use load::{infer_schema, load_csv, read_csv, SchemaOverride};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised while loading or transforming tabular data.
#[derive(Debug, Error, PartialEq)]
pub enum DataError {
    #[error("io error: {0}")]
    Io(String),
    #[error("malformed csv: {0}")]
    Csv(String),
    #[error("target column `{0}` not found in header")]
    MissingTarget(String),
    #[error("row {row}, column `{column}`: non-numeric value `{value}` in a numeric column")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}, column `{column}`: value {value} outside declared domain {domain}")]
    OutOfDomain {
        row: usize,
        column: String,
        value: f64,
        domain: String,
    },
    #[error("invalid schema for feature `{feature}`: {reason}")]
    InvalidSchema { feature: String, reason: String },
    #[error("schema override names unknown column `{0}`")]
    UnknownOverride(String),
    #[error("dimension mismatch: expected {expected} values, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("normalization stats missing for feature {0}")]
    MissingStats(usize),
    #[error("dataset is empty")]
    Empty,
}

/// Value domain of a feature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FeatureKind {
    Continuous { min: f64, max: f64 },
    Categorical { values: Vec<f64> },
}

/// Direction in which a feature may move when building a counterfactual.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Monotonic {
    #[default]
    None,
    NonDecreasing,
    NonIncreasing,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: FeatureKind,
    #[serde(default)]
    pub locked: bool,
    #[serde(default)]
    pub monotonic: Monotonic,
}

impl FeatureSpec {
    pub fn continuous(name: impl Into<String>, min: f64, max: f64) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Continuous { min, max },
            locked: false,
            monotonic: Monotonic::None,
        }
    }

    pub fn categorical(name: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Categorical { values },
            locked: false,
            monotonic: Monotonic::None,
        }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self.kind, FeatureKind::Categorical { .. })
    }

    /// Checks the domain invariants. Inferred continuous domains may be
    /// degenerate (`min == max`) when the column is constant; declared ones
    /// must satisfy `min < max`.
    pub fn validate(&self, allow_degenerate: bool) -> Result<(), DataError> {
        let bad = |reason: &str| DataError::InvalidSchema {
            feature: self.name.clone(),
            reason: reason.to_string(),
        };
        match &self.kind {
            FeatureKind::Continuous { min, max } => {
                if !min.is_finite() || !max.is_finite() {
                    return Err(bad("range bounds must be finite"));
                }
                if min > max || (min == max && !allow_degenerate) {
                    return Err(bad("range lower bound must be below upper bound"));
                }
            }
            FeatureKind::Categorical { values } => {
                if values.is_empty() {
                    return Err(bad("categorical value list is empty"));
                }
                let mut sorted = values.clone();
                sorted.sort_by(f64::total_cmp);
                if sorted.windows(2).any(|w| w[0] == w[1]) {
                    return Err(bad("categorical value list contains duplicates"));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(bad("categorical values must be finite"));
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, value: f64) -> bool {
        match &self.kind {
            FeatureKind::Continuous { min, max } => value >= *min && value <= *max,
            FeatureKind::Categorical { values } => values.contains(&value),
        }
    }

    pub fn domain_label(&self) -> String {
        match &self.kind {
            FeatureKind::Continuous { min, max } => format!("[{min}, {max}]"),
            FeatureKind::Categorical { values } => format!("{values:?}"),
        }
    }
}

/// Whether an instance holds raw or normalized values.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Space {
    #[default]
    Raw,
    Normalized,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub values: Vec<f64>,
    pub space: Space,
}

impl Instance {
    pub fn raw(values: Vec<f64>) -> Self {
        Self {
            values,
            space: Space::Raw,
        }
    }

    pub fn normalized(values: Vec<f64>) -> Self {
        Self {
            values,
            space: Space::Normalized,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Per-feature training minimum and maximum.
///
/// Categorical features carry their code range as well (used by the built-in
/// classifiers to scale inputs) but are left untouched by [`NormStats::normalize_value`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub categorical: Vec<bool>,
}

impl NormStats {
    pub fn fit(features: &[FeatureSpec], rows: &[Vec<f64>]) -> Self {
        let m = features.len();
        let mut min = vec![f64::INFINITY; m];
        let mut max = vec![f64::NEG_INFINITY; m];
        for row in rows {
            for (j, &v) in row.iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        Self {
            min,
            max,
            categorical: features.iter().map(FeatureSpec::is_categorical).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.min.len()
    }

    pub fn is_empty(&self) -> bool {
        self.min.is_empty()
    }

    pub fn range(&self, feature: usize) -> f64 {
        self.max[feature] - self.min[feature]
    }

    /// Maps a raw value into normalized space. Constant features map to 0.
    pub fn normalize_value(&self, feature: usize, value: f64) -> f64 {
        if self.categorical[feature] {
            return value;
        }
        let range = self.range(feature);
        if range <= 0.0 {
            0.0
        } else {
            (value - self.min[feature]) / range
        }
    }

    pub fn denormalize_value(&self, feature: usize, value: f64) -> f64 {
        if self.categorical[feature] {
            return value;
        }
        let range = self.range(feature);
        if range <= 0.0 {
            self.min[feature]
        } else {
            self.min[feature] + value * range
        }
    }

    /// Min-max scaling of every feature, categorical codes included. This is
    /// the input transform used by the built-in classifiers.
    pub fn unit_scale(&self, feature: usize, raw: f64) -> f64 {
        let range = self.range(feature);
        if range <= 0.0 {
            0.0
        } else {
            (raw - self.min[feature]) / range
        }
    }

    /// Normalizes a raw instance, clipping continuous values that fall outside
    /// the training range. Returns the clipped feature indices alongside.
    pub fn normalize_instance(&self, inst: &Instance) -> Result<(Instance, Vec<usize>), DataError> {
        if inst.len() != self.len() {
            return Err(DataError::DimensionMismatch {
                expected: self.len(),
                actual: inst.len(),
            });
        }
        if inst.space == Space::Normalized {
            return Ok((inst.clone(), Vec::new()));
        }
        let mut clipped = Vec::new();
        let values = inst
            .values
            .iter()
            .enumerate()
            .map(|(j, &v)| {
                let n = self.normalize_value(j, v);
                if !self.categorical[j] && !(0.0..=1.0).contains(&n) {
                    clipped.push(j);
                    n.clamp(0.0, 1.0)
                } else {
                    n
                }
            })
            .collect();
        if !clipped.is_empty() {
            log::warn!("instance values outside the training range were clipped for features {clipped:?}");
        }
        Ok((Instance::normalized(values), clipped))
    }

    /// Returns the raw-space view of an instance in either space.
    pub fn to_raw(&self, inst: &Instance) -> Result<Instance, DataError> {
        match inst.space {
            Space::Raw => Ok(inst.clone()),
            Space::Normalized => denormalize(inst, self),
        }
    }
}

/// Inverse of normalization.
pub fn denormalize(inst: &Instance, stats: &NormStats) -> Result<Instance, DataError> {
    if inst.space == Space::Raw {
        return Ok(inst.clone());
    }
    if inst.len() > stats.len() {
        return Err(DataError::MissingStats(stats.len()));
    }
    if inst.len() < stats.len() {
        return Err(DataError::DimensionMismatch {
            expected: stats.len(),
            actual: inst.len(),
        });
    }
    Ok(Instance::raw(
        inst.values
            .iter()
            .enumerate()
            .map(|(j, &v)| stats.denormalize_value(j, v))
            .collect(),
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub features: Vec<FeatureSpec>,
    pub rows: Vec<Vec<f64>>,
    pub target: Vec<usize>,
    pub class_labels: Vec<String>,
    pub norm_stats: NormStats,
    pub space: Space,
}

impl Dataset {
    /// Builds a raw-space dataset, validating every row against its feature
    /// domain and capturing normalization stats.
    pub fn new(
        features: Vec<FeatureSpec>,
        rows: Vec<Vec<f64>>,
        target: Vec<usize>,
        class_labels: Vec<String>,
    ) -> Result<Self, DataError> {
        if features.is_empty() || rows.is_empty() {
            return Err(DataError::Empty);
        }
        if target.len() != rows.len() {
            return Err(DataError::DimensionMismatch {
                expected: rows.len(),
                actual: target.len(),
            });
        }
        for spec in &features {
            spec.validate(true)?;
        }
        for (r, row) in rows.iter().enumerate() {
            if row.len() != features.len() {
                return Err(DataError::DimensionMismatch {
                    expected: features.len(),
                    actual: row.len(),
                });
            }
            for (spec, &v) in features.iter().zip(row) {
                if !spec.contains(v) {
                    return Err(DataError::OutOfDomain {
                        row: r + 1,
                        column: spec.name.clone(),
                        value: v,
                        domain: spec.domain_label(),
                    });
                }
            }
        }
        if let Some(&bad) = target.iter().find(|&&t| t >= class_labels.len()) {
            return Err(DataError::InvalidSchema {
                feature: "target".into(),
                reason: format!("class index {bad} has no label"),
            });
        }
        let norm_stats = NormStats::fit(&features, &rows);
        Ok(Self {
            features,
            rows,
            target,
            class_labels,
            norm_stats,
            space: Space::Raw,
        })
    }

    /// Number of features.
    pub fn m(&self) -> usize {
        self.features.len()
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn class_count(&self) -> usize {
        self.class_labels.len()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.class_labels.iter().position(|l| l == label)
    }

    pub fn column(&self, feature: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[feature]).collect()
    }

    pub fn instance(&self, row: usize) -> Instance {
        Instance {
            values: self.rows[row].clone(),
            space: self.space,
        }
    }

    /// Row-wise normalized copy. Idempotent.
    pub fn normalize(&self) -> Dataset {
        normalize(self)
    }
}

/// Maps every continuous feature into `[0, 1]` with the training min/max.
pub fn normalize(ds: &Dataset) -> Dataset {
    if ds.space == Space::Normalized {
        return ds.clone();
    }
    let stats = &ds.norm_stats;
    let rows = ds
        .rows
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .map(|(j, &v)| stats.normalize_value(j, v))
                .collect()
        })
        .collect();
    Dataset {
        rows,
        space: Space::Normalized,
        ..ds.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_feature_ds() -> Dataset {
        Dataset::new(
            vec![
                FeatureSpec::continuous("a", 2.0, 6.0),
                FeatureSpec::continuous("c", 3.0, 3.0),
            ],
            vec![vec![2.0, 3.0], vec![4.0, 3.0], vec![6.0, 3.0]],
            vec![0, 1, 0],
            vec!["0".into(), "1".into()],
        )
        .unwrap()
    }

    #[test]
    fn normalize_midpoint_endpoint_and_constant() {
        let ds = two_feature_ds().normalize();
        assert_eq!(ds.rows[1][0], 0.5);
        assert_eq!(ds.rows[2][0], 1.0);
        assert!(ds.rows.iter().all(|r| r[1] == 0.0));
        assert_eq!(ds.space, Space::Normalized);
    }

    #[test]
    fn denormalize_midpoint_and_constant() {
        let ds = two_feature_ds();
        let back = denormalize(&Instance::normalized(vec![0.5, 0.0]), &ds.norm_stats).unwrap();
        assert_eq!(back.values, vec![4.0, 3.0]);
    }

    #[test]
    fn denormalize_reports_missing_stats() {
        let ds = two_feature_ds();
        let err = denormalize(&Instance::normalized(vec![0.5, 0.0, 0.1]), &ds.norm_stats);
        assert_eq!(err, Err(DataError::MissingStats(2)));
    }

    #[test]
    fn out_of_range_query_is_clipped() {
        let ds = two_feature_ds();
        let (n, clipped) = ds
            .norm_stats
            .normalize_instance(&Instance::raw(vec![10.0, 3.0]))
            .unwrap();
        assert_eq!(n.values[0], 1.0);
        assert_eq!(clipped, vec![0]);
    }

    #[test]
    fn categorical_codes_unchanged() {
        let ds = Dataset::new(
            vec![FeatureSpec::categorical("k", vec![0.0, 2.0, 5.0])],
            vec![vec![0.0], vec![5.0], vec![2.0]],
            vec![0, 0, 0],
            vec!["x".into()],
        )
        .unwrap()
        .normalize();
        assert_eq!(ds.column(0), vec![0.0, 5.0, 2.0]);
    }

    #[test]
    fn declared_domain_is_enforced() {
        let err = Dataset::new(
            vec![FeatureSpec::continuous("a", 0.0, 10.0)],
            vec![vec![1.0], vec![12.0]],
            vec![0, 0],
            vec!["x".into()],
        )
        .unwrap_err();
        assert!(matches!(err, DataError::OutOfDomain { row: 2, .. }));
    }

    proptest! {
        #[test]
        fn normalize_round_trips(rows in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 3), 1..30)) {
            let features = vec![
                FeatureSpec::continuous("a", -1e3, 1e3),
                FeatureSpec::continuous("b", -1e3, 1e3),
                FeatureSpec::continuous("c", -1e3, 1e3),
            ];
            let target = vec![0; rows.len()];
            let ds = Dataset::new(features, rows.clone(), target, vec!["0".into()]).unwrap();
            let norm = ds.normalize();
            for (raw, n) in rows.iter().zip(&norm.rows) {
                prop_assert!(n.iter().all(|v| (0.0..=1.0).contains(v)));
                let back = denormalize(&Instance::normalized(n.clone()), &ds.norm_stats).unwrap();
                for (j, (a, b)) in raw.iter().zip(&back.values).enumerate() {
                    if ds.norm_stats.range(j) > 0.0 {
                        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "{} vs {}", a, b);
                    }
                }
            }
        }
    }
}
