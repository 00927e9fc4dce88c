use std::collections::BTreeSet;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DataError, Dataset, FeatureKind, FeatureSpec, Monotonic};

/// Columns with at most this many distinct all-integer values are inferred categorical.
const MAX_CATEGORICAL_LEVELS: usize = 20;

/// One entry of a schema override file (a JSON array of these).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SchemaOverride {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub locked: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monotonic: Option<Monotonic>,
}

pub fn load_csv(
    path: impl AsRef<Path>,
    target_column: &str,
    overrides: Option<&[SchemaOverride]>,
) -> Result<Dataset, DataError> {
    let file = std::fs::File::open(path.as_ref())
        .map_err(|e| DataError::Io(format!("{}: {e}", path.as_ref().display())))?;
    read_csv(file, target_column, overrides)
}

/// Parses CSV from any reader. Schema is inferred, then merged with overrides.
pub fn read_csv<R: Read>(
    reader: R,
    target_column: &str,
    overrides: Option<&[SchemaOverride]>,
) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| DataError::Csv(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let target_pos = header
        .iter()
        .position(|h| h == target_column)
        .ok_or_else(|| DataError::MissingTarget(target_column.to_string()))?;
    let names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != target_pos)
        .map(|(_, h)| h.clone())
        .collect();

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| DataError::Csv(e.to_string()))?;
        if record.len() != header.len() {
            return Err(DataError::Csv(format!(
                "row {} has {} fields, header has {}",
                r + 1,
                record.len(),
                header.len()
            )));
        }
        let mut row = Vec::with_capacity(names.len());
        for (c, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            if c == target_pos {
                labels.push(cell.to_string());
                continue;
            }
            let v: f64 = cell.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                DataError::NonNumeric {
                    row: r + 1,
                    column: header[c].clone(),
                    value: cell.to_string(),
                }
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(DataError::Empty);
    }

    let mut features = infer_schema(&names, &rows);
    if let Some(overrides) = overrides {
        apply_overrides(&mut features, &rows, overrides)?;
    }
    let (class_labels, target) = encode_labels(&labels);
    Dataset::new(features, rows, target, class_labels)
}

/// Infers one spec per column: few distinct all-integer values make a
/// categorical feature, everything else is continuous over the observed range.
pub fn infer_schema(names: &[String], rows: &[Vec<f64>]) -> Vec<FeatureSpec> {
    names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            let all_int = col.iter().all(|v| v.fract() == 0.0);
            let distinct: BTreeSet<i64> = if all_int {
                col.iter().map(|&v| v as i64).collect()
            } else {
                BTreeSet::new()
            };
            if all_int && distinct.len() <= MAX_CATEGORICAL_LEVELS {
                FeatureSpec::categorical(name.clone(), distinct.into_iter().map(|v| v as f64).collect())
            } else {
                let min = col.iter().copied().fold(f64::INFINITY, f64::min);
                let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                FeatureSpec::continuous(name.clone(), min, max)
            }
        })
        .collect()
}

fn apply_overrides(
    features: &mut [FeatureSpec],
    rows: &[Vec<f64>],
    overrides: &[SchemaOverride],
) -> Result<(), DataError> {
    for ov in overrides {
        let j = features
            .iter()
            .position(|f| f.name == ov.name)
            .ok_or_else(|| DataError::UnknownOverride(ov.name.clone()))?;
        let spec = &mut features[j];
        let kind = match ov.kind.as_deref() {
            Some("categorical") => "categorical",
            Some("continuous") => "continuous",
            None if spec.is_categorical() && ov.min.is_none() && ov.max.is_none() => "categorical",
            None if ov.values.is_some() => "categorical",
            None => "continuous",
            Some(other) => {
                return Err(DataError::InvalidSchema {
                    feature: ov.name.clone(),
                    reason: format!("unknown kind `{other}`"),
                })
            }
        };
        let col = || rows.iter().map(move |r| r[j]);
        spec.kind = if kind == "categorical" {
            let values = match &ov.values {
                Some(v) => v.clone(),
                None => {
                    let set: BTreeSet<i64> = col().map(|v| v as i64).collect();
                    set.into_iter().map(|v| v as f64).collect()
                }
            };
            FeatureKind::Categorical { values }
        } else {
            let (dmin, dmax) = match &spec.kind {
                FeatureKind::Continuous { min, max } => (*min, *max),
                FeatureKind::Categorical { .. } => (
                    col().fold(f64::INFINITY, f64::min),
                    col().fold(f64::NEG_INFINITY, f64::max),
                ),
            };
            FeatureKind::Continuous {
                min: ov.min.unwrap_or(dmin),
                max: ov.max.unwrap_or(dmax),
            }
        };
        if let Some(locked) = ov.locked {
            spec.locked = locked;
        }
        if let Some(m) = ov.monotonic {
            spec.monotonic = m;
        }
        let declared_range = ov.min.is_some() || ov.max.is_some();
        spec.validate(!declared_range)?;
    }
    Ok(())
}

/// Sorts labels numerically when all parse as numbers, lexicographically otherwise.
fn encode_labels(labels: &[String]) -> (Vec<String>, Vec<usize>) {
    let mut distinct: Vec<String> = labels.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    if distinct.iter().all(|l| l.parse::<f64>().is_ok()) {
        distinct.sort_by(|a, b| a.parse::<f64>().unwrap().total_cmp(&b.parse::<f64>().unwrap()));
    }
    let target = labels
        .iter()
        .map(|l| distinct.iter().position(|d| d == l).unwrap())
        .collect();
    (distinct, target)
}
