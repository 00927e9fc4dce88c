use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::ExplanationSet;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffRow {
    pub feature: String,
    pub original: f64,
    pub new: f64,
    pub changed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffTable {
    pub counterfactual: usize,
    pub rows: Vec<DiffRow>,
}

/// Feature-by-feature comparison of each counterfactual with the raw query
/// `x`, in dataset order. Unchanged features are copied bit for bit by the
/// search, so any difference (including a category code swap) is flagged.
pub fn explanation_diff(set: &ExplanationSet, x: &[f64]) -> Vec<DiffTable> {
    set.counterfactuals
        .iter()
        .enumerate()
        .map(|(i, cf)| DiffTable {
            counterfactual: i,
            rows: set
                .feature_names
                .iter()
                .zip(x.iter().zip(&cf.values))
                .map(|(name, (&original, &new))| DiffRow {
                    feature: name.clone(),
                    original,
                    new,
                    changed: original.to_bits() != new.to_bits(),
                })
                .collect(),
        })
        .collect()
}

fn num(v: f64) -> String {
    let s = format!("{v:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

/// Plain-text tables for terminals. Changed rows start with `*`.
pub fn render_diff(set: &ExplanationSet, x: &[f64]) -> String {
    let width = set.feature_names.iter().map(String::len).max().unwrap_or(7).max(7);
    let mut out = String::new();
    for (table, cf) in explanation_diff(set, x).iter().zip(&set.counterfactuals) {
        let _ = writeln!(
            out,
            "counterfactual {} (class {}, p = {:.4})",
            table.counterfactual + 1,
            cf.predicted_class,
            cf.desired_probability
        );
        let _ = writeln!(out, "  {:width$}  {:>12}  {:>12}", "feature", "original", "new");
        for r in &table.rows {
            let mark = if r.changed { '*' } else { ' ' };
            let _ = writeln!(out, "{mark} {:width$}  {:>12}  {:>12}", r.feature, num(r.original), num(r.new));
        }
        out.push('\n');
    }
    for f in &set.failures {
        let _ = writeln!(
            out,
            "attempt {} failed: hinge {:.4}, desired-class probability {:.4}",
            f.iteration + 1,
            f.hinge,
            f.desired_probability
        );
    }
    if set.counterfactuals.is_empty() && set.failures.is_empty() {
        out.push_str("no counterfactuals\n");
    }
    out
}
