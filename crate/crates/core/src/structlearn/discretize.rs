use serde::{Deserialize, Serialize};

use super::LearnError;
use crate::data::{Dataset, FeatureKind};
use crate::graph::{Binning, Cpd, GraphMode, RelationshipGraph};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscretizedDataset {
    pub binnings: Vec<Binning>,
    /// `bins[row][feature]`.
    pub bins: Vec<Vec<usize>>,
}

impl DiscretizedDataset {
    pub fn k(&self, feature: usize) -> usize {
        self.binnings[feature].k()
    }
}

/// Equal-frequency bins per continuous feature, computed on the values as
/// given (callers pass normalized data). Cut `j` is the order statistic at
/// position `⌊j·n/k⌋`; cuts not above the minimum are raised to the next
/// distinct value and repeated cuts collapse, so no bin is ever empty.
/// Categorical features get one bin per code.
pub fn discretize(ds: &Dataset, k: usize) -> Result<DiscretizedDataset, LearnError> {
    if k < 2 {
        return Err(LearnError::InvalidConfig(format!("bin count must be at least 2, got {k}")));
    }
    let binnings: Vec<Binning> = (0..ds.m())
        .map(|j| match &ds.features[j].kind {
            FeatureKind::Categorical { values } => categorical_binning(values),
            FeatureKind::Continuous { .. } => quantile_binning(&ds.column(j), k),
        })
        .collect();
    let bins = ds
        .rows
        .iter()
        .map(|r| r.iter().zip(&binnings).map(|(&v, b)| b.bin(v)).collect())
        .collect();
    Ok(DiscretizedDataset { binnings, bins })
}

pub fn quantile_binning(values: &[f64], k: usize) -> Binning {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let (lo, hi) = (sorted[0], sorted[n - 1]);
    let above_min = sorted.iter().copied().find(|&v| v > lo);
    let mut cuts: Vec<f64> = Vec::new();
    for j in 1..k {
        let mut c = sorted[(j * n / k).min(n - 1)];
        if c <= lo {
            match above_min {
                Some(v) => c = v,
                None => continue,
            }
        }
        if cuts.last() != Some(&c) {
            cuts.push(c);
        }
    }
    Binning { cuts, lo, hi, codes: None }
}

fn categorical_binning(values: &[f64]) -> Binning {
    let mut codes = values.to_vec();
    codes.sort_by(f64::total_cmp);
    let cuts = codes.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    Binning {
        cuts,
        lo: codes[0],
        hi: codes[codes.len() - 1],
        codes: Some(codes),
    }
}

/// Dirichlet-smoothed conditional tables for the edge set of `structure`:
/// `(N(x_i, pa) + α) / (N(pa) + α·k_i)`, uniform for parent configurations
/// never observed.
pub fn estimate_cpds(
    dd: &DiscretizedDataset,
    structure: &RelationshipGraph,
    alpha: f64,
    max_configurations: usize,
) -> Result<RelationshipGraph, LearnError> {
    if !(alpha >= 0.0) {
        return Err(LearnError::InvalidConfig("alpha must be non-negative".into()));
    }
    structure.validate()?;
    let m = structure.m();
    let mut g = RelationshipGraph {
        mode: GraphMode::Cpd,
        binnings: dd.binnings.clone(),
        cpds: Vec::with_capacity(m),
        ..structure.clone()
    };
    for i in 0..m {
        let parents = structure.parents(i);
        let rows = parents
            .iter()
            .try_fold(1usize, |acc, &p| acc.checked_mul(dd.k(p)))
            .filter(|&r| r <= max_configurations)
            .ok_or_else(|| LearnError::TooManyConfigurations {
                node: structure.nodes[i].clone(),
                cap: max_configurations,
            })?;
        let ki = dd.k(i);
        let mut counts = vec![vec![0usize; ki]; rows];
        for r in &dd.bins {
            let cfg = g.parent_config(&parents, |p| r[p]);
            counts[cfg][r[i]] += 1;
        }
        let table = counts
            .into_iter()
            .map(|row| {
                let total: usize = row.iter().sum();
                let denom = total as f64 + alpha * ki as f64;
                if denom <= 0.0 {
                    vec![1.0 / ki as f64; ki]
                } else {
                    row.iter().map(|&c| (c as f64 + alpha) / denom).collect()
                }
            })
            .collect();
        g.cpds.push(Cpd { node: i, parents, table });
    }
    g.validate()?;
    Ok(g)
}
