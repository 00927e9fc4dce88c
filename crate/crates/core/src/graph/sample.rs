use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{validate_dag, GraphError, GraphMode, RelationshipGraph};
use crate::data::Instance;

/// Training columns and per-node linear residuals, both in normalized space.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalMarginals {
    pub columns: Vec<Vec<f64>>,
    /// Residuals of each child under the graph's linear model; empty for roots.
    pub residuals: Vec<Vec<f64>>,
}

impl EmpiricalMarginals {
    /// `rows` must be normalized and aligned with the graph's nodes.
    pub fn fit(g: &RelationshipGraph, rows: &[Vec<f64>]) -> Result<Self, GraphError> {
        let m = g.m();
        if let Some(bad) = rows.iter().find(|r| r.len() != m) {
            return Err(GraphError::DimensionMismatch { expected: m, actual: bad.len() });
        }
        let columns: Vec<Vec<f64>> = (0..m).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
        let residuals = (0..m)
            .map(|i| {
                let incoming: Vec<_> = g.edges.iter().filter(|e| e.dst == i).collect();
                if incoming.is_empty() {
                    return Vec::new();
                }
                rows.iter()
                    .map(|r| r[i] - g.intercept(i) - incoming.iter().map(|e| e.weight * r[e.src]).sum::<f64>())
                    .collect()
            })
            .collect();
        Ok(Self { columns, residuals })
    }

    /// Mean squared residual per child node (`None` for roots).
    pub fn residual_variance(&self, node: usize) -> Option<f64> {
        let r = &self.residuals[node];
        (!r.is_empty()).then(|| r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64)
    }
}

/// Ancestral sampling in topological order. Roots are resampled from their
/// training column. Linear children get their parents' weighted sum plus a
/// resampled training residual; CPD children draw a bin from the conditional
/// row, then a value uniformly inside it (or the bin's category code).
pub fn sample_from_graph(
    g: &RelationshipGraph,
    n: usize,
    marginals: &EmpiricalMarginals,
    seed: u64,
) -> Result<Vec<Instance>, GraphError> {
    let order = validate_dag(g)?;
    let m = g.m();
    if marginals.columns.len() != m {
        return Err(GraphError::DimensionMismatch { expected: m, actual: marginals.columns.len() });
    }
    let parents: Vec<Vec<usize>> = (0..m).map(|i| g.parents(i)).collect();
    let weights = g.weights();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut v = vec![0.0; m];
        for &i in &order {
            v[i] = if parents[i].is_empty() {
                pick(&marginals.columns[i], &mut rng)
            } else {
                match g.mode {
                    GraphMode::Linear => {
                        let noise = if marginals.residuals[i].is_empty() {
                            0.0
                        } else {
                            pick(&marginals.residuals[i], &mut rng)
                        };
                        g.intercept(i) + parents[i].iter().map(|&p| weights[i][p] * v[p]).sum::<f64>() + noise
                    }
                    GraphMode::Cpd => {
                        let cpd = &g.cpds[i];
                        let bins: Vec<usize> = (0..m).map(|j| g.binnings[j].bin(v[j])).collect();
                        let row = &g.cpds[i].table[g.parent_config(&cpd.parents, |p| bins[p])];
                        let b = draw(row, &mut rng);
                        let binning = &g.binnings[i];
                        match &binning.codes {
                            Some(codes) => codes[b],
                            None => {
                                let (lo, hi) = binning.bounds(b);
                                if hi > lo {
                                    rng.random_range(lo..hi)
                                } else {
                                    lo
                                }
                            }
                        }
                    }
                }
            };
        }
        out.push(Instance::normalized(v));
    }
    Ok(out)
}

fn pick(values: &[f64], rng: &mut ChaCha8Rng) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values[rng.random_range(0..values.len())]
}

fn draw(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}
