use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::LearnError;
use crate::data::Dataset;
use crate::graph::{Edge, RelationshipGraph};

const K1: f64 = 79.047;
const K2: f64 = 7.4129;
const GAMMA: f64 = 0.37457;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LingamResult {
    /// Permutation of all features. Features excluded from learning
    /// (categorical or constant) come last, in index order.
    pub causal_order: Vec<usize>,
    /// `b[i][j]` is the weight of edge `j → i`, pruned.
    pub b: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
    /// Variance of each node's regression residual (of the node itself for roots).
    pub residual_variances: Vec<f64>,
    pub excluded: Vec<usize>,
}

impl LingamResult {
    pub fn to_graph(&self, nodes: Vec<String>) -> RelationshipGraph {
        let m = nodes.len();
        let edges = (0..m)
            .flat_map(|i| (0..m).map(move |j| (j, i)))
            .filter(|&(j, i)| self.b[i][j] != 0.0)
            .map(|(j, i)| Edge::learned(j, i, self.b[i][j]))
            .collect();
        let mut g = RelationshipGraph::with_edges(nodes, edges);
        g.intercepts = self.intercepts.clone();
        g
    }
}

/// DirectLiNGAM on the min-max normalized data.
///
/// The order is built greedily: at each step the remaining variable whose
/// pairwise likelihood-ratio statistics (log-cosh negentropy approximation)
/// indicate the least dependence on the others' residuals is taken as the
/// next exogenous one and regressed out of the rest. Weights are then fitted
/// by least squares on each node's predecessors, pruned below
/// `prune_threshold` in magnitude, and refitted on the surviving parents.
pub fn direct_lingam(ds: &Dataset, prune_threshold: f64) -> Result<LingamResult, LearnError> {
    let m = ds.m();
    if m < 2 {
        return Err(LearnError::TooFewFeatures(m));
    }
    if ds.n() < m + 2 {
        return Err(LearnError::TooFewRows { n: ds.n(), m });
    }
    if !(prune_threshold >= 0.0) {
        return Err(LearnError::InvalidConfig("prune threshold must be non-negative".into()));
    }
    let norm = ds.normalize();
    let cols: Vec<Vec<f64>> = (0..m).map(|j| norm.column(j)).collect();
    let mut usable = Vec::new();
    let mut excluded = Vec::new();
    for j in 0..m {
        if ds.features[j].is_categorical() {
            excluded.push(j);
        } else if variance(&cols[j]) <= 1e-12 {
            log::warn!("feature `{}` is constant and is left out of structure learning", ds.features[j].name);
            excluded.push(j);
        } else {
            usable.push(j);
        }
    }

    let mut order = causal_order(&cols, &usable);
    let (b, intercepts, residual_variances) = fit_weights(&cols, &order, prune_threshold);
    order.extend(&excluded);
    Ok(LingamResult {
        causal_order: order,
        b,
        intercepts,
        residual_variances,
        excluded,
    })
}

fn causal_order(cols: &[Vec<f64>], usable: &[usize]) -> Vec<usize> {
    let mut x: Vec<Vec<f64>> = cols.to_vec();
    let mut remaining = usable.to_vec();
    let mut order = Vec::with_capacity(usable.len());
    while !remaining.is_empty() {
        let chosen = if remaining.len() == 1 {
            remaining[0]
        } else {
            let std: Vec<Vec<f64>> = remaining.iter().map(|&i| standardize(&x[i])).collect();
            let scores: Vec<f64> = (0..remaining.len())
                .into_par_iter()
                .map(|a| {
                    let mut total = 0.0;
                    for b in 0..remaining.len() {
                        if a != b {
                            total += diff_mutual_info(&std[a], &std[b]).min(0.0).powi(2);
                        }
                    }
                    -total
                })
                .collect();
            // First maximum wins, so ties go to the lowest feature index.
            let mut best = 0;
            for (a, &s) in scores.iter().enumerate() {
                if s > scores[best] {
                    best = a;
                }
            }
            remaining[best]
        };
        for &i in &remaining {
            if i != chosen {
                x[i] = residual(&x[i], &x[chosen]);
            }
        }
        remaining.retain(|&i| i != chosen);
        order.push(chosen);
    }
    order
}

/// Likelihood-ratio statistic for `xi → xj` against `xj → xi`; negative
/// values count as evidence against `xi` being exogenous relative to `xj`.
fn diff_mutual_info(xi: &[f64], xj: &[f64]) -> f64 {
    let ri = residual(xi, xj);
    let rj = residual(xj, xi);
    (entropy(xj) + entropy(&standardize(&ri))) - (entropy(xi) + entropy(&standardize(&rj)))
}

/// Maximum-entropy approximation of differential entropy for a unit-variance sample.
pub(crate) fn entropy(u: &[f64]) -> f64 {
    let n = u.len() as f64;
    let logcosh = u.iter().map(|v| log_cosh(*v)).sum::<f64>() / n;
    let gauss = u.iter().map(|v| v * (-v * v / 2.0).exp()).sum::<f64>() / n;
    (1.0 + (2.0 * std::f64::consts::PI).ln()) / 2.0 - K1 * (logcosh - GAMMA).powi(2) - K2 * gauss.powi(2)
}

fn log_cosh(v: f64) -> f64 {
    // Stable for large |v|: log cosh v = |v| + log(1 + e^{-2|v|}) − log 2.
    let a = v.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// `xi` with its least-squares projection on `xj` removed.
pub(crate) fn residual(xi: &[f64], xj: &[f64]) -> Vec<f64> {
    let beta = covariance(xi, xj) / variance(xj);
    xi.iter().zip(xj).map(|(a, b)| a - beta * b).collect()
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn covariance(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / x.len() as f64
}

pub(crate) fn variance(x: &[f64]) -> f64 {
    covariance(x, x)
}

fn standardize(x: &[f64]) -> Vec<f64> {
    let mu = mean(x);
    let sd = variance(x).sqrt();
    if sd <= 0.0 {
        return vec![0.0; x.len()];
    }
    x.iter().map(|v| (v - mu) / sd).collect()
}

type Weights = (Vec<Vec<f64>>, Vec<f64>, Vec<f64>);

fn fit_weights(cols: &[Vec<f64>], order: &[usize], threshold: f64) -> Weights {
    let m = cols.len();
    let mut b = vec![vec![0.0; m]; m];
    let mut intercepts = vec![0.0; m];
    let mut variances: Vec<f64> = cols.iter().map(|c| variance(c)).collect();
    for (k, &i) in order.iter().enumerate() {
        let preds = &order[..k];
        if preds.is_empty() {
            continue;
        }
        let (w, _) = ols(cols, i, preds);
        let kept: Vec<usize> = preds.iter().zip(&w).filter(|(_, w)| w.abs() >= threshold).map(|(&p, _)| p).collect();
        if kept.is_empty() {
            intercepts[i] = 0.0;
            continue;
        }
        let (w, c) = ols(cols, i, &kept);
        for (&p, &wp) in kept.iter().zip(&w) {
            b[i][p] = wp;
        }
        intercepts[i] = c;
        let res: Vec<f64> = (0..cols[i].len())
            .map(|r| cols[i][r] - c - kept.iter().zip(&w).map(|(&p, wp)| wp * cols[p][r]).sum::<f64>())
            .collect();
        variances[i] = res.iter().map(|v| v * v).sum::<f64>() / res.len() as f64;
    }
    (b, intercepts, variances)
}

/// Least squares of column `target` on `preds` with an intercept. Returns
/// the slopes (aligned with `preds`) and the intercept.
pub(crate) fn ols(cols: &[Vec<f64>], target: usize, preds: &[usize]) -> (Vec<f64>, f64) {
    let n = cols[target].len();
    let p = preds.len();
    let a = DMatrix::from_fn(n, p + 1, |r, c| if c < p { cols[preds[c]][r] } else { 1.0 });
    let y = DVector::from_column_slice(&cols[target]);
    let sol = a
        .svd(true, true)
        .solve(&y, 1e-12)
        .expect("svd computed with both factors");
    (sol.iter().take(p).copied().collect(), sol[p])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FeatureSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dataset(cols: Vec<Vec<f64>>) -> Dataset {
        let n = cols[0].len();
        let features = cols
            .iter()
            .enumerate()
            .map(|(j, c)| {
                let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                FeatureSpec::continuous(format!("x{j}"), lo, hi)
            })
            .collect();
        let rows = (0..n).map(|r| cols.iter().map(|c| c[r]).collect()).collect();
        Dataset::new(features, rows, vec![0; n], vec!["0".into()]).unwrap()
    }

    fn two_var(seed: u64, n: usize) -> Dataset {
        crate::synth::linear_pair(n, seed)
    }

    /// Slope of the fitted edge expressed in raw units.
    fn raw_slope(ds: &Dataset, res: &LingamResult, src: usize, dst: usize) -> f64 {
        res.b[dst][src] * ds.norm_stats.range(dst) / ds.norm_stats.range(src)
    }

    #[test]
    fn entropy_of_gaussian_sample_is_near_maximum() {
        // The approximation is built so that a standard Gaussian attains
        // (1 + ln 2π) / 2; evaluate it on a fine quantile grid.
        let n = 20_000;
        let u: Vec<f64> = (0..n)
            .map(|i| {
                let p = (i as f64 + 0.5) / n as f64;
                statrs::function::erf::erf_inv(2.0 * p - 1.0) * std::f64::consts::SQRT_2
            })
            .collect();
        let max = (1.0 + (2.0 * std::f64::consts::PI).ln()) / 2.0;
        assert!((entropy(&u) - max).abs() < 1e-3, "{}", entropy(&u));
        let uniform: Vec<f64> = (0..n).map(|i| ((i as f64 + 0.5) / n as f64 - 0.5) * 12f64.sqrt()).collect();
        assert!(entropy(&uniform) < max - 0.01);
    }

    #[test]
    fn residual_is_uncorrelated_with_regressor() {
        let x = vec![1.0, 2.0, 3.0, 4.0, 8.0];
        let y = vec![2.0, 1.0, 4.0, 3.0, 9.0];
        assert!(covariance(&residual(&y, &x), &x).abs() < 1e-12);
    }

    #[test]
    fn two_variable_direction_and_weight() {
        let ds = two_var(0, 2000);
        let res = direct_lingam(&ds, 0.05).unwrap();
        assert_eq!(res.causal_order, vec![0, 1]);
        let w = raw_slope(&ds, &res, 0, 1);
        assert!((1.85..=2.15).contains(&w), "{w}");
        assert_eq!(res.b[0][1], 0.0);
    }

    #[test]
    fn order_recovered_from_either_column_position() {
        let ds = two_var(1, 2000);
        let swapped = dataset(vec![ds.column(1), ds.column(0)]);
        let res = direct_lingam(&swapped, 0.05).unwrap();
        assert_eq!(res.causal_order, vec![1, 0]);
    }

    #[test]
    fn independent_features_have_no_edges() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a: Vec<f64> = (0..2000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..2000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let res = direct_lingam(&dataset(vec![a, b]), 0.05).unwrap();
        assert!(res.b.iter().flatten().all(|&w| w == 0.0));
    }

    #[test]
    fn too_few_rows_is_an_error() {
        let ds = dataset(vec![vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 2.0]]);
        assert!(matches!(direct_lingam(&ds, 0.05), Err(LearnError::TooFewRows { n: 3, m: 2 })));
    }

    #[test]
    fn constant_feature_is_isolated() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a: Vec<f64> = (0..500).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = a.iter().map(|v| v + rng.random_range(-0.1..0.1)).collect();
        let res = direct_lingam(&dataset(vec![a, vec![3.0; 500], b]), 0.05).unwrap();
        assert_eq!(res.excluded, vec![1]);
        assert_eq!(*res.causal_order.last().unwrap(), 1);
        assert!(res.b[1].iter().all(|&w| w == 0.0));
        assert!(res.b.iter().all(|row| row[1] == 0.0));
    }

    #[test]
    fn learned_graph_is_acyclic_and_strictly_triangular() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 1000;
        let e: Vec<Vec<f64>> = (0..4).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let x0 = e[0].clone();
        let x1: Vec<f64> = (0..n).map(|r| 1.5 * x0[r] + e[1][r]).collect();
        let x2: Vec<f64> = (0..n).map(|r| -0.8 * x1[r] + e[2][r]).collect();
        let x3: Vec<f64> = (0..n).map(|r| 0.7 * x0[r] + e[3][r]).collect();
        let res = direct_lingam(&dataset(vec![x2, x0, x3, x1]), 0.05).unwrap();
        let pos: Vec<usize> = (0..4).map(|i| res.causal_order.iter().position(|&o| o == i).unwrap()).collect();
        for i in 0..4 {
            for j in 0..4 {
                if res.b[i][j] != 0.0 {
                    assert!(pos[j] < pos[i]);
                }
            }
        }
        let g = res.to_graph((0..4).map(|i| format!("x{i}")).collect());
        assert!(g.validate().is_ok());
    }

    #[test]
    fn ols_recovers_exact_plane() {
        let cols = vec![vec![0.0, 1.0, 2.0, 3.0], vec![1.0, 0.0, 1.0, 5.0], vec![0.0; 4]];
        let mut cols = cols;
        cols[2] = (0..4).map(|r| 0.5 + 2.0 * cols[0][r] - cols[1][r]).collect();
        let (w, c) = ols(&cols, 2, &[0, 1]);
        assert!((w[0] - 2.0).abs() < 1e-10 && (w[1] + 1.0).abs() < 1e-10 && (c - 0.5).abs() < 1e-10);
    }
}
