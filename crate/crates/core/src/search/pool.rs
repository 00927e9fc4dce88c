use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{FeatureBounds, SearchError};
use crate::data::{Dataset, FeatureKind, Instance};
use crate::graph::{sample_from_graph, EmpiricalMarginals, RelationshipGraph};
use crate::oracle::{argmax, Oracle};

/// Grid resolution for the additive seeding branch.
pub const GRID_POINTS: usize = 32;

pub struct PoolInputs<'a> {
    pub ds: &'a Dataset,
    pub graph: Option<&'a RelationshipGraph>,
    pub oracle: &'a dyn Oracle,
    /// Query instance (raw or normalized).
    pub x: &'a Instance,
    pub desired: usize,
    pub size: usize,
    pub seed: u64,
    /// Allowed region per feature; `None` means every feature is free
    /// within its schema domain.
    pub bounds: Option<&'a [FeatureBounds]>,
}

/// Initial candidates for the search, as normalized instances.
///
/// Sources, with target shares 40/40/20: training rows the oracle assigns
/// to the desired class (nearest to the query first), ancestral samples from
/// the graph, and for additive oracles one copy of the query per free
/// feature with that feature moved to the grid value contributing most
/// toward the desired class. A short source hands its slots to the others.
/// When every source is empty the pool falls back to uniform samples.
pub fn build_candidate_pool(inp: &PoolInputs<'_>) -> Result<Vec<Instance>, SearchError> {
    let ds = inp.ds;
    let stats = &ds.norm_stats;
    let (x, _) = stats.normalize_instance(inp.x)?;
    let x = x.values;
    let norm = ds.normalize();
    let size = inp.size;

    let predicted = inp.oracle.predict_proba_batch(
        &norm.rows.iter().map(|r| Instance::normalized(r.clone())).collect::<Vec<_>>(),
    )?;
    let mut rows: Vec<&Vec<f64>> = norm
        .rows
        .iter()
        .zip(&predicted)
        .filter(|(_, p)| argmax(p) == inp.desired)
        .map(|(r, _)| r)
        .collect();
    let dist = |r: &[f64]| r.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    rows.sort_by(|a, b| dist(a).total_cmp(&dist(b)));
    let training: Vec<Vec<f64>> = rows.into_iter().cloned().collect();

    let sampled = match inp.graph {
        Some(g) if size > 0 => {
            let marginals = EmpiricalMarginals::fit(g, &norm.rows)?;
            sample_from_graph(g, size, &marginals, inp.seed)?
                .into_iter()
                .map(|i| i.values)
                .collect()
        }
        _ => Vec::new(),
    };

    let seeded = additive_seeds(inp, &x);

    let quota_a = (size as f64 * 0.4).round() as usize;
    let quota_b = (size as f64 * 0.4).round() as usize;
    let quota_c = size.saturating_sub(quota_a + quota_b);
    let sources = [training, sampled, seeded];
    let quotas = [quota_a, quota_b, quota_c];

    let mut pool: Vec<Vec<f64>> = Vec::with_capacity(size);
    let mut taken = [0usize; 3];
    let push = |pool: &mut Vec<Vec<f64>>, c: &Vec<f64>| {
        if *c != x && !pool.contains(c) {
            pool.push(c.clone());
            true
        } else {
            false
        }
    };
    for (s, src) in sources.iter().enumerate() {
        let mut got = 0;
        while taken[s] < src.len() && got < quotas[s] {
            got += usize::from(push(&mut pool, &src[taken[s]]));
            taken[s] += 1;
        }
    }
    for (s, src) in sources.iter().enumerate() {
        while pool.len() < size && taken[s] < src.len() {
            push(&mut pool, &src[taken[s]]);
            taken[s] += 1;
        }
    }

    if pool.is_empty() && size > 0 {
        log::warn!("candidate pool is empty (no desired-class rows, no graph, non-additive oracle); using uniform samples");
        let mut rng = ChaCha8Rng::seed_from_u64(inp.seed);
        for _ in 0..size {
            let c: Vec<f64> = ds
                .features
                .iter()
                .map(|f| match &f.kind {
                    FeatureKind::Continuous { .. } => rng.random_range(0.0..=1.0),
                    FeatureKind::Categorical { values } => values[rng.random_range(0..values.len())],
                })
                .collect();
            push(&mut pool, &c);
        }
    }
    pool.truncate(size);
    Ok(pool.into_iter().map(Instance::normalized).collect())
}

/// One candidate per free feature: the query with that feature set to the
/// grid value maximizing `contribution(d) − max_{c≠d} contribution(c)`.
fn additive_seeds(inp: &PoolInputs<'_>, x: &[f64]) -> Vec<Vec<f64>> {
    let Some(model) = inp.oracle.additive() else {
        return Vec::new();
    };
    let ds = inp.ds;
    let stats = &ds.norm_stats;
    let classes = inp.oracle.class_count();
    let d = inp.desired;
    let mut out = Vec::new();
    for (j, spec) in ds.features.iter().enumerate() {
        let grid: Vec<f64> = match inp.bounds.map(|b| &b[j]) {
            Some(FeatureBounds::Fixed) => continue,
            Some(FeatureBounds::Interval { min, max }) => linspace(*min, *max),
            Some(FeatureBounds::Choices { values }) => values.clone(),
            None => match &spec.kind {
                _ if spec.locked => continue,
                FeatureKind::Continuous { min, max } => linspace(*min, *max),
                FeatureKind::Categorical { values } => values.clone(),
            },
        };
        let margin = |v: f64| {
            let own = model.contribution(d, j, v);
            let rival = (0..classes)
                .filter(|&c| c != d)
                .map(|c| model.contribution(c, j, v))
                .fold(f64::NEG_INFINITY, f64::max);
            own - rival
        };
        let best = grid
            .iter()
            .copied()
            .fold((f64::NEG_INFINITY, f64::NAN), |acc, v| {
                let s = margin(v);
                if s > acc.0 {
                    (s, v)
                } else {
                    acc
                }
            })
            .1;
        if best.is_nan() {
            continue;
        }
        let mut c = x.to_vec();
        c[j] = stats.normalize_value(j, best);
        if c[j] != x[j] {
            out.push(c);
        }
    }
    out
}

fn linspace(lo: f64, hi: f64) -> Vec<f64> {
    (0..GRID_POINTS)
        .map(|i| lo + (hi - lo) * i as f64 / (GRID_POINTS - 1) as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::testdata::{blobs, dataset};
    use crate::oracle::{fit_logistic, LogisticConfig, LogisticModel};
    use crate::structlearn::{learn_graph, LearnConfig};

    fn inputs<'a>(ds: &'a Dataset, oracle: &'a dyn Oracle, x: &'a Instance, graph: Option<&'a RelationshipGraph>) -> PoolInputs<'a> {
        PoolInputs { ds, graph, oracle, x, desired: 1, size: 40, seed: 3, bounds: None }
    }

    #[test]
    fn logistic_seeds_change_exactly_one_feature() {
        let ds = blobs(200, 1);
        let model = fit_logistic(&ds, &LogisticConfig::default()).unwrap();
        let x = Instance::raw(ds.rows[0].clone());
        let seeds = additive_seeds(&inputs(&ds, &model, &x, None), &ds.norm_stats.normalize_instance(&x).unwrap().0.values);
        assert_eq!(seeds.len(), 2);
        let xn = ds.norm_stats.normalize_instance(&x).unwrap().0.values;
        for s in &seeds {
            assert_eq!(s.iter().zip(&xn).filter(|(a, b)| a != b).count(), 1);
        }
    }

    #[test]
    fn positive_weight_seeds_the_grid_maximum() {
        let ds = blobs(200, 2);
        let model = fit_logistic(&ds, &LogisticConfig::default()).unwrap();
        // Hand check on the fitted weights: the class-1 margin grows with x0.
        let LogisticModel { weights, .. } = &model;
        assert!(weights[1][0] - weights[0][0] > 0.0);
        let x = Instance::raw(ds.rows[0].clone());
        let xn = ds.norm_stats.normalize_instance(&x).unwrap().0.values;
        let seeds = additive_seeds(&inputs(&ds, &model, &x, None), &xn);
        let first = seeds.iter().find(|s| s[0] != xn[0]).unwrap();
        assert!((first[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pool_without_desired_rows_is_still_filled() {
        // Keep only class-0 rows (even indices of the blob generator), so
        // the training branch is empty while graph and seeds remain.
        let ds = blobs(200, 3);
        let model = fit_logistic(&ds, &LogisticConfig::default()).unwrap();
        let graph = learn_graph(&ds, &LearnConfig::default(), None).unwrap().graph;
        let x = Instance::raw(ds.rows[0].clone());
        let mut inp = inputs(&ds, &model, &x, Some(&graph));
        inp.desired = 1;
        let only0 = dataset(ds.rows.iter().take(100).step_by(2).cloned().collect(), vec![0; 50]);
        inp.ds = &only0;
        assert!(only0.rows.iter().all(|r| model.predict(&Instance::raw(r.clone())).unwrap() == 0));
        let pool = build_candidate_pool(&inp).unwrap();
        assert!(!pool.is_empty());
    }

    #[test]
    fn pool_has_requested_size_and_no_duplicates() {
        let ds = blobs(200, 4);
        let model = fit_logistic(&ds, &LogisticConfig::default()).unwrap();
        let graph = learn_graph(&ds, &LearnConfig::default(), None).unwrap().graph;
        let x = Instance::raw(ds.rows[0].clone());
        let pool = build_candidate_pool(&inputs(&ds, &model, &x, Some(&graph))).unwrap();
        assert_eq!(pool.len(), 40);
        for (i, a) in pool.iter().enumerate() {
            assert!(pool[i + 1..].iter().all(|b| b.values != a.values));
        }
    }

    #[test]
    fn empty_sources_fall_back_to_uniform() {
        struct Const;
        impl Oracle for Const {
            fn class_count(&self) -> usize {
                2
            }
            fn kind(&self) -> crate::oracle::OracleKind {
                crate::oracle::OracleKind::External
            }
            fn predict_proba_batch(&self, i: &[Instance]) -> Result<Vec<Vec<f64>>, crate::oracle::OracleError> {
                Ok(vec![vec![1.0, 0.0]; i.len()])
            }
        }
        let ds = blobs(50, 5);
        let x = Instance::raw(ds.rows[0].clone());
        let pool = build_candidate_pool(&inputs(&ds, &Const, &x, None)).unwrap();
        assert_eq!(pool.len(), 40);
        assert!(pool.iter().all(|p| p.values.iter().all(|v| (0.0..=1.0).contains(v))));
    }
}
