//! Sequential generation of diverse counterfactuals.
//!
//! For each of the `n` requested counterfactuals a TPE run minimizes the
//! composite loss over the free features. The run is warm-started with a
//! shared candidate pool, and already accepted counterfactuals feed the
//! diversity term of later runs. Locked features never enter the search
//! space, so they are preserved by construction.

mod diff;
mod pool;

pub use diff::{explanation_diff, render_diff, DiffRow, DiffTable};
pub use pool::{build_candidate_pool, PoolInputs, GRID_POINTS};

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, Dataset, FeatureKind, Instance, Monotonic, NormStats};
use crate::graph::{GraphError, RelationshipGraph};
use crate::loss::{
    diversity_loss, DiversityKernelConfig, LossBreakdown, LossContext, LossError, LossWeights, DEFAULT_SPARSITY_TOL,
};
use crate::oracle::{argmax, Oracle, OracleError};
use crate::tpe::{optimize_from, Dimension, OptimizeError, SearchSpace, TpeConfig, TpeError, TrialHistory};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("empty search space: every feature is locked or fixed by its constraints")]
    EmptySearchSpace,
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Tpe(#[from] TpeError),
}

impl From<OptimizeError<LossError>> for SearchError {
    fn from(e: OptimizeError<LossError>) -> Self {
        match e {
            OptimizeError::Tpe(e) => e.into(),
            OptimizeError::Objective { source, .. } => source.into(),
        }
    }
}

/// Per-feature restriction layered on top of the dataset schema. Bounds are
/// raw-space values.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureConstraint {
    pub feature: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monotonic: Option<Monotonic>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplainRequest {
    /// Query instance in raw space.
    pub instance: Vec<f64>,
    pub desired: usize,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub weights: LossWeights,
    #[serde(default)]
    pub locks: Vec<String>,
    #[serde(default)]
    pub constraints: Vec<FeatureConstraint>,
    /// TPE trials per counterfactual, excluding the warm-start pool.
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_pool_size")]
    pub pool_size: usize,
    #[serde(default)]
    pub kernel: DiversityKernelConfig,
    /// Optimizer settings; the seed field is replaced by one derived from `seed`.
    #[serde(default)]
    pub tpe: TpeConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_weights: Option<Vec<f64>>,
    #[serde(default = "default_tol")]
    pub sparsity_tol: f64,
}

fn default_n() -> usize {
    1
}

fn default_budget() -> usize {
    300
}

fn default_pool_size() -> usize {
    40
}

fn default_tol() -> f64 {
    DEFAULT_SPARSITY_TOL
}

impl ExplainRequest {
    pub fn new(instance: Vec<f64>, desired: usize) -> Self {
        Self {
            instance,
            desired,
            n: default_n(),
            weights: LossWeights::default(),
            locks: Vec::new(),
            constraints: Vec::new(),
            budget: default_budget(),
            seed: 0,
            pool_size: default_pool_size(),
            kernel: DiversityKernelConfig::default(),
            tpe: TpeConfig::default(),
            feature_weights: None,
            sparsity_tol: default_tol(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureChange {
    pub feature: String,
    pub index: usize,
    pub from: f64,
    pub to: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Counterfactual {
    /// Raw-space values.
    pub values: Vec<f64>,
    pub normalized: Vec<f64>,
    pub predicted_class: usize,
    pub desired_probability: f64,
    /// Loss components at acceptance time (diversity against the earlier CFs).
    pub loss: LossBreakdown,
    pub changes: Vec<FeatureChange>,
}

/// A search iteration whose best point still had a positive hinge.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailedAttempt {
    pub iteration: usize,
    pub values: Vec<f64>,
    pub hinge: f64,
    pub desired_probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplanationSet {
    pub feature_names: Vec<String>,
    /// Raw-space query instance.
    pub query: Vec<f64>,
    pub desired: usize,
    pub requested: usize,
    pub counterfactuals: Vec<Counterfactual>,
    pub failures: Vec<FailedAttempt>,
    /// `1 − det K` over the accepted set.
    pub diversity_loss: f64,
    pub duration_seconds: f64,
}

/// Allowed region of one feature, in raw space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FeatureBounds {
    Fixed,
    Interval { min: f64, max: f64 },
    Choices { values: Vec<f64> },
}

impl FeatureBounds {
    pub fn is_free(&self) -> bool {
        !matches!(self, FeatureBounds::Fixed)
    }

    pub fn contains(&self, v: f64) -> bool {
        match self {
            FeatureBounds::Fixed => true,
            FeatureBounds::Interval { min, max } => (*min..=*max).contains(&v),
            FeatureBounds::Choices { values } => values.contains(&v),
        }
    }
}

/// Resolves schema locks, request locks, range overrides and monotonic
/// directions into one region per feature. `x` is the raw query.
pub fn feature_bounds(
    ds: &Dataset,
    x: &[f64],
    locks: &[String],
    constraints: &[FeatureConstraint],
) -> Result<Vec<FeatureBounds>, SearchError> {
    for name in locks.iter().chain(constraints.iter().map(|c| &c.feature)) {
        if ds.feature_index(name).is_none() {
            return Err(SearchError::UnknownFeature(name.clone()));
        }
    }
    let stats = &ds.norm_stats;
    let mut out = Vec::with_capacity(ds.m());
    for (j, spec) in ds.features.iter().enumerate() {
        if spec.locked || locks.contains(&spec.name) {
            out.push(FeatureBounds::Fixed);
            continue;
        }
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        let mut monotonic = spec.monotonic;
        for c in constraints.iter().filter(|c| c.feature == spec.name) {
            if let (Some(a), Some(b)) = (c.min, c.max) {
                if a > b {
                    return Err(SearchError::InvalidRequest(format!("constraint on `{}` has min > max", spec.name)));
                }
            }
            lo = lo.max(c.min.unwrap_or(f64::NEG_INFINITY));
            hi = hi.min(c.max.unwrap_or(f64::INFINITY));
            monotonic = c.monotonic.unwrap_or(monotonic);
        }
        match monotonic {
            Monotonic::NonDecreasing => lo = lo.max(x[j]),
            Monotonic::NonIncreasing => hi = hi.min(x[j]),
            Monotonic::None => {}
        }
        let bounds = match &spec.kind {
            FeatureKind::Continuous { min, max } => {
                let (a, b) = (lo.max(*min), hi.min(*max));
                if stats.range(j) <= 0.0 || a >= b {
                    if a > b {
                        log::warn!("feature `{}` has an empty allowed range; keeping the query value", spec.name);
                    }
                    FeatureBounds::Fixed
                } else {
                    FeatureBounds::Interval { min: a, max: b }
                }
            }
            FeatureKind::Categorical { values } => {
                let mut allowed: Vec<f64> = values.iter().copied().filter(|v| (lo..=hi).contains(v)).collect();
                allowed.sort_by(f64::total_cmp);
                if allowed.is_empty() || allowed == [x[j]] {
                    if allowed.is_empty() {
                        log::warn!("feature `{}` has no allowed category; keeping the query value", spec.name);
                    }
                    FeatureBounds::Fixed
                } else {
                    FeatureBounds::Choices { values: allowed }
                }
            }
        };
        out.push(bounds);
    }
    Ok(out)
}

/// Maps between TPE parameter vectors over the free features and full
/// normalized/raw counterfactuals.
struct Layout<'a> {
    stats: &'a NormStats,
    bounds: Vec<FeatureBounds>,
    free: Vec<usize>,
    x_raw: Vec<f64>,
    x_norm: Vec<f64>,
    tol: f64,
}

impl Layout<'_> {
    fn space(&self, names: &[String]) -> SearchSpace {
        let dims = self
            .free
            .iter()
            .map(|&j| match &self.bounds[j] {
                FeatureBounds::Interval { min, max } => {
                    let (lo, hi) = (self.stats.normalize_value(j, *min), self.stats.normalize_value(j, *max));
                    let d = Dimension::continuous(names[j].clone(), lo, hi);
                    if (lo..=hi).contains(&self.x_norm[j]) {
                        d.with_anchor(self.x_norm[j])
                    } else {
                        d
                    }
                }
                FeatureBounds::Choices { values } => Dimension::categorical(names[j].clone(), values.clone()),
                FeatureBounds::Fixed => unreachable!("fixed features are not free"),
            })
            .collect();
        SearchSpace::new(dims)
    }

    /// Projects a normalized candidate onto the free dimensions, clamping
    /// into intervals and snapping categories to the nearest allowed code.
    fn project(&self, cand: &[f64]) -> Vec<f64> {
        self.free
            .iter()
            .map(|&j| match &self.bounds[j] {
                FeatureBounds::Interval { min, max } => {
                    cand[j].clamp(self.stats.normalize_value(j, *min), self.stats.normalize_value(j, *max))
                }
                FeatureBounds::Choices { values } => values
                    .iter()
                    .copied()
                    .min_by(|a, b| (a - cand[j]).abs().total_cmp(&(b - cand[j]).abs()))
                    .expect("non-empty choices"),
                FeatureBounds::Fixed => unreachable!("fixed features are not free"),
            })
            .collect()
    }

    /// Raw values for a parameter vector. Unchanged features (within the
    /// sparsity tolerance) copy the query bit for bit; changed ones are
    /// denormalized and clamped to their interval.
    fn raw(&self, params: &[f64]) -> Vec<f64> {
        let mut raw = self.x_raw.clone();
        for (&j, &p) in self.free.iter().zip(params) {
            raw[j] = match &self.bounds[j] {
                FeatureBounds::Interval { min, max } => {
                    if (p - self.x_norm[j]).abs() <= self.tol {
                        self.x_raw[j]
                    } else {
                        self.stats.denormalize_value(j, p).clamp(*min, *max)
                    }
                }
                _ => p,
            };
        }
        raw
    }

    fn normalized(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .enumerate()
            .map(|(j, &v)| if v == self.x_raw[j] { self.x_norm[j] } else { self.stats.normalize_value(j, v) })
            .collect()
    }

    fn cf(&self, params: &[f64]) -> Vec<f64> {
        let mut cf = self.x_norm.clone();
        for (&j, &p) in self.free.iter().zip(params) {
            cf[j] = p;
        }
        cf
    }
}

/// Shared validation and loss plumbing for one request.
struct Scorer<'a> {
    req: &'a ExplainRequest,
    ds: &'a Dataset,
    oracle: &'a dyn Oracle,
    graph: Option<&'a RelationshipGraph>,
    x_norm: Vec<f64>,
}

impl<'a> Scorer<'a> {
    fn new(
        req: &'a ExplainRequest,
        ds: &'a Dataset,
        oracle: &'a dyn Oracle,
        graph: Option<&'a RelationshipGraph>,
    ) -> Result<Self, SearchError> {
        let m = ds.m();
        if req.instance.len() != m {
            return Err(DataError::DimensionMismatch { expected: m, actual: req.instance.len() }.into());
        }
        if req.instance.iter().any(|v| !v.is_finite()) {
            return Err(SearchError::InvalidRequest("instance contains non-finite values".into()));
        }
        if req.desired >= oracle.class_count() {
            return Err(LossError::DesiredOutOfRange { desired: req.desired, classes: oracle.class_count() }.into());
        }
        if req.n == 0 {
            return Err(SearchError::InvalidRequest("n must be at least 1".into()));
        }
        if req.budget == 0 {
            return Err(SearchError::InvalidRequest("budget must be at least 1".into()));
        }
        if !(req.sparsity_tol >= 0.0) {
            return Err(SearchError::InvalidRequest("sparsity_tol must be non-negative".into()));
        }
        req.weights.validate()?;
        req.kernel.validate()?;
        req.tpe.validate()?;
        if let Some(w) = &req.feature_weights {
            if w.len() != m {
                return Err(LossError::DimensionMismatch(w.len(), m).into());
            }
        }
        if let Some(g) = graph {
            if g.m() != m {
                return Err(GraphError::DimensionMismatch { expected: m, actual: g.m() }.into());
            }
            if g.nodes.iter().zip(&ds.features).any(|(n, f)| *n != f.name) {
                return Err(GraphError::NodeSetMismatch.into());
            }
        }
        let (x, _) = ds.norm_stats.normalize_instance(&Instance::raw(req.instance.clone()))?;
        Ok(Self { req, ds, oracle, graph, x_norm: x.values })
    }

    fn context<'b>(&'b self, existing: &'b [Vec<f64>]) -> LossContext<'b> {
        LossContext {
            x: &self.x_norm,
            existing,
            graph: self.graph,
            desired: self.req.desired,
            weights: self.req.weights,
            feature_weights: self.req.feature_weights.as_deref(),
            tol: self.req.sparsity_tol,
            kernel: self.req.kernel,
        }
    }

    fn probas(&self, cfs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, OracleError> {
        let inst: Vec<Instance> = cfs.iter().map(|c| Instance::normalized(c.clone())).collect();
        self.oracle.predict_proba_batch(&inst)
    }

    fn describe(&self, raw: Vec<f64>, normalized: Vec<f64>, existing: &[Vec<f64>]) -> Result<Counterfactual, SearchError> {
        let probas = self.probas(std::slice::from_ref(&normalized))?.remove(0);
        let loss = self.context(existing).evaluate(&normalized, &probas)?;
        let changes = raw
            .iter()
            .enumerate()
            .filter(|&(j, v)| *v != self.req.instance[j])
            .map(|(j, &v)| FeatureChange {
                feature: self.ds.features[j].name.clone(),
                index: j,
                from: self.req.instance[j],
                to: v,
            })
            .collect();
        Ok(Counterfactual {
            values: raw,
            normalized,
            predicted_class: argmax(&probas),
            desired_probability: probas[self.req.desired],
            loss,
            changes,
        })
    }

    /// Accepts `cf` when its hinge is zero, otherwise records a failure.
    fn admit(
        &self,
        iteration: usize,
        cf: Counterfactual,
        accepted: &mut Vec<Counterfactual>,
        failures: &mut Vec<FailedAttempt>,
    ) {
        if cf.loss.hinge > 0.0 {
            failures.push(FailedAttempt {
                iteration,
                values: cf.values,
                hinge: cf.loss.hinge,
                desired_probability: cf.desired_probability,
            });
        } else {
            accepted.push(cf);
        }
    }

    fn finish(&self, counterfactuals: Vec<Counterfactual>, failures: Vec<FailedAttempt>, started: Instant) -> ExplanationSet {
        let norm: Vec<Vec<f64>> = counterfactuals.iter().map(|c| c.normalized.clone()).collect();
        ExplanationSet {
            feature_names: self.ds.features.iter().map(|f| f.name.clone()).collect(),
            query: self.req.instance.clone(),
            desired: self.req.desired,
            requested: self.req.n,
            diversity_loss: if norm.is_empty() { 0.0 } else { diversity_loss(&norm, &self.req.kernel) },
            counterfactuals,
            failures,
            duration_seconds: started.elapsed().as_secs_f64(),
        }
    }
}

fn iteration_seed(seed: u64, i: usize) -> u64 {
    seed ^ (i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Runs the full search for one request. `ds` supplies the schema,
/// normalization stats and training rows for the candidate pool.
pub fn generate_counterfactuals(
    req: &ExplainRequest,
    ds: &Dataset,
    oracle: &dyn Oracle,
    graph: Option<&RelationshipGraph>,
) -> Result<ExplanationSet, SearchError> {
    let started = Instant::now();
    let scorer = Scorer::new(req, ds, oracle, graph)?;
    let bounds = feature_bounds(ds, &req.instance, &req.locks, &req.constraints)?;
    let free: Vec<usize> = (0..ds.m()).filter(|&j| bounds[j].is_free()).collect();
    if free.is_empty() {
        return Err(SearchError::EmptySearchSpace);
    }
    let layout = Layout {
        stats: &ds.norm_stats,
        bounds,
        free,
        x_raw: req.instance.clone(),
        x_norm: scorer.x_norm.clone(),
        tol: req.sparsity_tol,
    };
    let names: Vec<String> = ds.features.iter().map(|f| f.name.clone()).collect();
    let space = layout.space(&names);

    let x_inst = Instance::raw(req.instance.clone());
    let pool = build_candidate_pool(&PoolInputs {
        ds,
        graph,
        oracle,
        x: &x_inst,
        desired: req.desired,
        size: req.pool_size,
        seed: req.seed,
        bounds: Some(&layout.bounds),
    })?;
    let mut warm: Vec<Vec<f64>> = Vec::new();
    for cand in &pool {
        let p = layout.project(&cand.values);
        if !warm.contains(&p) {
            warm.push(p);
        }
    }
    let warm_cfs: Vec<Vec<f64>> = warm.iter().map(|p| layout.cf(p)).collect();
    let warm_probas = if warm_cfs.is_empty() { Vec::new() } else { scorer.probas(&warm_cfs)? };

    let mut accepted: Vec<Counterfactual> = Vec::new();
    let mut failures = Vec::new();
    for i in 0..req.n {
        let existing: Vec<Vec<f64>> = accepted.iter().map(|c| c.normalized.clone()).collect();
        let ctx = scorer.context(&existing);
        let mut history = TrialHistory::new();
        for ((p, cf), probas) in warm.iter().zip(&warm_cfs).zip(&warm_probas) {
            history.push(p.clone(), ctx.evaluate(cf, probas)?.total);
        }
        let cfg = TpeConfig { seed: iteration_seed(req.seed, i), ..req.tpe.clone() };
        let result = optimize_from(
            |p: &[f64]| {
                let cf = layout.cf(p);
                let probas = oracle.predict_proba(&Instance::normalized(cf.clone()))?;
                Ok(ctx.evaluate(&cf, &probas)?.total)
            },
            &space,
            req.budget,
            &cfg,
            history,
        )?;
        // Best trial whose counterfactual is not already accepted.
        let mut order: Vec<usize> = (0..result.history.len()).collect();
        order.sort_by(|&a, &b| result.history.trials()[a].value.total_cmp(&result.history.trials()[b].value));
        let pick = order.into_iter().find_map(|t| {
            let raw = layout.raw(&result.history.trials()[t].params);
            (!accepted.iter().any(|c| c.values == raw)).then_some(raw)
        });
        let Some(raw) = pick else {
            log::warn!("iteration {i}: every evaluated point duplicates an accepted counterfactual");
            continue;
        };
        let normalized = layout.normalized(&raw);
        let cf = scorer.describe(raw, normalized, &existing)?;
        scorer.admit(i, cf, &mut accepted, &mut failures);
    }
    Ok(scorer.finish(accepted, failures, started))
}

/// Builds an [`ExplanationSet`] for counterfactuals produced elsewhere (for
/// example by an external generator), applying the same acceptance rule.
pub fn assess_counterfactuals(
    req: &ExplainRequest,
    ds: &Dataset,
    oracle: &dyn Oracle,
    graph: Option<&RelationshipGraph>,
    raw_cfs: &[Vec<f64>],
    duration_seconds: f64,
) -> Result<ExplanationSet, SearchError> {
    let scorer = Scorer::new(req, ds, oracle, graph)?;
    let started = Instant::now();
    let mut accepted = Vec::new();
    let mut failures = Vec::new();
    for (i, raw) in raw_cfs.iter().enumerate() {
        if raw.len() != ds.m() {
            return Err(DataError::DimensionMismatch { expected: ds.m(), actual: raw.len() }.into());
        }
        let existing: Vec<Vec<f64>> = accepted.iter().map(|c: &Counterfactual| c.normalized.clone()).collect();
        let normalized: Vec<f64> = raw
            .iter()
            .enumerate()
            .map(|(j, &v)| ds.norm_stats.normalize_value(j, v))
            .collect();
        let cf = scorer.describe(raw.clone(), normalized, &existing)?;
        scorer.admit(i, cf, &mut accepted, &mut failures);
    }
    let mut set = scorer.finish(accepted, failures, started);
    set.duration_seconds = duration_seconds;
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::testdata::blobs;
    use crate::oracle::{fit_logistic, LogisticConfig};
    use crate::structlearn::{learn_graph, LearnConfig};

    fn deep_class0(ds: &Dataset) -> Vec<f64> {
        // The class-0 training row farthest along the negative diagonal.
        (0..ds.n())
            .filter(|&r| ds.target[r] == 0)
            .map(|r| ds.rows[r].clone())
            .min_by(|a, b| (a[0] + a[1]).total_cmp(&(b[0] + b[1])))
            .unwrap()
    }

    #[test]
    fn blobs_counterfactual_flips_in_most_seeds() {
        let mut ok = 0;
        for seed in 0..10 {
            let ds = blobs(400, seed);
            let model = fit_logistic(&ds, &LogisticConfig::default()).unwrap();
            let graph = learn_graph(&ds, &LearnConfig::default(), None).unwrap().graph;
            let mut req = ExplainRequest::new(deep_class0(&ds), 1);
            req.seed = seed;
            let set = generate_counterfactuals(&req, &ds, &model, Some(&graph)).unwrap();
            if let Some(cf) = set.counterfactuals.first() {
                let p = model.predict_proba(&Instance::raw(cf.values.clone())).unwrap();
                ok += usize::from(p[1] > 0.5);
            }
        }
        assert!(ok >= 9, "{ok}/10");
    }

    #[test]
    fn all_locked_is_an_error() {
        let ds = blobs(100, 1);
        let model = fit_logistic(&ds, &LogisticConfig::default()).unwrap();
        let mut req = ExplainRequest::new(ds.rows[0].clone(), 1);
        req.locks = vec!["x0".into(), "x1".into()];
        let err = generate_counterfactuals(&req, &ds, &model, None).unwrap_err();
        assert!(matches!(err, SearchError::EmptySearchSpace));
        assert!(err.to_string().contains("empty search space"));
    }

    #[test]
    fn three_counterfactuals_are_distinct() {
        let ds = blobs(300, 3);
        let model = fit_logistic(&ds, &LogisticConfig::default()).unwrap();
        let mut req = ExplainRequest::new(deep_class0(&ds), 1);
        req.n = 3;
        req.budget = 150;
        let set = generate_counterfactuals(&req, &ds, &model, None).unwrap();
        assert!(set.counterfactuals.len() + set.failures.len() <= 3);
        for (a, ca) in set.counterfactuals.iter().enumerate() {
            for cb in &set.counterfactuals[a + 1..] {
                let d: f64 = ca.values.iter().zip(&cb.values).map(|(u, v)| (u - v).powi(2)).sum();
                assert!(d > 0.0);
            }
        }
    }

    #[test]
    fn locked_feature_is_bit_identical() {
        let ds = blobs(300, 4);
        let model = fit_logistic(&ds, &LogisticConfig::default()).unwrap();
        let x = deep_class0(&ds);
        let mut req = ExplainRequest::new(x.clone(), 1);
        req.locks = vec!["x1".into()];
        req.n = 2;
        req.budget = 100;
        let set = generate_counterfactuals(&req, &ds, &model, None).unwrap();
        for cf in &set.counterfactuals {
            assert_eq!(cf.values[1].to_bits(), x[1].to_bits());
        }
        for f in &set.failures {
            assert_eq!(f.values[1].to_bits(), x[1].to_bits());
        }
    }

    #[test]
    fn ranges_and_monotonic_directions_hold() {
        let ds = blobs(300, 5);
        let model = fit_logistic(&ds, &LogisticConfig::default()).unwrap();
        let x = deep_class0(&ds);
        let mut req = ExplainRequest::new(x.clone(), 1);
        req.n = 2;
        req.budget = 100;
        req.constraints = vec![
            FeatureConstraint { feature: "x0".into(), min: None, max: Some(3.0), monotonic: Some(Monotonic::NonDecreasing) },
            FeatureConstraint { feature: "x1".into(), min: Some(x[1] - 1.0), max: None, monotonic: None },
        ];
        let set = generate_counterfactuals(&req, &ds, &model, None).unwrap();
        for v in set.counterfactuals.iter().map(|c| &c.values).chain(set.failures.iter().map(|f| &f.values)) {
            assert!(v[0] >= x[0] && v[0] <= 3.0, "{v:?}");
            assert!(v[1] >= x[1] - 1.0);
            for (spec, &val) in ds.features.iter().zip(v) {
                assert!(spec.contains(val));
            }
        }
    }

    #[test]
    fn unknown_lock_is_rejected() {
        let ds = blobs(50, 1);
        let model = fit_logistic(&ds, &LogisticConfig::default()).unwrap();
        let mut req = ExplainRequest::new(ds.rows[0].clone(), 1);
        req.locks = vec!["nope".into()];
        assert!(matches!(generate_counterfactuals(&req, &ds, &model, None), Err(SearchError::UnknownFeature(_))));
    }

    #[test]
    fn same_seed_same_counterfactuals() {
        let ds = blobs(200, 6);
        let model = fit_logistic(&ds, &LogisticConfig::default()).unwrap();
        let mut req = ExplainRequest::new(deep_class0(&ds), 1);
        req.n = 2;
        req.budget = 60;
        req.seed = 17;
        let a = generate_counterfactuals(&req, &ds, &model, None).unwrap();
        let b = generate_counterfactuals(&req, &ds, &model, None).unwrap();
        assert_eq!(a.counterfactuals, b.counterfactuals);
        assert_eq!(a.failures, b.failures);
    }

    #[test]
    fn categorical_bounds_respect_monotonic_direction() {
        let features = vec![
            crate::data::FeatureSpec::categorical("c", vec![0.0, 1.0, 2.0, 3.0]),
            crate::data::FeatureSpec::continuous("v", 0.0, 1.0),
        ];
        let rows = vec![vec![0.0, 0.0], vec![3.0, 1.0]];
        let ds = Dataset::new(features, rows, vec![0, 1], vec!["a".into(), "b".into()]).unwrap();
        let c = [FeatureConstraint { feature: "c".into(), monotonic: Some(Monotonic::NonIncreasing), ..Default::default() }];
        let b = feature_bounds(&ds, &[2.0, 0.5], &[], &c).unwrap();
        assert_eq!(b[0], FeatureBounds::Choices { values: vec![0.0, 1.0, 2.0] });
        assert_eq!(b[1], FeatureBounds::Interval { min: 0.0, max: 1.0 });
        let fixed = feature_bounds(&ds, &[0.0, 0.5], &[], &c).unwrap();
        assert_eq!(fixed[0], FeatureBounds::Fixed);
    }

    #[test]
    fn assessing_external_counterfactuals_applies_the_hinge_rule() {
        let ds = blobs(200, 7);
        let model = fit_logistic(&ds, &LogisticConfig::default()).unwrap();
        let x = deep_class0(&ds);
        let req = ExplainRequest { n: 2, ..ExplainRequest::new(x.clone(), 1) };
        let set = assess_counterfactuals(&req, &ds, &model, None, &[vec![3.0, 3.0], x.clone()], 0.5).unwrap();
        assert_eq!(set.counterfactuals.len(), 1);
        assert_eq!(set.failures.len(), 1);
        assert_eq!(set.counterfactuals[0].changes.len(), 2);
        assert_eq!(set.duration_seconds, 0.5);
    }
}
