//! Tree-structured Parzen Estimator over mixed continuous/categorical spaces.
//!
//! Observations are split at the γ-quantile of their objective values into a
//! good set and a bad set. Each dimension gets its own Parzen density per
//! set; candidates are drawn from the good density and the one maximizing
//! `l(x)/g(x)` is proposed. The first trials come from a randomly shifted
//! Halton sequence instead.

mod parzen;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use parzen::{halton, nth_prime, CategoricalParzen, ContinuousParzen};

#[derive(Debug, Error, PartialEq)]
pub enum TpeError {
    #[error("empty search space")]
    EmptySpace,
    #[error("invalid search space: {0}")]
    InvalidSpace(String),
    #[error("invalid optimizer config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Error)]
pub enum OptimizeError<E> {
    #[error(transparent)]
    Tpe(#[from] TpeError),
    #[error("objective failed at trial {trial}: {source}")]
    Objective { trial: usize, source: E },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DimKind {
    Continuous {
        lo: f64,
        hi: f64,
        /// A value the density model treats as a point mass (the query value).
        anchor: Option<f64>,
    },
    Categorical { choices: Vec<f64> },
}

/// Activates a dimension only when an earlier categorical dimension takes a
/// particular choice. Inactive dimensions are reported as `NaN`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub parent: usize,
    pub choice: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub kind: DimKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<Condition>,
}

impl Dimension {
    pub fn continuous(name: impl Into<String>, lo: f64, hi: f64) -> Self {
        Self { name: name.into(), kind: DimKind::Continuous { lo, hi, anchor: None }, condition: None }
    }

    pub fn categorical(name: impl Into<String>, choices: Vec<f64>) -> Self {
        Self { name: name.into(), kind: DimKind::Categorical { choices }, condition: None }
    }

    pub fn with_anchor(mut self, a: f64) -> Self {
        if let DimKind::Continuous { anchor, .. } = &mut self.kind {
            *anchor = Some(a);
        }
        self
    }

    pub fn when(mut self, parent: usize, choice: usize) -> Self {
        self.condition = Some(Condition { parent, choice });
        self
    }

    pub fn contains(&self, v: f64) -> bool {
        match &self.kind {
            DimKind::Continuous { lo, hi, .. } => (*lo..=*hi).contains(&v),
            DimKind::Categorical { choices } => choices.contains(&v),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub dims: Vec<Dimension>,
}

impl SearchSpace {
    pub fn new(dims: Vec<Dimension>) -> Self {
        Self { dims }
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn validate(&self) -> Result<(), TpeError> {
        if self.dims.is_empty() {
            return Err(TpeError::EmptySpace);
        }
        for (i, d) in self.dims.iter().enumerate() {
            let bad = |r: &str| TpeError::InvalidSpace(format!("dimension `{}`: {r}", d.name));
            match &d.kind {
                DimKind::Continuous { lo, hi, anchor } => {
                    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                        return Err(bad("bounds must be finite with lo < hi"));
                    }
                    if anchor.is_some_and(|a| !(*lo..=*hi).contains(&a)) {
                        return Err(bad("anchor outside bounds"));
                    }
                }
                DimKind::Categorical { choices } => {
                    if choices.is_empty() {
                        return Err(bad("no choices"));
                    }
                }
            }
            if let Some(c) = &d.condition {
                let ok = c.parent < i
                    && matches!(&self.dims[c.parent].kind, DimKind::Categorical { choices } if c.choice < choices.len());
                if !ok {
                    return Err(bad("condition must reference a valid choice of an earlier categorical dimension"));
                }
            }
        }
        Ok(())
    }

    fn active(&self, dim: usize, point: &[f64]) -> bool {
        match &self.dims[dim].condition {
            None => true,
            Some(c) => match &self.dims[c.parent].kind {
                DimKind::Categorical { choices } => point[c.parent] == choices[c.choice],
                DimKind::Continuous { .. } => false,
            },
        }
    }

    /// True when every active coordinate is inside its dimension and every
    /// inactive one is `NaN`.
    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.len()
            && (0..self.len()).all(|i| {
                if self.active(i, point) {
                    self.dims[i].contains(point[i])
                } else {
                    point[i].is_nan()
                }
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TpeConfig {
    pub gamma: f64,
    pub startup_trials: usize,
    pub candidates_per_dim: usize,
    pub seed: u64,
}

impl Default for TpeConfig {
    fn default() -> Self {
        Self { gamma: 0.25, startup_trials: 20, candidates_per_dim: 24, seed: 0 }
    }
}

impl TpeConfig {
    pub fn validate(&self) -> Result<(), TpeError> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(TpeError::InvalidConfig("gamma must lie in (0, 1)".into()));
        }
        if self.candidates_per_dim == 0 {
            return Err(TpeError::InvalidConfig("candidates_per_dim must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub params: Vec<f64>,
    pub value: f64,
}

/// Append-only record of evaluated points.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialHistory {
    trials: Vec<Trial>,
}

impl TrialHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, params: Vec<f64>, value: f64) {
        self.trials.push(Trial { params, value });
    }

    pub fn trials(&self) -> &[Trial] {
        &self.trials
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    /// Index of the lowest value; `NaN` ranks last and ties go to the earliest.
    pub fn best(&self) -> Option<usize> {
        (0..self.trials.len()).min_by(|&a, &b| rank_key(self.trials[a].value).total_cmp(&rank_key(self.trials[b].value)))
    }
}

fn rank_key(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Generator for trial `index`, independent of how earlier trials were drawn.
fn trial_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

/// Proposes the next point to evaluate.
pub fn suggest(history: &TrialHistory, space: &SearchSpace, cfg: &TpeConfig) -> Result<Vec<f64>, TpeError> {
    space.validate()?;
    cfg.validate()?;
    let n = history.len();
    if n < cfg.startup_trials || n == 0 {
        return Ok(startup_point(space, cfg.seed, n));
    }
    let mut rng = trial_rng(cfg.seed, n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| rank_key(history.trials[a].value).total_cmp(&rank_key(history.trials[b].value)));
    let n_good = ((cfg.gamma * n as f64).ceil() as usize).clamp(1, n);
    let (good, bad) = order.split_at(n_good);

    let mut point = vec![f64::NAN; space.len()];
    for (d, dim) in space.dims.iter().enumerate() {
        if !space.active(d, &point) {
            continue;
        }
        let observed = |set: &[usize]| -> Vec<f64> {
            set.iter()
                .map(|&t| history.trials[t].params[d])
                .filter(|v| !v.is_nan())
                .collect()
        };
        let (lv, gv) = (observed(good), observed(bad));
        // Without bad observations the ratio carries no information beyond
        // l itself, so a single draw from l is returned.
        let count = if gv.is_empty() { 1 } else { cfg.candidates_per_dim };
        point[d] = match &dim.kind {
            DimKind::Continuous { lo, hi, anchor } => {
                let clip = |v: Vec<f64>| v.into_iter().map(|x| x.clamp(*lo, *hi)).collect::<Vec<_>>();
                let l = ContinuousParzen::fit(&clip(lv), *lo, *hi, *anchor);
                let g = ContinuousParzen::fit(&clip(gv), *lo, *hi, *anchor);
                best_candidate(count, &mut rng, |r| l.sample(r), |x| l.log_density(x) - g.log_density(x))
            }
            DimKind::Categorical { choices } => {
                let index = |v: Vec<f64>| v.iter().filter_map(|x| choices.iter().position(|c| c == x)).collect::<Vec<_>>();
                let l = CategoricalParzen::fit(&index(lv), choices.len());
                let g = CategoricalParzen::fit(&index(gv), choices.len());
                let i = best_candidate(
                    count,
                    &mut rng,
                    |r| l.sample(r) as f64,
                    |x| l.log_density(x as usize) - g.log_density(x as usize),
                );
                choices[i as usize]
            }
        };
    }
    Ok(point)
}

fn best_candidate(
    count: usize,
    rng: &mut ChaCha8Rng,
    mut draw: impl FnMut(&mut ChaCha8Rng) -> f64,
    score: impl Fn(f64) -> f64,
) -> f64 {
    let mut best = (f64::NEG_INFINITY, f64::NAN);
    for _ in 0..count {
        let x = draw(rng);
        let s = score(x);
        if s > best.0 || best.1.is_nan() {
            best = (s, x);
        }
    }
    best.1
}

/// Halton point `index + 1` in the primes-per-dimension bases, shifted by a
/// seed-dependent offset modulo 1.
fn startup_point(space: &SearchSpace, seed: u64, index: usize) -> Vec<f64> {
    let mut shift_rng = trial_rng(seed, 0);
    shift_rng.set_stream(0);
    let shifts: Vec<f64> = (0..space.len()).map(|_| shift_rng.random::<f64>()).collect();
    let mut point = vec![f64::NAN; space.len()];
    for (d, dim) in space.dims.iter().enumerate() {
        if !space.active(d, &point) {
            continue;
        }
        let u = (halton(index as u64 + 1, nth_prime(d)) + shifts[d]).fract();
        point[d] = match &dim.kind {
            DimKind::Continuous { lo, hi, .. } => lo + u * (hi - lo),
            DimKind::Categorical { choices } => choices[((u * choices.len() as f64) as usize).min(choices.len() - 1)],
        };
    }
    point
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizeResult {
    pub best: Vec<f64>,
    pub best_value: f64,
    pub history: TrialHistory,
}

/// Runs `budget` suggest/evaluate rounds on top of `history` (which may hold
/// warm-start observations that do not count toward the budget).
pub fn optimize_from<E, F>(
    mut objective: F,
    space: &SearchSpace,
    budget: usize,
    cfg: &TpeConfig,
    mut history: TrialHistory,
) -> Result<OptimizeResult, OptimizeError<E>>
where
    F: FnMut(&[f64]) -> Result<f64, E>,
{
    if budget == 0 {
        return Err(TpeError::InvalidConfig("budget must be at least 1".into()).into());
    }
    space.validate()?;
    cfg.validate()?;
    for trial in 0..budget {
        let x = suggest(&history, space, cfg)?;
        let v = objective(&x).map_err(|source| OptimizeError::Objective { trial, source })?;
        history.push(x, if v.is_nan() { f64::INFINITY } else { v });
    }
    let b = history.best().expect("budget ≥ 1");
    Ok(OptimizeResult {
        best: history.trials[b].params.clone(),
        best_value: history.trials[b].value,
        history,
    })
}

pub fn optimize<E, F>(objective: F, space: &SearchSpace, budget: usize, cfg: &TpeConfig) -> Result<OptimizeResult, OptimizeError<E>>
where
    F: FnMut(&[f64]) -> Result<f64, E>,
{
    optimize_from(objective, space, budget, cfg, TrialHistory::new())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use std::convert::Infallible;

    fn unit() -> SearchSpace {
        SearchSpace::new(vec![Dimension::continuous("x", 0.0, 1.0)])
    }

    fn quadratic(x: &[f64]) -> Result<f64, Infallible> {
        Ok((x[0] - 0.3).powi(2))
    }

    #[test]
    fn startup_is_deterministic_and_in_bounds() {
        let cfg = TpeConfig { seed: 4, ..Default::default() };
        let a = suggest(&TrialHistory::new(), &unit(), &cfg).unwrap();
        assert_eq!(a, suggest(&TrialHistory::new(), &unit(), &cfg).unwrap());
        assert!(unit().contains(&a));
        let other = suggest(&TrialHistory::new(), &unit(), &TpeConfig { seed: 5, ..Default::default() }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn empty_space_is_rejected() {
        assert_eq!(suggest(&TrialHistory::new(), &SearchSpace::default(), &TpeConfig::default()), Err(TpeError::EmptySpace));
    }

    #[test]
    fn good_cluster_attracts_suggestions() {
        let mut hits = 0;
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let mut h = TrialHistory::new();
            for i in 0..200 {
                // Every fourth point sits near 0.3 with a low value.
                if i % 4 == 0 {
                    h.push(vec![0.3 + rng.random_range(-0.02..0.02)], rng.random_range(0.0..0.1));
                } else {
                    h.push(vec![rng.random_range(0.0..1.0)], rng.random_range(1.0..2.0));
                }
            }
            let x = suggest(&h, &unit(), &TpeConfig { seed, ..Default::default() }).unwrap()[0];
            hits += usize::from((0.2..=0.4).contains(&x));
        }
        assert!(hits >= 45, "{hits}/50");
    }

    #[test]
    fn categorical_good_choice_dominates() {
        let space = SearchSpace::new(vec![Dimension::categorical("c", vec![0.0, 1.0, 2.0])]);
        let mut h = TrialHistory::new();
        for i in 0..100 {
            // Low values: 90% choice 0 ("A"); high values spread evenly.
            if i < 25 {
                h.push(vec![if i < 23 { 0.0 } else { 1.0 }], 0.0);
            } else {
                h.push(vec![(i % 3) as f64], 1.0);
            }
        }
        let mut a = 0;
        for seed in 0..100 {
            let x = suggest(&h, &space, &TpeConfig { seed, ..Default::default() }).unwrap()[0];
            a += usize::from(x == 0.0);
        }
        assert!(a >= 70, "{a}/100");
    }

    #[test]
    fn quadratic_converges_and_beats_random_search() {
        let mut wins = 0;
        for seed in 0..20 {
            let cfg = TpeConfig { seed, ..Default::default() };
            let r = optimize(quadratic, &unit(), 200, &cfg).unwrap();
            if seed == 11 {
                assert!((r.best[0] - 0.3).abs() <= 0.05);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let random_best = (0..200)
                .map(|_| (rng.random_range(0.0..1.0f64) - 0.3).powi(2))
                .fold(f64::INFINITY, f64::min);
            wins += usize::from(r.best_value <= random_best);
        }
        assert!(wins >= 16, "{wins}/20");
    }

    #[test]
    fn single_trial_budget_returns_startup_point() {
        let cfg = TpeConfig { seed: 2, ..Default::default() };
        let r = optimize(quadratic, &unit(), 1, &cfg).unwrap();
        assert_eq!(r.history.len(), 1);
        assert_eq!(r.best, suggest(&TrialHistory::new(), &unit(), &cfg).unwrap());
    }

    #[test]
    fn same_seed_same_history() {
        let cfg = TpeConfig { seed: 9, ..Default::default() };
        let a = optimize(quadratic, &unit(), 60, &cfg).unwrap();
        let b = optimize(quadratic, &unit(), 60, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn objective_failure_reports_trial() {
        let r = optimize(|_: &[f64]| if true { Err("boom") } else { Ok(0.0) }, &unit(), 5, &TpeConfig::default());
        assert!(matches!(r, Err(OptimizeError::Objective { trial: 0, source: "boom" })));
    }

    #[test]
    fn nan_objective_is_treated_as_worst() {
        let mut calls = 0;
        let r = optimize(
            |x: &[f64]| -> Result<f64, Infallible> {
                calls += 1;
                Ok(if calls == 1 { f64::NAN } else { x[0] })
            },
            &unit(),
            5,
            &TpeConfig::default(),
        )
        .unwrap();
        assert!(r.best_value.is_finite());
    }

    #[test]
    fn incumbent_never_gets_worse() {
        let r = optimize(quadratic, &unit(), 80, &TpeConfig { seed: 3, ..Default::default() }).unwrap();
        let mut best = f64::INFINITY;
        for t in r.history.trials() {
            let next = best.min(t.value);
            assert!(next <= best);
            best = next;
        }
        assert_eq!(best, r.best_value);
    }

    #[test]
    fn anchor_is_proposed_when_good_points_sit_on_it() {
        let space = SearchSpace::new(vec![Dimension::continuous("x", 0.0, 1.0).with_anchor(0.6)]);
        let mut h = TrialHistory::new();
        for i in 0..40 {
            if i % 4 == 0 {
                h.push(vec![0.6], 0.0);
            } else {
                h.push(vec![i as f64 / 40.0], 1.0);
            }
        }
        let hits = (0..50)
            .filter(|&seed| suggest(&h, &space, &TpeConfig { seed, ..Default::default() }).unwrap()[0] == 0.6)
            .count();
        assert!(hits >= 40, "{hits}/50");
    }

    #[test]
    fn conditional_dimension_follows_its_parent() {
        let space = SearchSpace::new(vec![
            Dimension::categorical("switch", vec![0.0, 1.0]),
            Dimension::continuous("x", 0.0, 1.0).when(0, 1),
        ]);
        space.validate().unwrap();
        let r = optimize(
            |p: &[f64]| -> Result<f64, Infallible> { Ok(if p[0] == 1.0 { (p[1] - 0.5).abs() } else { 0.7 }) },
            &space,
            60,
            &TpeConfig { seed: 1, ..Default::default() },
        )
        .unwrap();
        for t in r.history.trials() {
            assert!(space.contains(&t.params));
            assert_eq!(t.params[1].is_nan(), t.params[0] == 0.0);
        }
        assert_eq!(r.best[0], 1.0);
    }

    #[test]
    fn condition_on_later_dimension_is_invalid() {
        let space = SearchSpace::new(vec![
            Dimension::continuous("x", 0.0, 1.0).when(1, 0),
            Dimension::categorical("c", vec![0.0]),
        ]);
        assert!(matches!(space.validate(), Err(TpeError::InvalidSpace(_))));
    }

    #[test]
    fn gamma_near_one_is_close_to_uniform() {
        // Uniform history, all points "good": suggestions should cover [0, 1]
        // roughly evenly.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut h = TrialHistory::new();
        for _ in 0..400 {
            h.push(vec![rng.random_range(0.0..1.0)], rng.random_range(0.0..1.0));
        }
        let cfg = |seed| TpeConfig { gamma: 0.999, seed, ..Default::default() };
        let mut counts = [0usize; 4];
        for seed in 0..800 {
            let x = suggest(&h, &unit(), &cfg(seed)).unwrap()[0];
            counts[((x * 4.0) as usize).min(3)] += 1;
        }
        assert!(counts.iter().all(|&c| (140..=260).contains(&c)), "{counts:?}");
    }

    fn arb_space() -> impl Strategy<Value = SearchSpace> {
        let dim = prop_oneof![
            (-5.0f64..5.0, 0.01f64..3.0).prop_map(|(lo, w)| Dimension::continuous("c", lo, lo + w)),
            prop::collection::vec(-3i32..3, 1..4).prop_map(|v| {
                let mut c: Vec<f64> = v.into_iter().map(f64::from).collect();
                c.sort_by(f64::total_cmp);
                c.dedup();
                Dimension::categorical("k", c)
            }),
        ];
        prop::collection::vec(dim, 1..5).prop_map(SearchSpace::new)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn suggestions_respect_bounds(space in arb_space(), seed in 0u64..1000, n in 0usize..40) {
            let mut h = TrialHistory::new();
            let cfg = TpeConfig { seed, startup_trials: 5, ..Default::default() };
            for i in 0..n {
                let x = suggest(&h, &space, &cfg).unwrap();
                prop_assert!(space.contains(&x), "{:?}", x);
                h.push(x, (i as f64 * 0.37).sin());
            }
            let x = suggest(&h, &space, &cfg).unwrap();
            prop_assert!(space.contains(&x));
        }
    }
}
