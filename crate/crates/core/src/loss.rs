//! The composite counterfactual objective and its components.
//!
//! `total = hinge + λ·(ω_d·diversity + ω_n·proximity + ω_s·sparsity + ω_p·plausibility)`
//!
//! Every component is oriented so that smaller is better. All inputs are
//! normalized value vectors.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Instance;
use crate::graph::{GraphError, RelationshipGraph};
use crate::oracle::{Oracle, OracleError};

#[derive(Debug, Error)]
pub enum LossError {
    #[error("desired class {desired} is out of range for {classes} classes")]
    DesiredOutOfRange { desired: usize, classes: usize },
    #[error("vectors differ in length: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("invalid loss configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub lambda: f64,
    pub diversity: f64,
    pub proximity: f64,
    pub sparsity: f64,
    pub plausibility: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            diversity: 1.0,
            proximity: 1.0,
            sparsity: 1.0,
            plausibility: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), LossError> {
        let all = [self.lambda, self.diversity, self.proximity, self.sparsity, self.plausibility];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(LossError::InvalidConfig("loss weights must be finite and non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum JitterMode {
    #[default]
    Fixed,
    /// Diagonal entry `i` uses `ε·u_i` with `u_i ~ U(0.5, 1.5)` from `seed`.
    SeededRandom { seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiversityKernelConfig {
    pub epsilon: f64,
    pub jitter: JitterMode,
}

impl Default for DiversityKernelConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-6,
            jitter: JitterMode::Fixed,
        }
    }
}

impl DiversityKernelConfig {
    pub fn validate(&self) -> Result<(), LossError> {
        if !(self.epsilon > 0.0 && self.epsilon <= 1e-3) {
            return Err(LossError::InvalidConfig("epsilon must lie in (0, 1e-3]".into()));
        }
        Ok(())
    }
}

/// `max(0, max_{c≠d} P_c − P_d)`.
pub fn hinge_correctness(probas: &[f64], desired: usize) -> Result<f64, LossError> {
    if desired >= probas.len() {
        return Err(LossError::DesiredOutOfRange { desired, classes: probas.len() });
    }
    let best_other = probas
        .iter()
        .enumerate()
        .filter(|&(c, _)| c != desired)
        .map(|(_, &p)| p)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok((best_other - probas[desired]).max(0.0))
}

/// `(1 − s)/2` where `s` is the ω-weighted cosine similarity. `None` weights
/// mean uniform `1/M`. A zero-norm vector scores 0.5.
pub fn proximity_loss(cf: &[f64], x: &[f64], feature_weights: Option<&[f64]>) -> Result<f64, LossError> {
    check_len(cf, x)?;
    let uniform = 1.0 / cf.len().max(1) as f64;
    let w = |i: usize| feature_weights.map_or(uniform, |w| w[i]);
    if let Some(fw) = feature_weights {
        check_len(cf, fw)?;
    }
    let (mut dot, mut ncf, mut nx) = (0.0, 0.0, 0.0);
    for i in 0..cf.len() {
        dot += w(i) * cf[i] * x[i];
        ncf += w(i) * cf[i] * cf[i];
        nx += w(i) * x[i] * x[i];
    }
    if ncf <= 0.0 || nx <= 0.0 {
        log::warn!("proximity of a zero-norm vector is undefined; scoring 0.5");
        return Ok(0.5);
    }
    let s = (dot / (ncf.sqrt() * nx.sqrt())).clamp(-1.0, 1.0);
    Ok((1.0 - s) / 2.0)
}

/// Fraction of features whose values differ by more than `tol`.
pub fn sparsity_loss(cf: &[f64], x: &[f64], tol: f64) -> Result<f64, LossError> {
    check_len(cf, x)?;
    if cf.is_empty() {
        return Ok(0.0);
    }
    let changed = cf.iter().zip(x).filter(|(a, b)| (*a - *b).abs() > tol).count();
    Ok(changed as f64 / cf.len() as f64)
}

/// `K_ij = 1/(1 + ‖cf_i − cf_j‖₂ + ε_i·δ_ij)`.
pub fn diversity_kernel(cfs: &[Vec<f64>], cfg: &DiversityKernelConfig) -> DMatrix<f64> {
    let n = cfs.len();
    let eps: Vec<f64> = match cfg.jitter {
        JitterMode::Fixed => vec![cfg.epsilon; n],
        JitterMode::SeededRandom { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n).map(|_| cfg.epsilon * rng.random_range(0.5..1.5)).collect()
        }
    };
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0 / (1.0 + eps[i])
        } else {
            let d: f64 = cfs[i].iter().zip(&cfs[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            1.0 / (1.0 + d)
        }
    })
}

/// `det K`; may be slightly negative for near-duplicates.
pub fn kernel_determinant(cfs: &[Vec<f64>], cfg: &DiversityKernelConfig) -> f64 {
    if cfs.is_empty() {
        return 1.0;
    }
    diversity_kernel(cfs, cfg).determinant()
}

/// `1 − det K`, clamped to `[0, 1]`.
pub fn diversity_loss(cfs: &[Vec<f64>], cfg: &DiversityKernelConfig) -> f64 {
    (1.0 - kernel_determinant(cfs, cfg)).clamp(0.0, 1.0)
}

/// Diversity as reported in metrics: `|det K|`, larger is better.
pub fn diversity_score(cfs: &[Vec<f64>], cfg: &DiversityKernelConfig) -> f64 {
    kernel_determinant(cfs, cfg).abs()
}

fn check_len(a: &[f64], b: &[f64]) -> Result<(), LossError> {
    if a.len() != b.len() {
        return Err(LossError::DimensionMismatch(a.len(), b.len()));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub hinge: f64,
    pub diversity: f64,
    pub proximity: f64,
    pub sparsity: f64,
    pub plausibility: f64,
    pub total: f64,
}

/// Everything the objective needs besides the candidate and its probabilities.
#[derive(Clone, Debug)]
pub struct LossContext<'a> {
    pub x: &'a [f64],
    pub existing: &'a [Vec<f64>],
    pub graph: Option<&'a RelationshipGraph>,
    pub desired: usize,
    pub weights: LossWeights,
    pub feature_weights: Option<&'a [f64]>,
    pub tol: f64,
    pub kernel: DiversityKernelConfig,
}

impl LossContext<'_> {
    /// Scores `cf` given the oracle's probabilities for it. The diversity
    /// term is computed over the already accepted set plus `cf`.
    pub fn evaluate(&self, cf: &[f64], probas: &[f64]) -> Result<LossBreakdown, LossError> {
        let hinge = hinge_correctness(probas, self.desired)?;
        let mut set = self.existing.to_vec();
        set.push(cf.to_vec());
        let diversity = diversity_loss(&set, &self.kernel);
        let proximity = proximity_loss(cf, self.x, self.feature_weights)?;
        let sparsity = sparsity_loss(cf, self.x, self.tol)?;
        let plausibility = match self.graph {
            Some(g) => g.plausibility(cf)?,
            None => 0.0,
        };
        let w = &self.weights;
        let total = hinge
            + w.lambda
                * (w.diversity * diversity
                    + w.proximity * proximity
                    + w.sparsity * sparsity
                    + w.plausibility * plausibility);
        Ok(LossBreakdown {
            hinge,
            diversity,
            proximity,
            sparsity,
            plausibility,
            total,
        })
    }
}

/// Default sparsity tolerance in normalized units.
pub const DEFAULT_SPARSITY_TOL: f64 = 1e-6;

/// Queries the oracle for `cf` and evaluates the full objective.
pub fn total_loss(oracle: &dyn Oracle, cf: &[f64], ctx: &LossContext<'_>) -> Result<LossBreakdown, LossError> {
    let probas = oracle.predict_proba(&Instance::normalized(cf.to_vec()))?;
    ctx.evaluate(cf, &probas)
}
