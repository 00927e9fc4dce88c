use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::data::Instance;
use crate::graph::RelationshipGraph;
use crate::loss::{diversity_score, proximity_loss, sparsity_loss, DiversityKernelConfig, DEFAULT_SPARSITY_TOL};
use crate::oracle::{argmax, Oracle};
use crate::search::ExplanationSet;

/// Quality of one explanation set. Averages are over the returned
/// counterfactuals and are `None` when nothing was returned.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Flipped counterfactuals over the number requested.
    pub fidelity: f64,
    pub probability: Option<f64>,
    pub proximity_loss: Option<f64>,
    pub sparsity_loss: Option<f64>,
    pub plausibility_loss: Option<f64>,
    /// `|det K|` of the returned set; larger means more diverse.
    pub diversity: Option<f64>,
    pub execution_time_seconds: f64,
    pub returned: usize,
    pub requested: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricConfig {
    pub kernel: DiversityKernelConfig,
    pub sparsity_tol: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self { kernel: DiversityKernelConfig::default(), sparsity_tol: DEFAULT_SPARSITY_TOL }
    }
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Re-scores the returned counterfactuals with the oracle and graph. `x` is
/// the normalized query. Failed attempts are not returned counterfactuals.
pub fn compute_metrics(
    set: &ExplanationSet,
    x: &[f64],
    oracle: &dyn Oracle,
    graph: Option<&RelationshipGraph>,
    requested_n: usize,
    cfg: &MetricConfig,
) -> Result<MetricReport, EvalError> {
    if requested_n == 0 {
        return Err(EvalError::Degenerate("requested count must be positive".into()));
    }
    let cfs: Vec<Vec<f64>> = set.counterfactuals.iter().map(|c| c.normalized.clone()).collect();
    let probas = if cfs.is_empty() {
        Vec::new()
    } else {
        oracle.predict_proba_batch(&cfs.iter().map(|c| Instance::normalized(c.clone())).collect::<Vec<_>>())?
    };
    let flipped = probas.iter().filter(|p| argmax(p) == set.desired).count();
    let probability: Vec<f64> = probas.iter().map(|p| p[set.desired]).collect();
    let proximity = cfs.iter().map(|c| proximity_loss(c, x, None)).collect::<Result<Vec<_>, _>>()?;
    let sparsity = cfs
        .iter()
        .map(|c| sparsity_loss(c, x, cfg.sparsity_tol))
        .collect::<Result<Vec<_>, _>>()?;
    let plausibility = match graph {
        Some(g) => mean(&cfs.iter().map(|c| g.plausibility(c)).collect::<Result<Vec<_>, _>>()?),
        None => None,
    };
    Ok(MetricReport {
        fidelity: (flipped as f64 / requested_n as f64).min(1.0),
        probability: mean(&probability),
        proximity_loss: mean(&proximity),
        sparsity_loss: mean(&sparsity),
        plausibility_loss: plausibility,
        diversity: (!cfs.is_empty()).then(|| diversity_score(&cfs, &cfg.kernel)),
        execution_time_seconds: set.duration_seconds,
        returned: cfs.len(),
        requested: requested_n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::LossBreakdown;
    use crate::oracle::{OracleError, OracleKind};
    use crate::search::Counterfactual;

    /// Class 1 whenever the first coordinate exceeds 0.5.
    struct Threshold;

    impl Oracle for Threshold {
        fn class_count(&self) -> usize {
            2
        }
        fn kind(&self) -> OracleKind {
            OracleKind::External
        }
        fn predict_proba_batch(&self, inst: &[Instance]) -> Result<Vec<Vec<f64>>, OracleError> {
            Ok(inst
                .iter()
                .map(|i| if i.values[0] > 0.5 { vec![0.1, 0.9] } else { vec![0.8, 0.2] })
                .collect())
        }
    }

    fn set(cfs: &[[f64; 2]], requested: usize) -> ExplanationSet {
        ExplanationSet {
            feature_names: vec!["a".into(), "b".into()],
            query: vec![0.1, 0.1],
            desired: 1,
            requested,
            counterfactuals: cfs
                .iter()
                .map(|c| Counterfactual {
                    values: c.to_vec(),
                    normalized: c.to_vec(),
                    predicted_class: 0,
                    desired_probability: 0.0,
                    loss: LossBreakdown::default(),
                    changes: Vec::new(),
                })
                .collect(),
            failures: Vec::new(),
            diversity_loss: 0.0,
            duration_seconds: 1.5,
        }
    }

    #[test]
    fn all_flipped_gives_full_fidelity() {
        let s = set(&[[0.9, 0.1], [0.8, 0.3], [0.7, 0.9]], 3);
        let r = compute_metrics(&s, &[0.1, 0.1], &Threshold, None, 3, &MetricConfig::default()).unwrap();
        assert_eq!(r.fidelity, 1.0);
        assert!((r.probability.unwrap() - 0.9).abs() < 1e-12);
        assert_eq!(r.execution_time_seconds, 1.5);
    }

    #[test]
    fn one_of_four_flipped() {
        let s = set(&[[0.9, 0.1], [0.2, 0.3]], 4);
        let r = compute_metrics(&s, &[0.1, 0.1], &Threshold, None, 4, &MetricConfig::default()).unwrap();
        assert_eq!(r.fidelity, 0.25);
    }

    #[test]
    fn identical_pair_has_determinant_near_two_epsilon() {
        let s = set(&[[0.9, 0.1], [0.9, 0.1]], 2);
        let cfg = MetricConfig::default();
        let r = compute_metrics(&s, &[0.1, 0.1], &Threshold, None, 2, &cfg).unwrap();
        // det [[a, 1], [1, a]] with a = 1/(1+ε) equals a² − 1.
        let a = 1.0 / (1.0 + cfg.kernel.epsilon);
        assert!((r.diversity.unwrap() - (1.0 - a * a)).abs() < 1e-12);
        assert!((r.diversity.unwrap() - 2.0 * cfg.kernel.epsilon).abs() < 1e-11);
    }

    #[test]
    fn empty_set_has_zero_fidelity_and_no_averages() {
        let s = set(&[], 3);
        let r = compute_metrics(&s, &[0.1, 0.1], &Threshold, None, 3, &MetricConfig::default()).unwrap();
        assert_eq!(r.fidelity, 0.0);
        assert!(r.probability.is_none() && r.proximity_loss.is_none() && r.diversity.is_none());
    }
}
