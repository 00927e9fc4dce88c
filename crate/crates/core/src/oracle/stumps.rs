use serde::{Deserialize, Serialize};

use super::{check_classes, model_inputs, softmax, AdditiveModel, Oracle, OracleError, OracleKind};
use crate::data::{Dataset, Instance, NormStats};

const HESSIAN_REG: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StumpConfig {
    pub rounds: usize,
    pub learning_rate: f64,
}

impl Default for StumpConfig {
    fn default() -> Self {
        Self {
            rounds: 100,
            learning_rate: 0.3,
        }
    }
}

/// Depth-1 split on one unit-scaled feature. Inputs `<= threshold` take `left`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stump {
    pub class: usize,
    pub feature: usize,
    pub threshold: f64,
    pub left: f64,
    pub right: f64,
}

impl Stump {
    fn eval(&self, x: f64) -> f64 {
        if x <= self.threshold {
            self.left
        } else {
            self.right
        }
    }
}

/// Boosted stump ensemble with per-class additive scores.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StumpModel {
    pub feature_names: Vec<String>,
    pub class_labels: Vec<String>,
    pub scaler: NormStats,
    pub stumps: Vec<Stump>,
}

/// Multiclass gradient boosting on the softmax loss. Each round fits one
/// Newton-step stump per class against the current probabilities.
pub fn fit_stumps(ds: &Dataset, cfg: &StumpConfig) -> Result<StumpModel, OracleError> {
    check_classes(ds)?;
    let k = ds.class_count();
    let m = ds.m();
    let n = ds.n();
    let scaler = ds.norm_stats.clone();
    let xs: Vec<Vec<f64>> = (0..n)
        .map(|i| model_inputs(&scaler, &ds.instance(i)))
        .collect::<Result<_, _>>()?;
    let sorted: Vec<Vec<usize>> = (0..m)
        .map(|j| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| xs[a][j].total_cmp(&xs[b][j]));
            idx
        })
        .collect();

    let mut scores = vec![vec![0.0; k]; n];
    let mut stumps = Vec::with_capacity(cfg.rounds * k);
    let shrink = (k as f64 - 1.0) / k as f64;
    for _ in 0..cfg.rounds {
        let probas: Vec<Vec<f64>> = scores.iter().map(|s| softmax(s)).collect();
        let mut round = Vec::with_capacity(k);
        for c in 0..k {
            let grad: Vec<f64> = (0..n)
                .map(|i| if ds.target[i] == c { 1.0 } else { 0.0 } - probas[i][c])
                .collect();
            let hess: Vec<f64> = (0..n).map(|i| probas[i][c] * (1.0 - probas[i][c])).collect();
            if let Some(mut stump) = best_stump(&xs, &sorted, &grad, &hess) {
                stump.class = c;
                stump.left *= shrink * cfg.learning_rate;
                stump.right *= shrink * cfg.learning_rate;
                round.push(stump);
            }
        }
        for stump in &round {
            for (s, x) in scores.iter_mut().zip(&xs) {
                s[stump.class] += stump.eval(x[stump.feature]);
            }
        }
        stumps.extend(round);
    }
    Ok(StumpModel {
        feature_names: ds.features.iter().map(|f| f.name.clone()).collect(),
        class_labels: ds.class_labels.clone(),
        scaler,
        stumps,
    })
}

fn best_stump(xs: &[Vec<f64>], sorted: &[Vec<usize>], grad: &[f64], hess: &[f64]) -> Option<Stump> {
    let g_total: f64 = grad.iter().sum();
    let h_total: f64 = hess.iter().sum();
    let base = g_total * g_total / (h_total + HESSIAN_REG);
    let mut best: Option<(f64, Stump)> = None;
    for (j, order) in sorted.iter().enumerate() {
        let (mut gl, mut hl) = (0.0, 0.0);
        for w in 0..order.len().saturating_sub(1) {
            let (a, b) = (order[w], order[w + 1]);
            gl += grad[a];
            hl += hess[a];
            let (va, vb) = (xs[a][j], xs[b][j]);
            if va == vb {
                continue;
            }
            let (gr, hr) = (g_total - gl, h_total - hl);
            let gain = gl * gl / (hl + HESSIAN_REG) + gr * gr / (hr + HESSIAN_REG) - base;
            if best.as_ref().is_none_or(|(g, _)| gain > *g) {
                best = Some((
                    gain,
                    Stump {
                        class: 0,
                        feature: j,
                        threshold: 0.5 * (va + vb),
                        left: gl / (hl + HESSIAN_REG),
                        right: gr / (hr + HESSIAN_REG),
                    },
                ));
            }
        }
    }
    best.filter(|(g, _)| *g > 0.0).map(|(_, s)| s)
}

impl StumpModel {
    fn scores(&self, x: &[f64]) -> Vec<f64> {
        let mut s = vec![0.0; self.class_labels.len()];
        for stump in &self.stumps {
            s[stump.class] += stump.eval(x[stump.feature]);
        }
        s
    }
}

impl Oracle for StumpModel {
    fn class_count(&self) -> usize {
        self.class_labels.len()
    }

    fn kind(&self) -> OracleKind {
        OracleKind::BuiltinStumps
    }

    fn metadata(&self) -> String {
        format!("stumps({} stumps, {} classes)", self.stumps.len(), self.class_labels.len())
    }

    fn predict_proba_batch(&self, instances: &[Instance]) -> Result<Vec<Vec<f64>>, OracleError> {
        instances
            .iter()
            .map(|inst| Ok(softmax(&self.scores(&model_inputs(&self.scaler, inst)?))))
            .collect()
    }

    fn additive(&self) -> Option<&dyn AdditiveModel> {
        Some(self)
    }
}

impl AdditiveModel for StumpModel {
    fn feature_count(&self) -> usize {
        self.feature_names.len()
    }

    fn intercept(&self, _class: usize) -> f64 {
        0.0
    }

    fn contribution(&self, class: usize, feature: usize, raw: f64) -> f64 {
        let x = self.scaler.unit_scale(feature, raw);
        self.stumps
            .iter()
            .filter(|s| s.class == class && s.feature == feature)
            .map(|s| s.eval(x))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::testdata::{band, dataset, xor};
    use crate::oracle::{accuracy, fit_logistic, LogisticConfig};

    #[test]
    fn zero_rounds_give_uniform_probabilities() {
        let ds = xor(50, 1);
        let model = fit_stumps(&ds, &StumpConfig { rounds: 0, learning_rate: 0.3 }).unwrap();
        assert_eq!(model.predict_proba(&ds.instance(0)).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn contributions_reconstruct_probabilities() {
        let ds = band(200, 4);
        let model = fit_stumps(&ds, &StumpConfig::default()).unwrap();
        for i in 0..20 {
            let x = ds.instance(i);
            let scores: Vec<f64> = (0..2)
                .map(|c| {
                    model.intercept(c)
                        + (0..2).map(|j| model.contribution(c, j, x.values[j])).sum::<f64>()
                })
                .collect();
            let direct = model.predict_proba(&x).unwrap();
            for (a, b) in softmax(&scores).iter().zip(&direct) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn nonlinear_band_beats_logistic() {
        let ds = band(400, 9);
        let stumps = fit_stumps(&ds, &StumpConfig::default()).unwrap();
        let logistic = fit_logistic(&ds, &LogisticConfig::default()).unwrap();
        assert!(accuracy(&stumps, &ds).unwrap() >= 0.9);
        assert!(accuracy(&logistic, &ds).unwrap() <= 0.6);
    }

    /// An additive score cannot separate balanced XOR quadrants: at most
    /// three of the four quadrants can be classified correctly.
    #[test]
    fn xor_accuracy_is_capped_for_additive_models() {
        let ds = xor(400, 7);
        let stumps = fit_stumps(&ds, &StumpConfig::default()).unwrap();
        let logistic = fit_logistic(&ds, &LogisticConfig::default()).unwrap();
        let acc = accuracy(&stumps, &ds).unwrap();
        assert!(acc <= 0.8, "additive model exceeded XOR ceiling: {acc}");
        assert!(accuracy(&logistic, &ds).unwrap() <= 0.6);
    }

    #[test]
    #[ignore = "unreachable for any additive ensemble; see xor_accuracy_is_capped_for_additive_models"]
    fn xor_training_accuracy_reaches_090() {
        let ds = xor(400, 7);
        let stumps = fit_stumps(&ds, &StumpConfig::default()).unwrap();
        assert!(accuracy(&stumps, &ds).unwrap() >= 0.9);
    }

    #[test]
    fn single_class_is_rejected() {
        let ds = dataset(vec![vec![0.0], vec![1.0]], vec![1, 1]);
        assert!(matches!(
            fit_stumps(&ds, &StumpConfig::default()),
            Err(OracleError::SingleClass)
        ));
    }

    #[test]
    fn fits_are_deterministic() {
        let ds = band(100, 2);
        let a = fit_stumps(&ds, &StumpConfig::default()).unwrap();
        let b = fit_stumps(&ds, &StumpConfig::default()).unwrap();
        assert_eq!(a, b);
    }
}
