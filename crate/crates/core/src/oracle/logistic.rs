use serde::{Deserialize, Serialize};

use super::{check_classes, model_inputs, softmax, AdditiveModel, Oracle, OracleError, OracleKind};
use crate::data::{Dataset, Instance, NormStats};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    pub l2: f64,
    pub epochs: usize,
    pub learning_rate: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            l2: 1e-3,
            epochs: 500,
            learning_rate: 1.0,
        }
    }
}

/// Multinomial logistic regression on unit-scaled inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub feature_names: Vec<String>,
    pub class_labels: Vec<String>,
    pub scaler: NormStats,
    /// `weights[class][feature]`.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

/// Full-batch gradient descent from zero weights; the result depends only on
/// the data and the config.
pub fn fit_logistic(ds: &Dataset, cfg: &LogisticConfig) -> Result<LogisticModel, OracleError> {
    check_classes(ds)?;
    let k = ds.class_count();
    let m = ds.m();
    let scaler = ds.norm_stats.clone();
    let xs: Vec<Vec<f64>> = (0..ds.n())
        .map(|i| model_inputs(&scaler, &ds.instance(i)))
        .collect::<Result<_, _>>()?;
    let n = xs.len() as f64;
    // Step scaled by the curvature bound of the softmax loss.
    let mean_sq: f64 = xs.iter().map(|x| 1.0 + x.iter().map(|v| v * v).sum::<f64>()).sum::<f64>() / n;
    let step = cfg.learning_rate * 2.0 / mean_sq.max(1.0);

    let mut weights = vec![vec![0.0; m]; k];
    let mut bias = vec![0.0; k];
    for _ in 0..cfg.epochs {
        let mut gw = vec![vec![0.0; m]; k];
        let mut gb = vec![0.0; k];
        for (x, &t) in xs.iter().zip(&ds.target) {
            let scores: Vec<f64> = (0..k)
                .map(|c| bias[c] + weights[c].iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
                .collect();
            let p = softmax(&scores);
            for c in 0..k {
                let r = p[c] - if c == t { 1.0 } else { 0.0 };
                gb[c] += r;
                for (g, v) in gw[c].iter_mut().zip(x) {
                    *g += r * v;
                }
            }
        }
        for c in 0..k {
            bias[c] -= step * gb[c] / n;
            for j in 0..m {
                weights[c][j] -= step * (gw[c][j] / n + cfg.l2 * weights[c][j]);
            }
        }
    }
    Ok(LogisticModel {
        feature_names: ds.features.iter().map(|f| f.name.clone()).collect(),
        class_labels: ds.class_labels.clone(),
        scaler,
        weights,
        bias,
    })
}

impl LogisticModel {
    fn scores(&self, x: &[f64]) -> Vec<f64> {
        self.bias
            .iter()
            .zip(&self.weights)
            .map(|(b, w)| b + w.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }
}

impl Oracle for LogisticModel {
    fn class_count(&self) -> usize {
        self.bias.len()
    }

    fn kind(&self) -> OracleKind {
        OracleKind::BuiltinLogistic
    }

    fn metadata(&self) -> String {
        format!("logistic({} features, {} classes)", self.feature_names.len(), self.bias.len())
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

impl AdditiveModel for LogisticModel {
    fn feature_count(&self) -> usize {
        self.feature_names.len()
    }

    fn intercept(&self, class: usize) -> f64 {
        self.bias[class]
    }

    fn contribution(&self, class: usize, feature: usize, raw: f64) -> f64 {
        self.weights[class][feature] * self.scaler.unit_scale(feature, raw)
    }
}
