//! Gradient-boosted regression trees for binary logistic loss.

use serde::{Deserialize, Serialize};

use super::tree::{check_rows, grow_regression_tree, TreeNode};
use crate::error::{Error, Result};

/// Class frequencies are clamped into `[PRIOR_CLAMP, 1 − PRIOR_CLAMP]`
/// before taking the log-odds.
pub const PRIOR_CLAMP: f64 = 1e-6;
/// Leaves whose summed Hessian falls below this get value 0.
pub const HESSIAN_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbtConfig {
    pub n_rounds: usize,
    pub max_depth: usize,
    pub shrinkage: f64,
    /// Boosting here draws no random numbers; kept so reports record it.
    pub seed: u64,
}

impl Default for GbtConfig {
    fn default() -> Self {
        Self { n_rounds: 100, max_depth: 3, shrinkage: 0.1, seed: 42 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub base_score: f64,
    pub shrinkage: f64,
    pub trees: Vec<TreeNode>,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl GbtModel {
    pub fn margin(&self, x: &[f64]) -> f64 {
        self.base_score + self.shrinkage * self.trees.iter().map(|t| t.predict_score(x)).sum::<f64>()
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        sigmoid(self.margin(x))
    }

    /// Class 1 when `p > 0.5`.
    pub fn predict(&self, x: &[f64]) -> u8 {
        u8::from(self.predict_proba(x) > 0.5)
    }

    /// The model after its first `rounds` trees.
    pub fn truncated(&self, rounds: usize) -> GbtModel {
        GbtModel { trees: self.trees[..rounds.min(self.trees.len())].to_vec(), ..self.clone() }
    }
}

/// Mean binary log loss.
pub fn log_loss(model: &GbtModel, x: &[Vec<f64>], y: &[u8]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(r, &l)| {
            let p = model.predict_proba(r).clamp(1e-15, 1.0 - 1e-15);
            if l == 1 { -p.ln() } else { -(1.0 - p).ln() }
        })
        .sum::<f64>()
        / x.len() as f64
}

/// Each round fits a squared-error tree to the residuals `y − p`, then sets each
/// leaf to the Newton step `Σ(y − p) / Σ p(1 − p)` over its rows.
pub fn train_gbt(x: &[Vec<f64>], y: &[u8], config: &GbtConfig) -> Result<GbtModel> {
    check_rows(x, y)?;
    if !(config.shrinkage > 0.0 && config.shrinkage.is_finite()) {
        return Err(Error::Config("shrinkage must be positive".into()));
    }
    let n = x.len();
    let freq = y.iter().filter(|&&l| l == 1).count() as f64 / n as f64;
    let prior = freq.clamp(PRIOR_CLAMP, 1.0 - PRIOR_CLAMP);
    let mut model = GbtModel { base_score: (prior / (1.0 - prior)).ln(), shrinkage: config.shrinkage, trees: Vec::new() };
    let idx: Vec<usize> = (0..n).collect();
    let mut margin = vec![model.base_score; n];
    for _ in 0..config.n_rounds {
        let p: Vec<f64> = margin.iter().map(|&m| sigmoid(m)).collect();
        let r: Vec<f64> = y.iter().zip(&p).map(|(&l, pi)| f64::from(l) - pi).collect();
        let newton = |rows: &[usize]| {
            let g: f64 = rows.iter().map(|&i| r[i]).sum();
            let h: f64 = rows.iter().map(|&i| p[i] * (1.0 - p[i])).sum();
            if h < HESSIAN_FLOOR { 0.0 } else { g / h }
        };
        let tree = grow_regression_tree(x, &r, &idx, 0, config.max_depth, &newton);
        for (m, row) in margin.iter_mut().zip(x) {
            *m += config.shrinkage * tree.predict_score(row);
        }
        model.trees.push(tree);
    }
    Ok(model)
}
