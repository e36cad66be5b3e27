use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tree::{check_rows, grow_class_tree, TreeNode};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::rng::{self, tag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self { n_trees: 100, max_depth: 6, seed: 42 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub max_features: usize,
    pub trees: Vec<TreeNode>,
}

impl ForestModel {
    /// Fraction of trees voting for class 1.
    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        let votes = self.trees.iter().filter(|t| t.predict_class(x) == 1).count();
        votes as f64 / self.trees.len() as f64
    }

    /// Majority vote; a tied vote goes to class 0.
    pub fn predict(&self, x: &[f64]) -> u8 {
        let votes = self.trees.iter().filter(|t| t.predict_class(x) == 1).count();
        u8::from(2 * votes > self.trees.len())
    }
}

/// `⌊√D⌋`, at least 1.
pub fn features_per_split(d: usize) -> usize {
    ((d as f64).sqrt().floor() as usize).max(1)
}

/// Bagged Gini trees with `⌊√D⌋` candidate features per split. Tree `t` draws
/// its bootstrap sample and feature subsets from its own stream, so the forest
/// is the same whichever way the trees are scheduled.
pub fn train_random_forest(x: &[Vec<f64>], y: &[u8], config: &ForestConfig, exec: Exec) -> Result<ForestModel> {
    let d = check_rows(x, y)?;
    if config.n_trees == 0 {
        return Err(Error::Config("n_trees must be positive".into()));
    }
    let m = features_per_split(d);
    let n = x.len();
    let trees = exec.map_range(config.n_trees, |t| {
        let mut s = rng::stream(config.seed, &[tag::FOREST, t as u64]);
        let boot: Vec<usize> = (0..n).map(|_| s.random_range(0..n)).collect();
        let mut pick = || {
            let mut f = sample(&mut s, d, m).into_vec();
            f.sort_unstable();
            f
        };
        grow_class_tree(x, y, &boot, 0, config.max_depth, &mut pick)
    });
    Ok(ForestModel { max_features: m, trees })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<u8>) {
        let mut s = rng::stream(seed, &[]);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let c = (i % 2) as u8;
            let off = if c == 1 { 1.0 } else { -1.0 };
            x.push((0..4).map(|_| off + s.random_range(-1.2..1.2)).collect());
            y.push(c);
        }
        (x, y)
    }

    #[test]
    fn single_class_predicted_everywhere() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, -(i as f64)]).collect();
        let f = train_random_forest(&x, &[1; 10], &ForestConfig { n_trees: 5, ..Default::default() }, Exec::Sequential).unwrap();
        for probe in [[-100.0, 3.0], [0.0, 0.0], [55.0, -2.0]] {
            assert_eq!(f.predict(&probe), 1);
        }
    }

    #[test]
    fn deterministic_across_exec_modes() {
        let (x, y) = blobs(80, 3);
        let cfg = ForestConfig { n_trees: 20, ..Default::default() };
        let a = train_random_forest(&x, &y, &cfg, Exec::Sequential).unwrap();
        let b = train_random_forest(&x, &y, &cfg, Exec::Parallel).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.max_features, 2);
        let acc = x.iter().zip(&y).filter(|(r, l)| a.predict(r) == **l).count() as f64 / 80.0;
        assert!(acc > 0.85, "training accuracy {acc}");
        assert!(a.trees.iter().all(|t| t.depth() <= 6));
    }

    #[test]
    fn empty_rejected() {
        assert!(train_random_forest(&[], &[], &ForestConfig::default(), Exec::Sequential).is_err());
    }

    #[test]
    fn sqrt_feature_count() {
        assert_eq!(features_per_split(12), 3);
        assert_eq!(features_per_split(16), 4);
        assert_eq!(features_per_split(1), 1);
    }
}
