//! Tree-ensemble baselines and the boosted-tree analysis of recurrent latents.

pub mod forest;
pub mod gbt;
pub mod tree;

use serde::{Deserialize, Serialize};

pub use forest::{train_random_forest, ForestConfig, ForestModel};
pub use gbt::{train_gbt, GbtConfig, GbtModel};
pub use tree::TreeNode;

use crate::dataprep::{reshape_for_model, FeatureRow};
use crate::error::{Error, Result};
use crate::neuralnet::Network;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselinesConfig {
    pub forest: ForestConfig,
    pub gbt: GbtConfig,
}

/// Boosted trees on raw features against boosted trees on network latents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentReport {
    pub raw_accuracy: f64,
    pub latent_accuracy: f64,
    /// `latent_accuracy − raw_accuracy`.
    pub delta: f64,
    pub architecture: String,
    pub latent_dim: usize,
    pub n_train: usize,
    pub n_test: usize,
}

pub fn accuracy(pred: &[u8], truth: &[u8]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
}

fn split_xy(rows: &[FeatureRow]) -> (Vec<Vec<f64>>, Vec<u8>) {
    (rows.iter().map(|r| r.features.clone()).collect(), rows.iter().map(|r| r.label).collect())
}

pub fn gbt_accuracy(train_x: &[Vec<f64>], train_y: &[u8], test_x: &[Vec<f64>], test_y: &[u8], cfg: &GbtConfig) -> Result<f64> {
    let m = train_gbt(train_x, train_y, cfg)?;
    let pred: Vec<u8> = test_x.iter().map(|r| m.predict(r)).collect();
    Ok(accuracy(&pred, test_y))
}

/// Trains one GBT on the 12 input features and one on `net`'s latents for the
/// same rows, and scores both on `test`.
pub fn evaluate_latent_features(net: &Network, train: &[FeatureRow], test: &[FeatureRow], cfg: &GbtConfig) -> Result<LatentReport> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::InsufficientData("latent evaluation needs training and test rows".into()));
    }
    let (raw_tr, y_tr) = split_xy(train);
    let (raw_te, y_te) = split_xy(test);
    let raw_accuracy = gbt_accuracy(&raw_tr, &y_tr, &raw_te, &y_te, cfg)?;
    let lat_tr = net.extract_latent(&reshape_for_model(train)?)?.rows();
    let lat_te = net.extract_latent(&reshape_for_model(test)?)?.rows();
    let latent_accuracy = gbt_accuracy(&lat_tr, &y_tr, &lat_te, &y_te, cfg)?;
    Ok(LatentReport {
        raw_accuracy,
        latent_accuracy,
        delta: latent_accuracy - raw_accuracy,
        architecture: net.config.architecture.name().to_string(),
        latent_dim: net.config.latent_dim(),
        n_train: train.len(),
        n_test: test.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralnet::ModelConfig;

    fn rows(n: usize, offset: usize) -> Vec<FeatureRow> {
        (0..n)
            .map(|i| {
                let label = u8::from((i + offset).is_multiple_of(3));
                FeatureRow {
                    participant_id: format!("P{}", i % 4 + 1),
                    question_id: i,
                    session: 1,
                    segment: 1,
                    features: (0..12).map(|j| f64::from(label) * 2.0 + 0.1 * ((i * 7 + j) % 5) as f64).collect(),
                    label,
                }
            })
            .collect()
    }

    #[test]
    fn zero_latents_give_majority_rate() {
        let mut net = Network::init(&ModelConfig::default()).unwrap();
        for (name, t) in net.params.iter_mut() {
            if name.starts_with("gru.") {
                t.data_mut().iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let (train, test) = (rows(30, 0), rows(12, 1));
        let rep = evaluate_latent_features(&net, &train, &test, &GbtConfig::default()).unwrap();
        let majority = test.iter().filter(|r| r.label == 0).count() as f64 / test.len() as f64;
        assert_eq!(rep.latent_accuracy, majority);
        assert_eq!(rep.raw_accuracy, 1.0);
        assert_eq!(rep.architecture, "cnn_gru");
        assert!((rep.delta - (rep.latent_accuracy - rep.raw_accuracy)).abs() < 1e-15);
        let json = serde_json::to_value(&rep).unwrap();
        for key in ["raw_accuracy", "latent_accuracy", "delta", "architecture"] {
            assert!(json.get(key).is_some());
        }
    }
}
