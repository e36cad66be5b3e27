//! Cognitive-effort estimation from fNIRS-style oxygenated-hemoglobin recordings.
//!
//! The crate covers the full batch path: a synthetic cohort generator, feature
//! preparation (imputation, detrending, standardization, PCA, participant-wise
//! splits, SMOTE), a small deterministic neural-network engine with the CNN-GRU
//! classifier and recurrent baselines, tree-ensemble baselines, model
//! explanation (region loadings, latent correlations, exact Shapley values), and
//! the relative neural efficiency / involvement computations.
//!
//! Data-parallel loops (cohort generation, forest trees, grid search, Shapley
//! coalitions) run on rayon when the `parallel` feature is enabled, and fall
//! back to plain iteration otherwise. Both paths produce identical results.

pub mod baselines;
pub mod dataprep;
pub mod error;
pub mod evalcore;
pub mod exec;
pub mod explain;
pub mod neuralnet;
pub mod rng;
pub mod stats;
pub mod synthgen;

pub use error::{Error, Result};
pub use exec::Exec;

/// Number of optode channels on the headband.
pub const N_OPTODES: usize = 16;
/// Number of principal components fed to the classifier.
pub const N_COMPONENTS: usize = 12;
