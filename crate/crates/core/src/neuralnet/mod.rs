//! Small deterministic neural-network engine: tensors, layers with hand-written
//! gradients, recurrent cells, Adam, training, grid search and checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod grid;
pub mod layers;
pub mod model;
pub mod recurrent;
pub mod tensor;
pub mod train;

pub use model::{Architecture, BnPosition, BnSingleSample, ModelConfig, Network, ParamMap};
pub use tensor::Tensor;
pub use train::{train, Dataset, EpochMetrics, TrainedModel};
