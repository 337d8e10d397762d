//! Feed-forward mixture network with hand-written backpropagation.

pub mod adam;
pub mod batchnorm;
pub mod dense;
pub mod network;
pub mod persist;
pub mod train;

pub use adam::{adam_step, AdamConfig, OptimizerState};
pub use network::{Architecture, ForwardPass, Gradients, NetworkModel};
pub use persist::{load_model, save_model};
pub use train::{train, train_with_validation, CensoringMode, EpochRecord, TrainConfig, TrainOutcome};
