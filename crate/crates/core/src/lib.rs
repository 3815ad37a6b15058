//! Compressed stacked-LSTM binary classifier for network intrusion
//! detection: preprocessing, dense/sparse/re-dense training with magnitude
//! pruning and selective weight decay, int8 quantization, a binary model
//! container and evaluation metrics.

pub mod cli;
pub mod config;
pub mod data;
pub mod exec;
pub mod lstm;
pub mod metrics;
pub mod optimizer;
pub mod pruning;
pub mod quantizer;
pub mod store;
pub mod synthetic;
pub mod tensor;
pub mod trainer;

pub use config::RunConfig;
pub use data::DatasetSplit;
pub use lstm::{Architecture, NetworkParams};
pub use pruning::SparsityMask;
pub use quantizer::{QuantConfig, QuantizedModel};
pub use store::StoredModel;
pub use tensor::Tensor;
pub use trainer::{train_dsd, TrainConfig, TrainRun};
