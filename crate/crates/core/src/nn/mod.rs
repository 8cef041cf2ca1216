//! Minimal neural-network engine with manual backpropagation.

pub mod activation;
pub mod init;
pub mod layers;
pub mod loss;
pub mod model;
pub mod optim;
pub mod train;

pub use activation::{alpha_dropout, selu, selu_backward, Mode};
pub use init::lecun_uniform;
pub use loss::softmax_cross_entropy;
pub use model::{backward, forward, ArchConfig, Gradients, LayerSpec, Model, ModelParams, ModelSpec, ModelVariant};
pub use optim::{sgd_step, sgd_step_in_place};
pub use train::{train_epoch, SgdConfig};
