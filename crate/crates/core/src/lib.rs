//! Noise-injected convolutional classifiers, adversarial attacks and
//! federated averaging on a small pure-Rust tensor engine.

pub mod attacks;
pub mod data;
pub mod error;
pub mod eval;
pub mod federated;
pub mod nn;
pub mod noise;
pub mod rng;
pub mod tensor;

pub use attacks::{AttackConfig, AttackFamily, AttackOutcome};
pub use data::LabeledDataset;
pub use error::{Error, Result};
pub use eval::{ClassificationMetrics, MetricsReport, Tags};
pub use federated::{FederatedConfig, PartitionScheme, RoundLog};
pub use nn::{Mode, Model, ModelParams, ModelSpec, ModelVariant, SgdConfig};
pub use noise::NoiseConfig;
pub use tensor::Tensor;
