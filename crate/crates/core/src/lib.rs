//! Attention-gated classifier heads over convolutional feature maps, with a
//! genetic search over head architectures.

pub mod attention;
pub mod data;
pub mod error;
pub mod ga;
pub mod metrics;
pub mod network;
pub mod seed;
pub mod tensor;

pub use attention::SpatialAttention;
pub use data::{DatasetManifest, Sample, Split};
pub use error::{DecodeError, Error, Result};
pub use ga::{Evaluation, GaConfig, GaHistory, GaOutcome, Individual};
pub use metrics::{ConfusionCounts, MetricReport};
pub use network::{AttentionClassifier, Architecture, MlpHead, TrainConfig, TrainHistory};
pub use tensor::Tensor;
