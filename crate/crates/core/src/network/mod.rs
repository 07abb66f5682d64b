//! The dense classifier head, its composition with the attention gate, and
//! training.

mod arch;
pub mod checkpoint;
mod gradcheck;
mod head;
mod model;
mod train;

pub use arch::{ArchBounds, Architecture};
pub use gradcheck::{check_gradients, GradCheckReport};
pub use head::{Dense, DenseGrads, HeadCache, HeadGrads, MlpHead};
pub use model::{bce_loss, decide, AttentionClassifier, ClassifierCache, ClassifierGrads, LOSS_EPSILON};
pub use train::{evaluate, train, EpochRecord, TrainConfig, TrainHistory};
