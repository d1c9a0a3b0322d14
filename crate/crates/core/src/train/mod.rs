//! Probabilistic classifiers trained on partially labeled data.

mod checkpoint;
mod fit;
mod model;
mod objective;
mod optimizer;

pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use fit::{accuracy, erm_fit, TrainConfig, TrainOutcome};
pub use model::{ModelKind, ModelSpec, Network, ProbabilisticClassifier};
pub use objective::{
    batch_loss, batch_loss_and_grad, best_candidate, optimistic_superset_loss, progressive_reweight, LabelWeights,
    Loss, Target, LOG_CLAMP,
};
pub use optimizer::{LrSchedule, Sgd};
