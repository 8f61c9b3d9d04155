//! Training: target assignment, the three losses with hand-derived
//! gradients, SGD with burn-in, and the training loop.

pub mod assign;
pub mod loss;
pub mod optimizer;
pub mod trainer;

pub use assign::{assign_targets, responsible_anchor, Slot, TargetAssignment};
pub use loss::{loss_and_grads, LossConfig, LossParts};
pub use optimizer::{lr_schedule, Sgd};
pub use trainer::{train_loop, MetricsRow, TrainConfig, TrainOutcome};
