//! Margin softmax with random class and feature selection, plus the
//! full-softmax, NCE and Dropout baselines it is compared against.

mod baselines;
mod loss;
mod sampling;
mod types;

pub use baselines::{apply_dropout, dropout_forward, dropout_loss, dropout_mask, instance_nce_loss, NceOutput};
pub use loss::{backward, forward, full_softmax_loss, LossOutput};
pub use sampling::{plan_step, sample_classes, sample_classes_floored, sample_feature_mask};
pub use types::{LossConfig, PrototypeMatrix, SelectionPlan, MIN_NORM};
