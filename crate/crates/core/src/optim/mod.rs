//! Discrete-choice policy, DPO / weighted-DPO objectives and training.
//!
//! A policy scores `(item, text)` as `weights · φ(item, text)` and turns the
//! scores of an item's candidate pool into a softmax. Preference losses only
//! need log-probability differences within one pool, where the partition
//! function cancels, so every objective here is exact and differentiable by
//! hand.

pub mod features;
pub mod loss;
pub mod policy;
pub mod train;

pub use features::{FeatureMap, SparseFeatures};
pub use loss::{ctrpo_loss, dpo_loss, dpo_loss_from_margin, grad_ctrpo, logprob_margin};
pub use policy::{FeaturizedPair, Policy};
pub use train::{
    fit_reference, pair_accuracy, train_ctrpo, BatchLog, Reduction, TrainConfig, TrainOutcome,
    WeightMode,
};
