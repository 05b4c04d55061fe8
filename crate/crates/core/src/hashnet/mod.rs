//! The trainable hashing head and its training loop.
//!
//! Precomputed image features feed a ReLU layer (FC3) whose output is
//! shared by two heads: H1 (sigmoid, one unit per hash bit) and H2 (tanh,
//! one unit per tag-embedding dimension). Only H1 is used at inference.

pub mod backward;
pub mod forward;
pub mod gradcheck;
pub mod loss;
pub mod optim;
pub mod params;
pub mod train;

pub use backward::{backward, loss_and_gradient, objective, Batch, GradientSet, Target};
pub use forward::{encode, forward, hash_outputs, ForwardActivations};
pub use gradcheck::{check_gradients, finite_diff_grad};
pub use loss::{
    loss_contrastive, loss_hinge, loss_pairwise, loss_quantization, total_loss, HyperParams,
    LossMode, LossValues,
};
pub use optim::{sgd_momentum_step, MomentumState};
pub use params::{init_glorot, LayerSizes, NetworkParams, DEFAULT_HIDDEN};
pub use train::{train, train_from, train_sized, Supervision, TrainOutcome, TrainingSet};
