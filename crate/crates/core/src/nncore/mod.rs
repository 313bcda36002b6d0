//! Minimal differentiable kernel for the fixed encoder architectures.
//!
//! Layers are stateless descriptions that point into a [`ParamSet`]; every
//! forward returns whatever the matching backward needs, and backward
//! accumulates parameter gradients into a gradient set of the same layout.
//! All backward passes are checked against central differences by
//! [`gradcheck`].

mod activation;
mod attention;
pub mod checkpoint;
mod conv;
mod dense;
pub mod gradcheck;
mod loss;
mod lstm;
mod mha;
mod optim;
mod params;
mod pool;
mod real;
mod tensor;

pub use activation::{activation_backward, activation_forward, softmax_backward, softmax_lastdim, Activation};
pub use attention::{AttentionCache, AttentionPool};
pub use conv::{Conv1d, Conv1dMultiwidth};
pub use dense::Dense;
pub use loss::{loss_eval, LossKind, LossSpec};
pub use lstm::{Lstm, LstmCache};
pub use mha::{Mha, MhaCache};
pub use optim::{DecaySchedule, OptimizerConfig, OptimizerKind, OptimizerState};
pub use params::{xavier_uniform, ParamId, ParamSet};
pub use pool::{global_pool, global_pool_backward, PoolCache, PoolKind};
pub use real::{sigmoid, Real};
pub use tensor::{dot, Tensor};
