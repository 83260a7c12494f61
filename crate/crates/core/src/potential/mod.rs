//! Learned log-partition potential and its Jensen–Shannon training against a grid posterior.
//!
//! The model kernel of a potential `v` is `q(t | t') ∝ exp(⟨t, ∇v(t')⟩ − v(t))`, i.e.
//! `exp(−D_v(t, t'))` normalized over `t`. For an exponential family with `v = N·logZ` it is the
//! large-sample posterior, so fitting it to a measured posterior recovers `logZ` up to an affine
//! term and a scale.

mod kernel;
mod mlp;
mod model;
mod optim;
mod train;

pub use kernel::{bregman, jsd, kernel_from_field, kernel_rows, model_source_gradients, mse_bregman_loss, ModelRowSet};
pub use mlp::{Activation, ForwardCache, Mlp};
pub use model::{param_gradient, BatchEval, PotentialModel};
pub use optim::Adam;
pub use train::{loss_trend_violations, train_potential, write_loss_history, TrainConfig, TrainResult};
