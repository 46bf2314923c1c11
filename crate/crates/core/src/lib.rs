//! Gradient-norm-penalized training on a small reverse-mode autodiff core.
//!
//! The crate is organised bottom-up: [`tensor`], [`params`] and [`tape`]
//! provide exact gradients; [`model`] and [`data`] supply toy classification
//! problems; [`penalty`] implements the penalized gradient and the optimizer
//! step; [`oracle`] and [`flatness`] provide independent checks and
//! landscape measurements.

pub mod data;
pub mod error;
pub mod flatness;
pub mod model;
pub mod objective;
pub mod oracle;
pub mod params;
pub mod penalty;
pub mod tape;
pub mod tensor;

pub use data::{batch_iter, generate_dataset, Batch, DatasetKind, DatasetSpec};
pub use error::{Error, Result};
pub use flatness::{FlatnessReport, ProbeConfig};
pub use model::{backward, forward, init_params, Activation, InitScheme, ModelLoss, ModelSpec};
pub use objective::{FnObjective, Objective};
pub use params::{Layout, ParamVector, Segment};
pub use penalty::{
    cosine_lr, gnp_gradient, grad_norm_lp, hvp_taylor, penalized_loss, perturb_point, train_step, Coefficient,
    GnpConfig, GradientReport, OptimState, Schedule, Scheme,
};
pub use tape::{NodeId, Tape};
pub use tensor::Tensor;
