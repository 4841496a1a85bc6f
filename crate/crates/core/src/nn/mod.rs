//! From-scratch dense/convolutional networks with softmax cross-entropy.

mod gradcheck;
mod init;
mod network;
mod params;
mod spec;

pub use gradcheck::{
    central_difference, check_instance, finite_diff_grad, gradcheck_tolerance, max_relative_error, random_instance,
    GradcheckInstance, GRADCHECK_EPSILON,
};
pub use init::{init_params, InitScheme};
pub use network::{
    forward, kink_margin, loss, loss_and_grad, sgd_step, softmax, softmax_cross_entropy, GradResult, Logits,
};
pub use params::{ParamVector, PayloadKind};
pub use spec::{Layer, LayerParams, ModelKind, ModelSpec, Shape};

pub(crate) use network::{loss_and_grad_into, sgd_step_in_place};
