//! Dense numerical substrate: matrices, sequential networks with reverse-mode
//! gradients, the adaptive-moment optimizer and a finite-difference oracle.

mod adam;
pub mod gradcheck;
pub mod kinks;
mod mat;
mod mlp;

pub use adam::{adam_step, adam_step_set, AdamConfig};
pub use gradcheck::{grad_check, grad_check_with, GradCheckOptions, GradCheckReport};
pub use mat::{dot, Mat, Real};
pub use mlp::{log_sum_exp, neg_log_softmax, row_softmax, softplus, LayerKind, LayerSpec, Mlp, MlpBuilder, Param, ParamSet};

/// Slope used by every LeakyReLU in the model zoo.
pub const LEAKY_SLOPE: f64 = 0.2;
