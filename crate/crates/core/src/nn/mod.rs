//! Small differentiable function approximators: dense networks,
//! reverse-mode gradients, Adam and a finite-difference checker.

mod adam;
mod gradcheck;
mod matrix;
mod mlp;

pub use adam::{adam_step, AdamState};
pub use gradcheck::{check_gradient, finite_diff_check, relative_error, GradCheckReport};
pub use matrix::Matrix;
pub use mlp::{mlp_forward, mlp_gradient, Activation, Mlp, MlpSpec, OutputLoss, Trace};
