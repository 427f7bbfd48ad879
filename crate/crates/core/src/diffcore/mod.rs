//! Differentiable evaluation of small dense networks.
//!
//! Networks are evaluated on row-major batches (`batch × input_dim`). A
//! [`Tape`] records one batched forward pass. For scalar-output networks it
//! also materializes the input gradient as an explicit composition
//!
//! ```text
//! D_{L-1} = σ'(Z_{L-1}) ⊙ w_out
//! D_{h}   = σ'(Z_h) ⊙ (D_{h+1} W_{h+1})
//! ∇ₓ      = D_0 W_0
//! ```
//!
//! so that reverse accumulation through it yields parameter gradients of
//! objectives that contain `∇ₓ` (the mixed second derivatives), as well as
//! Hessian-vector products with respect to the input.

mod activation;
pub(crate) mod mlp;
mod tape;

pub use activation::Activation;
pub use mlp::Mlp;
pub use tape::{potential_objective_gradient, ObjectiveGradient, Tape};
