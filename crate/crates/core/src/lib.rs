//! Learning quasipotential landscapes of deterministic dynamical systems from
//! trajectory data.
//!
//! The drift is fitted as `f(x) = -∇V(x) + g(x)` with a pointwise orthogonality
//! penalty between `∇V` and `g`. When the decomposition is orthogonal, `2V`
//! recovers the quasipotential up to an additive constant, so the trained
//! potential network directly yields the landscape `U = 2V - C`.
//!
//! Crate layout:
//!
//! - [`diffcore`]: dense networks with input gradients and the mixed second
//!   derivatives needed to train through `∇V`.
//! - [`decomposition`]: the potential/rotational model, landscape and checkpoints.
//! - [`integrators`]: fixed-step RK4 and Heun steppers and rollouts.
//! - [`systems`]: benchmark vector fields, samplers and exact quasipotentials.
//! - [`datasets`]: trajectory-pair datasets, splits and representative sampling.
//! - [`training`]: loss assembly, Adam and the training loop.
//! - [`evaluation`]: rollout errors, landscape errors and export, string method.
//! - [`config`] and [`pipeline`]: the JSON run configuration and the commands
//!   driven by the CLI.

pub mod config;
pub mod datasets;
pub mod decomposition;
pub mod diffcore;
pub mod evaluation;
pub mod integrators;
pub mod pipeline;
pub mod systems;
pub mod training;

mod error;
mod rng;

pub use error::{Error, Result};

pub use datasets::{RepresentativeSet, Split, TrajectoryDataset};
pub use decomposition::{Decomposition, DecompositionModel, Landscape};
pub use diffcore::{Activation, Mlp, Tape};
pub use evaluation::{LandscapeGrid, MetricsReport};
pub use integrators::{Method, OdeField};
pub use systems::System;
pub use training::{LossConfig, TrainConfig};
