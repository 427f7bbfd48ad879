//! Inputs shared by the kernel benchmarks.

use ndarray::Array2;
use quasipot::{Activation, DecompositionModel};

/// Deterministic points spread over `[-1, 1]^d`.
pub fn points(n: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, d), |(i, k)| ((i * 7919 + k * 104_729) % 2001) as f64 / 1000.0 - 1.0)
}

pub fn model(d: usize, width: usize) -> DecompositionModel {
    DecompositionModel::init(d, width, Activation::Tanh, 0).expect("valid model shape")
}
