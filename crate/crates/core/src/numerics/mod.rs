//! Dense linear algebra, the seeded generator, and the finite-difference
//! gradient oracle.

mod finite_diff;
mod matrix;
mod rng;

pub use finite_diff::{finite_diff_grad, relative_error};
pub use matrix::{matmul, matmul_nt, matmul_tn, Matrix};
pub use rng::{gaussian_fill, Rng};

/// Dot product accumulated left to right.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
