//! Subspace projection methods for ill-posed operator equations.

pub mod corpus;
pub mod geometry;
pub mod harness;
pub mod operators;
pub mod sampling;
pub mod solvers;
pub mod vector;

pub use vector::{RealVector, VectorError};
