//! Sub-sampled Newton methods for finite-sum GLM objectives.

pub mod bench;
pub mod data;
pub mod error;
pub mod linesearch;
pub mod linsolve;
pub mod model;
pub mod regularize;
pub mod sampling;
pub mod solvers;
pub mod theory;

pub use error::{Result, SsnError};
