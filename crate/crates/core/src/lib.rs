//! Nonparametric estimation of multivariate Pickands dependence functions.

pub mod bench;
pub mod bernstein;
pub mod bootstrap;
pub mod constraints;
pub mod error;
pub mod madogram;
pub mod models;
pub mod projection;
pub mod qp;

pub use bernstein::{BernsteinBasis, MultiIndex, SimplexPoint};
pub use error::{Error, Result};
pub use madogram::{EstimatorKind, PilotEstimate, SampleMatrix};
