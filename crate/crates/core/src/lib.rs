//! Robust S- and MM-estimation of multivariate location and scatter under
//! elliptical models.

pub mod asymptotics;
pub mod divergence;
pub mod elliptical;
pub mod error;
pub mod estimator;
pub mod kernels;
pub mod linalg;
pub mod parallel;
pub mod portfolio;
pub mod quadrature;
pub mod rng;
pub mod roots;
pub mod simulation;
pub mod solver;
pub mod spec;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
