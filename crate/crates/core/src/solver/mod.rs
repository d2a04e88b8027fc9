//! Weighted-sum fitting of S-, MM- and likelihood estimates of location and
//! scatter.

mod fit;
mod init;
mod mscale;

pub use fit::{
    b_max_breakdown, breakdown_point, fit_mle, fit_mm_shr, fit_mm_shr_from, fit_s, fit_sample,
    max_breakdown_point, scatter_from_shape, FitOptions, FitResult,
};
pub use init::{initial_estimate, StartingPoint};
pub use mscale::{m_scale, m_scale_near, MScale};

use crate::error::Result;

/// Scale target of an S-estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BreakdownConfig {
    pub b: f64,
}

impl BreakdownConfig {
    /// Target giving the largest finite-sample breakdown point.
    pub fn max_breakdown(n: usize, p: usize) -> Result<Self> {
        Ok(Self {
            b: b_max_breakdown(n, p)?,
        })
    }

    pub fn breakdown_point(&self, n: usize) -> f64 {
        breakdown_point(n, self.b)
    }
}
