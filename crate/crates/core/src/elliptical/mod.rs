//! Elliptical families and the law of the squared Mahalanobis distance.

mod family;
mod law;
mod model;

pub use family::{Canonical, Family, GeneratingFunction, LogDerivs};
pub use law::DistanceLaw;
pub use model::EllipticalModel;

pub use crate::linalg::mahalanobis;

/// `(phi, phi', phi'')` at `d`.
pub fn phi_eval(gen: &GeneratingFunction, d: f64) -> (f64, f64, f64) {
    gen.eval(d)
}
