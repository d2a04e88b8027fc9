//! Gaussian Kullback-Leibler divergence between (location, scatter) pairs.

use crate::error::{Error, Result};
use crate::linalg::{cholesky, Matrix, Vector};

/// `D(mu, S; mu_hat, S_hat) = (tr(S^-1 S_hat) + (mu-mu_hat)' S^-1 (mu-mu_hat) - p
/// - ln(|S_hat|/|S|)) / 2`.
pub fn kl_divergence(mu: &Vector, s: &Matrix, mu_hat: &Vector, s_hat: &Matrix) -> Result<f64> {
    let p = mu.len();
    if mu_hat.len() != p || s.nrows() != p || s_hat.nrows() != p {
        return Err(Error::Dimension {
            expected: p,
            actual: s_hat.nrows(),
        });
    }
    let ch = cholesky(s)?;
    let ch_hat = cholesky(s_hat)?;
    let ln_det = |l: &Matrix| 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let (l, l_hat) = (ch.l(), ch_hat.l());
    // tr(S^-1 S_hat) = ||L^-1 L_hat||_F^2
    let m = l
        .solve_lower_triangular(&l_hat)
        .ok_or_else(|| Error::Singular("reference scatter".into()))?;
    let diff = mu - mu_hat;
    let y = l
        .solve_lower_triangular(&diff)
        .ok_or_else(|| Error::Singular("reference scatter".into()))?;
    let d = 0.5 * (m.norm_squared() + y.norm_squared() - p as f64 - (ln_det(&l_hat) - ln_det(&l)));
    Ok(d.max(0.0))
}

/// Divergence between two shape matrices at a common location.
pub fn kl_shape_divergence(omega: &Matrix, omega_hat: &Matrix) -> Result<f64> {
    let z = Vector::zeros(omega.nrows());
    kl_divergence(&z, omega, &z, omega_hat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn identical_arguments_give_zero() {
        let s = Matrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let mu = Vector::from_vec(vec![1.0, 2.0]);
        assert_eq!(kl_divergence(&mu, &s, &mu, &s).unwrap(), 0.0);
    }

    #[test]
    fn doubled_scatter() {
        let s = Matrix::identity(2, 2);
        let mu = Vector::zeros(2);
        let d = kl_divergence(&mu, &s, &mu, &(&s * 2.0)).unwrap();
        assert_relative_eq!(d, 1.0 - 2f64.ln(), epsilon = 1e-14);
    }

    #[test]
    fn location_term() {
        let s = Matrix::identity(3, 3) * 4.0;
        let mu = Vector::zeros(3);
        let mu_hat = Vector::from_vec(vec![2.0, 0.0, 0.0]);
        assert_relative_eq!(
            kl_divergence(&mu, &s, &mu_hat, &s).unwrap(),
            0.5,
            epsilon = 1e-14
        );
    }

    #[test]
    fn non_pd_rejected() {
        let bad = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(kl_shape_divergence(&Matrix::identity(2, 2), &bad).is_err());
    }
}
