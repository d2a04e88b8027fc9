//! Small dense linear-algebra helpers on top of `nalgebra`.

use crate::error::{Error, Result};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky(m: &Matrix) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone())
        .ok_or_else(|| Error::Singular(format!("{}x{} matrix", m.nrows(), m.ncols())))
}

/// Natural log of the determinant of an SPD matrix.
pub fn ln_det_spd(m: &Matrix) -> Result<f64> {
    let ch = cholesky(m)?;
    Ok(2.0 * ch.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>())
}

/// Rescale an SPD matrix to unit determinant, `S / |S|^{1/p}`.
pub fn to_shape(m: &Matrix) -> Result<Matrix> {
    let p = m.nrows() as f64;
    let ld = ln_det_spd(m)?;
    Ok(m * (-ld / p).exp())
}

/// Squared Mahalanobis distance `(x-mu)' S^{-1} (x-mu)`.
pub fn mahalanobis(x: &Vector, mu: &Vector, sigma: &Matrix) -> Result<f64> {
    if x.len() != mu.len() {
        return Err(Error::Dimension {
            expected: mu.len(),
            actual: x.len(),
        });
    }
    if sigma.nrows() != mu.len() || sigma.ncols() != mu.len() {
        return Err(Error::Dimension {
            expected: mu.len(),
            actual: sigma.nrows(),
        });
    }
    let ch = cholesky(sigma)?;
    Ok(mahalanobis_with(&ch, &(x - mu)))
}

/// Squared Mahalanobis norm of a centred vector given a Cholesky factor.
pub fn mahalanobis_with(ch: &Cholesky<f64, Dyn>, centred: &Vector) -> f64 {
    let l = ch.l_dirty();
    let mut y = centred.clone();
    // forward substitution with the lower-triangular factor
    let n = y.len();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    y.norm_squared()
}

/// Squared distances of every row of `data` from `mu` under `sigma`.
pub fn row_distances(data: &Matrix, mu: &Vector, sigma: &Matrix) -> Result<Vec<f64>> {
    let ch = cholesky(sigma)?;
    let l = ch.l_dirty();
    let p = mu.len();
    let mut y = vec![0.0; p];
    Ok((0..data.nrows())
        .map(|r| {
            for i in 0..p {
                let mut s = data[(r, i)] - mu[i];
                for k in 0..i {
                    s -= l[(i, k)] * y[k];
                }
                y[i] = s / l[(i, i)];
            }
            y.iter().map(|v| v * v).sum()
        })
        .collect())
}

/// Returns `true` when `m` is symmetric within `tol` (relative to its scale).
pub fn is_symmetric(m: &Matrix, tol: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let scale = m.amax().max(1.0);
    (0..m.nrows()).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= tol * scale))
}

/// Symmetrise in place, averaging with the transpose.
pub fn symmetrize(m: &mut Matrix) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(m: &Matrix) -> Vec<f64> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Sample mean and (n-1)-normalised covariance of the rows of `data`.
pub fn mean_and_covariance(data: &Matrix) -> (Vector, Matrix) {
    let n = data.nrows();
    let p = data.ncols();
    let mean = Vector::from_iterator(p, (0..p).map(|j| data.column(j).sum() / n as f64));
    let mut cov = Matrix::zeros(p, p);
    let mut c = Vector::zeros(p);
    for r in 0..n {
        for j in 0..p {
            c[j] = data[(r, j)] - mean[j];
        }
        cov.ger(1.0, &c, &c, 1.0);
    }
    let denom = (n.max(2) - 1) as f64;
    (mean, cov / denom)
}
