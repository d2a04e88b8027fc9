use crate::error::{Error, Result};
use crate::linalg::{mean_and_covariance, sym_eigenvalues, to_shape, Matrix, Vector};
use crate::stats::{mad, median};

/// Location and unit-determinant shape to start the iteration from.
#[derive(Debug, Clone, PartialEq)]
pub struct StartingPoint {
    pub mu: Vector,
    pub omega: Matrix,
    /// The shape could not be estimated and the identity was used.
    pub fallback: bool,
}

impl StartingPoint {
    /// Start at `mu` and the shape of `scatter`.
    pub fn new(mu: Vector, scatter: &Matrix) -> Result<Self> {
        if scatter.nrows() != mu.len() || scatter.ncols() != mu.len() {
            return Err(Error::Dimension {
                expected: mu.len(),
                actual: scatter.nrows(),
            });
        }
        Ok(Self {
            mu,
            omega: to_shape(scatter)?,
            fallback: false,
        })
    }

    /// Sample mean and covariance shape.
    pub fn sample(data: &Matrix) -> Result<Self> {
        check_size(data)?;
        let (mu, cov) = mean_and_covariance(data);
        Self::new(mu, &cov)
    }

    /// Image under `x -> A x + shift`.
    pub fn transformed(&self, a: &Matrix, shift: &Vector) -> Result<Self> {
        let mu = a * &self.mu + shift;
        let s = a * &self.omega * a.transpose();
        Ok(Self {
            mu,
            omega: to_shape(&s)?,
            fallback: self.fallback,
        })
    }
}

fn check_size(data: &Matrix) -> Result<()> {
    let (n, p) = data.shape();
    if p == 0 {
        return Err(Error::InsufficientData("data have no columns".into()));
    }
    if n < p + 1 {
        return Err(Error::InsufficientData(format!(
            "{n} rows for {p} columns; at least p + 1 = {} are required",
            p + 1
        )));
    }
    Ok(())
}

/// Deterministic robust start: coordinatewise median for the location and
/// the covariance shape of the half of the rows closest to it in
/// MAD-standardized coordinates.
pub fn initial_estimate(data: &Matrix) -> Result<StartingPoint> {
    check_size(data)?;
    let (n, p) = data.shape();
    let mut center = Vector::zeros(p);
    let mut spread = Vector::zeros(p);
    for j in 0..p {
        let col: Vec<f64> = data.column(j).iter().copied().collect();
        let m = median(&col);
        let mut s = 1.4826 * mad(&col, m);
        if !(s > 0.0) {
            s = col.iter().map(|v| (v - m).abs()).sum::<f64>() / n as f64;
        }
        if !(s > 0.0) {
            s = 1.0;
        }
        center[j] = m;
        spread[j] = s;
    }
    let mut order: Vec<(f64, usize)> = (0..n)
        .map(|i| {
            let r = (0..p)
                .map(|j| ((data[(i, j)] - center[j]) / spread[j]).powi(2))
                .sum::<f64>();
            (r, i)
        })
        .collect();
    order.sort_by(|x, y| x.0.total_cmp(&y.0).then_with(|| row_cmp(data, x.1, y.1)));
    let h = n.div_ceil(2).max(p + 1);
    let mut half = Matrix::zeros(h, p);
    for (k, &(_, i)) in order.iter().take(h).enumerate() {
        half.row_mut(k).copy_from(&data.row(i));
    }
    let (_, cov) = mean_and_covariance(&half);
    let ev = sym_eigenvalues(&cov);
    let well_conditioned = ev[0] > 1e-12 * ev[p - 1] && ev[p - 1].is_finite();
    match to_shape(&cov) {
        Ok(omega) if well_conditioned => Ok(StartingPoint {
            mu: center,
            omega,
            fallback: false,
        }),
        _ => Ok(StartingPoint {
            mu: center,
            omega: Matrix::identity(p, p),
            fallback: true,
        }),
    }
}

/// Lexicographic row order so ties do not depend on row position.
fn row_cmp(data: &Matrix, a: usize, b: usize) -> std::cmp::Ordering {
    for j in 0..data.ncols() {
        let o = data[(a, j)].total_cmp(&data[(b, j)]);
        if o.is_ne() {
            return o;
        }
    }
    std::cmp::Ordering::Equal
}
