use super::init::StartingPoint;
use super::mscale::{m_scale_near, mle_scale};
use crate::divergence::kl_shape_divergence;
use crate::elliptical::GeneratingFunction;
use crate::error::{Error, Result};
use crate::kernels::{EstimatorKernel, KernelKind};
use crate::linalg::{
    mean_and_covariance, row_distances, sym_eigenvalues, to_shape, Matrix, Vector,
};
use crate::stats::median;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Iteration controls shared by every fitting routine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Stop once the shape divergence between iterates falls below this.
    pub tol: f64,
    /// Median of `d` under the reference model, used to turn the shape into
    /// a scatter matrix. Defaults to the chi-squared median.
    pub model_median: Option<f64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol: 1e-10,
            model_median: None,
        }
    }
}

impl FitOptions {
    pub fn with_model_median(mut self, m: f64) -> Self {
        self.model_median = Some(m);
        self
    }

    /// Median taken from the given family.
    pub fn with_reference(self, gen: &GeneratingFunction) -> Result<Self> {
        if gen.is_gaussian() {
            return Ok(self.with_model_median(chi2_median(gen.p())));
        }
        let law = crate::elliptical::DistanceLaw::new(*gen)?;
        Ok(self.with_model_median(law.quantile(0.5)?))
    }

    fn median_d(&self, p: usize) -> f64 {
        self.model_median.unwrap_or_else(|| chi2_median(p))
    }
}

fn chi2_median(p: usize) -> f64 {
    ChiSquared::new(p as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.5)
}

/// Output of a location/scatter fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub kind: KernelKind,
    pub mu_hat: Vector,
    /// Unit-determinant shape.
    pub omega_hat: Matrix,
    /// Median-scaled scatter.
    pub sigma_hat: Matrix,
    /// Scale of the distances under `omega_hat`.
    pub m_scale: f64,
    /// Right-hand side of the scale equation that was used.
    pub b: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Shape divergence of the last step.
    pub final_step: f64,
    /// Scale after each iteration.
    pub scale_trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
enum ScaleRule {
    MScale(f64),
    Fixed(f64),
    Likelihood,
}

/// Maximum-breakdown scale target `1/2 - (p+1)/(2n)`.
pub fn b_max_breakdown(n: usize, p: usize) -> Result<f64> {
    if n < p + 1 {
        return Err(Error::InsufficientData(format!(
            "{n} rows for dimension {p}; at least p + 1 = {} are required",
            p + 1
        )));
    }
    let b = 0.5 - (p as f64 + 1.0) / (2.0 * n as f64);
    if !(b > 0.0) {
        return Err(Error::DegenerateData(format!(
            "n = {n} gives b = {b}; the scale target must be positive"
        )));
    }
    Ok(b)
}

/// Finite-sample breakdown point `(floor(n b) + 1) / n`.
pub fn breakdown_point(n: usize, b: f64) -> f64 {
    let nb = n as f64 * b;
    // absorb rounding when n b is an exact integer
    ((nb + 1e-9).floor() + 1.0) / n as f64
}

/// Largest breakdown point of an equivariant estimator, `floor((n-p+1)/2)/n`.
pub fn max_breakdown_point(n: usize, p: usize) -> f64 {
    ((n + 1).saturating_sub(p) / 2) as f64 / n as f64
}

/// `median(d) / F^{-1}(1/2) * omega`.
pub fn scatter_from_shape(omega: &Matrix, distances: &[f64], model_median: f64) -> Result<Matrix> {
    if distances.is_empty() {
        return Err(Error::InsufficientData("no distances".into()));
    }
    let m = median(distances);
    if !(m > 0.0) {
        return Err(Error::DegenerateData(
            "median distance is zero (at least half the rows sit at the location)".into(),
        ));
    }
    Ok(omega * (m / model_median))
}

fn check_data(data: &Matrix, start: &StartingPoint) -> Result<()> {
    let (n, p) = data.shape();
    if start.mu.len() != p || start.omega.nrows() != p {
        return Err(Error::Dimension {
            expected: p,
            actual: start.mu.len(),
        });
    }
    if n < p + 1 {
        return Err(Error::InsufficientData(format!(
            "{n} rows for {p} columns; at least p + 1 = {} are required",
            p + 1
        )));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateData(
            "data contain non-finite values".into(),
        ));
    }
    Ok(())
}

/// S-estimate by the weighted-sum iteration with the M-scale constraint
/// `mean rho(d_i / sigma) = b`.
pub fn fit_s(
    data: &Matrix,
    kernel: &EstimatorKernel,
    b: f64,
    start: &StartingPoint,
    opts: &FitOptions,
) -> Result<FitResult> {
    check_data(data, start)?;
    if kernel.is_proper() {
        let (n, p) = data.shape();
        let need = (p as f64 + 1.0) / (1.0 - b);
        if !(b < 1.0) || (n as f64) < need - 1e-9 {
            return Err(Error::InsufficientData(format!(
                "a solution needs n >= (p+1)/(1-b) = {need:.3} rows, got {n}"
            )));
        }
    }
    iterate(data, kernel, ScaleRule::MScale(b), b, start, opts)
}

/// MM-estimate with the smoothed hard rejection rho. The scale is held at
/// the median distance under the initial S-estimate.
pub fn fit_mm_shr(
    data: &Matrix,
    c_shr: f64,
    init_from: &FitResult,
    opts: &FitOptions,
) -> Result<FitResult> {
    let start = StartingPoint {
        mu: init_from.mu_hat.clone(),
        omega: init_from.omega_hat.clone(),
        fallback: false,
    };
    fit_mm_shr_from(data, c_shr, &start, opts)
}

/// MM-SHR stage with the first-stage estimate given as a starting point.
/// The fixed scale is the median distance under that estimate.
pub fn fit_mm_shr_from(
    data: &Matrix,
    c_shr: f64,
    start: &StartingPoint,
    opts: &FitOptions,
) -> Result<FitResult> {
    let kernel = EstimatorKernel::shr(data.ncols(), c_shr)?;
    check_data(data, start)?;
    let d = row_distances(data, &start.mu, &start.omega)?;
    let scale = median(&d);
    if !(scale > 0.0) {
        return Err(Error::DegenerateData(
            "median distance under the initial estimate is zero".into(),
        ));
    }
    iterate(
        data,
        &kernel,
        ScaleRule::Fixed(scale),
        f64::NAN,
        start,
        opts,
    )
}

/// Maximum likelihood fit for the given family.
pub fn fit_mle(
    data: &Matrix,
    gen: &GeneratingFunction,
    start: &StartingPoint,
    opts: &FitOptions,
) -> Result<FitResult> {
    check_data(data, start)?;
    if gen.p() != data.ncols() {
        return Err(Error::Dimension {
            expected: gen.p(),
            actual: data.ncols(),
        });
    }
    let kernel = EstimatorKernel::mle(*gen);
    iterate(
        data,
        &kernel,
        ScaleRule::Likelihood,
        gen.p() as f64,
        start,
        opts,
    )
}

/// Sample mean and covariance, packaged as a fit.
pub fn fit_sample(data: &Matrix) -> Result<FitResult> {
    let (n, p) = data.shape();
    if n < p + 1 {
        return Err(Error::InsufficientData(format!(
            "{n} rows for {p} columns; at least p + 1 = {} are required",
            p + 1
        )));
    }
    let (mu, cov) = mean_and_covariance(data);
    // Judge conditioning on the correlation matrix so that one wildly scaled
    // column does not count as singular; a column whose spread is lost in
    // rounding does.
    let mut inv_sd = Vector::zeros(p);
    for j in 0..p {
        let size = data.column(j).amax();
        if !(cov[(j, j)] > (1e-10 * size).powi(2)) {
            return Err(Error::Singular("sample covariance".into()));
        }
        inv_sd[j] = 1.0 / cov[(j, j)].sqrt();
    }
    let corr = Matrix::from_fn(p, p, |i, j| cov[(i, j)] * inv_sd[i] * inv_sd[j]);
    if !(sym_eigenvalues(&corr)[0] > 1e-12) {
        return Err(Error::Singular("sample covariance".into()));
    }
    let omega = to_shape(&cov).map_err(|_| Error::Singular("sample covariance".into()))?;
    let d = row_distances(data, &mu, &omega)?;
    let scale = d.iter().sum::<f64>() / (n as f64 * p as f64);
    Ok(FitResult {
        kind: KernelKind::Mle,
        sigma_hat: cov,
        mu_hat: mu,
        omega_hat: omega,
        m_scale: scale,
        b: p as f64,
        iterations: 0,
        converged: true,
        final_step: 0.0,
        scale_trace: vec![scale],
    })
}

fn solve_scale(
    rule: ScaleRule,
    d: &[f64],
    kernel: &EstimatorKernel,
    prev: Option<f64>,
) -> Result<f64> {
    match rule {
        ScaleRule::MScale(b) => Ok(m_scale_near(d, kernel, b, prev)?.value),
        ScaleRule::Fixed(s) => Ok(s),
        ScaleRule::Likelihood => mle_scale(d, kernel),
    }
}

fn iterate(
    data: &Matrix,
    kernel: &EstimatorKernel,
    rule: ScaleRule,
    b: f64,
    start: &StartingPoint,
    opts: &FitOptions,
) -> Result<FitResult> {
    let (n, p) = data.shape();
    let mut mu = start.mu.clone();
    let mut omega = to_shape(&start.omega)?;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut step = f64::INFINITY;
    let mut iterations = 0;
    let mut w = Vector::zeros(n);
    let mut centred = Matrix::zeros(n, p);

    while iterations < opts.max_iter {
        iterations += 1;
        let d = row_distances(data, &mu, &omega)?;
        let sigma = solve_scale(rule, &d, kernel, trace.last().copied())?;
        trace.push(sigma);
        for (wi, di) in w.iter_mut().zip(&d) {
            *wi = kernel.weight(di / sigma);
        }
        let sw = w.sum();
        if !(sw > 0.0) || !sw.is_finite() {
            return Err(Error::Singular(
                "every observation received zero weight; use a larger tuning parameter".into(),
            ));
        }
        let mu_new = data.tr_mul(&w) / sw;
        for i in 0..n {
            let s = w[i].sqrt();
            for j in 0..p {
                centred[(i, j)] = s * (data[(i, j)] - mu_new[j]);
            }
        }
        let scatter = centred.tr_mul(&centred);
        let omega_new = to_shape(&scatter).map_err(|_| {
            Error::Singular(
                "weighted scatter is singular; too few observations have positive weight \
                 (use a larger tuning parameter)"
                    .into(),
            )
        })?;
        step = kl_shape_divergence(&omega, &omega_new)?;
        mu = mu_new;
        omega = omega_new;
        if step < opts.tol {
            converged = true;
            break;
        }
    }

    let d = row_distances(data, &mu, &omega)?;
    let sigma = solve_scale(rule, &d, kernel, trace.last().copied())?;
    let sigma_hat = scatter_from_shape(&omega, &d, opts.median_d(p))?;
    // with a fixed scale, report the constraint value it implies
    let b = if b.is_nan() {
        d.iter().map(|di| kernel.rho(di / sigma)).sum::<f64>() / n as f64
    } else {
        b
    };
    Ok(FitResult {
        kind: kernel.kind(),
        mu_hat: mu,
        omega_hat: omega,
        sigma_hat,
        m_scale: sigma,
        b,
        iterations,
        converged,
        final_step: step,
        scale_trace: trace,
    })
}
