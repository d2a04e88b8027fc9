//! Minimum-variance allocation from estimated location and shape, with a
//! daily-rebalance backtest.

use crate::elliptical::{DistanceLaw, EllipticalModel, Family, GeneratingFunction};
use crate::error::{Error, Result};
use crate::estimator::Estimator;
use crate::linalg::{cholesky, row_distances, Matrix, Vector};
use crate::rng::trial_rng;
use crate::solver::FitOptions;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use std::ops::Range;

/// Daily returns, one column per asset.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    pub dates: Vec<String>,
    pub assets: Vec<String>,
    /// `T x p`.
    pub returns: Matrix,
}

impl ReturnSeries {
    pub fn new(dates: Vec<String>, assets: Vec<String>, returns: Matrix) -> Result<Self> {
        if dates.len() != returns.nrows() {
            return Err(Error::Dimension {
                expected: returns.nrows(),
                actual: dates.len(),
            });
        }
        if assets.len() != returns.ncols() {
            return Err(Error::Dimension {
                expected: returns.ncols(),
                actual: assets.len(),
            });
        }
        if returns.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateData(
                "returns contain non-finite values".into(),
            ));
        }
        Ok(Self {
            dates,
            assets,
            returns,
        })
    }

    pub fn days(&self) -> usize {
        self.returns.nrows()
    }

    pub fn assets(&self) -> usize {
        self.returns.ncols()
    }
}

/// Portfolio weights with the target return they were solved for.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Allocation {
    pub alpha: Vec<f64>,
    pub mu_p: f64,
    /// Expected returns were all equal to `mu_p`; the global minimum-variance
    /// portfolio was returned.
    pub degenerate: bool,
}

impl Allocation {
    pub fn weights(&self) -> Vector {
        Vector::from_column_slice(&self.alpha)
    }
}

/// Minimise `a' Omega a` subject to `a' mu = mu_p` and `a' 1 = 1`.
pub fn min_variance_weights(mu_r: &Vector, omega_r: &Matrix, mu_p: f64) -> Result<Allocation> {
    let p = mu_r.len();
    if omega_r.nrows() != p || omega_r.ncols() != p {
        return Err(Error::Dimension {
            expected: p,
            actual: omega_r.nrows(),
        });
    }
    let ch = cholesky(omega_r)?;
    let ones = Vector::from_element(p, 1.0);
    let inv_one = ch.solve(&ones);
    let inv_mu = ch.solve(mu_r);
    let a = ones.dot(&inv_one);
    let b = ones.dot(&inv_mu);
    let c = mu_r.dot(&inv_mu);
    let det = a * c - b * b;
    let spread = mu_r.max() - mu_r.min();
    let level = mu_r.amax().max(mu_p.abs()).max(f64::MIN_POSITIVE);
    if spread <= 1e-12 * level || det <= 1e-14 * a * c.abs() {
        let common = mu_r.mean();
        if (mu_p - common).abs() <= 1e-12 * level {
            let alpha = inv_one / a;
            return Ok(Allocation {
                alpha: alpha.iter().copied().collect(),
                mu_p,
                degenerate: true,
            });
        }
        return Err(Error::Infeasible(format!(
            "all expected returns equal {common}; a target of {mu_p} cannot be met"
        )));
    }
    let alpha = (inv_one * (c - b * mu_p) + inv_mu * (a * mu_p - b)) / det;
    Ok(Allocation {
        alpha: alpha.iter().copied().collect(),
        mu_p,
        degenerate: false,
    })
}

/// Outcome of one backtest.
#[derive(Debug, Clone, Serialize)]
pub struct BacktestReport {
    pub estimator: String,
    pub alpha: Vec<f64>,
    pub mu_p: f64,
    pub holdout_variance: f64,
    pub window: (usize, usize),
    pub holdout: (usize, usize),
    /// The holdout days are part of the estimation window.
    pub holdout_in_window: bool,
    pub converged: bool,
    pub degenerate: bool,
}

/// Fit on `window`, allocate for `mu_p`, and report the sample variance of
/// the daily portfolio returns over `holdout`.
pub fn backtest(
    series: &ReturnSeries,
    window: Range<usize>,
    holdout: Range<usize>,
    estimator: &Estimator,
    b: f64,
    mu_p: f64,
    opts: &FitOptions,
) -> Result<BacktestReport> {
    let t = series.days();
    if window.end > t || holdout.end > t || window.is_empty() || holdout.len() < 2 {
        return Err(Error::Domain(format!(
            "window {window:?} and holdout {holdout:?} must be non-empty ranges within {t} days \
             (holdout needs at least 2 days)"
        )));
    }
    let data = series.returns.rows(window.start, window.len()).into_owned();
    let fit = estimator.fit(&data, b, opts)?;
    let alloc = min_variance_weights(&fit.mu_hat, &fit.omega_hat, mu_p)?;
    let w = alloc.weights();
    let daily: Vec<f64> = holdout
        .clone()
        .map(|i| series.returns.row(i).transpose().dot(&w))
        .collect();
    let mean = daily.iter().sum::<f64>() / daily.len() as f64;
    let var = daily.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (daily.len() - 1) as f64;
    Ok(BacktestReport {
        estimator: estimator.spec().to_string(),
        alpha: alloc.alpha,
        mu_p,
        holdout_variance: var,
        window: (window.start, window.end),
        holdout: (holdout.start, holdout.end),
        holdout_in_window: holdout.start < window.end && window.start < holdout.end,
        converged: fit.converged,
        degenerate: alloc.degenerate,
    })
}

/// Variance-gamma parameters fitted to the distances of the returns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VgFit {
    pub lambda: f64,
    pub psi: f64,
    pub log_likelihood: f64,
}

/// Distance log-likelihood of `VG(lambda, psi)`, or `None` where it cannot be
/// evaluated.
fn vg_log_likelihood(d: &[f64], p: usize, lambda: f64, psi: f64) -> Option<f64> {
    let gen = GeneratingFunction::new(Family::VarianceGamma { lambda, psi }, p).ok()?;
    let law = DistanceLaw::new(gen).ok()?;
    let ln_beta = law.beta().ln();
    let half = p as f64 / 2.0 - 1.0;
    let ll: f64 = d
        .iter()
        .map(|&di| ln_beta + half * di.ln() + gen.ln_phi(di))
        .sum();
    ll.is_finite().then_some(ll)
}

/// Maximum likelihood `(lambda, psi)` of the variance-gamma distance law,
/// with location and shape held at the plug-in values. A coarse grid is
/// refined by golden-section search on the profile likelihood of `lambda`.
/// With a unit-determinant shape, `psi` absorbs the overall scale.
pub fn fit_vg_params(data: &Matrix, mu: &Vector, omega: &Matrix) -> Result<VgFit> {
    let p = data.ncols();
    let d = row_distances(data, mu, omega)?;
    if d.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::DegenerateData(
            "a row coincides with the location; its distance is zero".into(),
        ));
    }
    fit_vg_grid(
        &d,
        p,
        &crate::roots::geometric_grid(0.05, 20.0, 13),
        &crate::roots::geometric_grid(0.01, 100.0, 13),
        true,
    )
}

/// Best grid point, optionally refined.
pub fn fit_vg_grid(
    d: &[f64],
    p: usize,
    lambdas: &[f64],
    psis: &[f64],
    refine: bool,
) -> Result<VgFit> {
    let mut best: Option<VgFit> = None;
    for &l in lambdas {
        for &s in psis {
            if let Some(ll) = vg_log_likelihood(d, p, l, s) {
                if best.is_none_or(|b| ll > b.log_likelihood) {
                    best = Some(VgFit {
                        lambda: l,
                        psi: s,
                        log_likelihood: ll,
                    });
                }
            }
        }
    }
    let mut best = best.ok_or_else(|| {
        Error::DegenerateData("the variance-gamma likelihood is undefined on the whole grid".into())
    })?;
    if !refine {
        return Ok(best);
    }
    // Profile over psi: for each lambda, psi is searched around the value
    // matching the mean distance, E[d] = 2 p lambda / psi.
    let mean_d = d.iter().sum::<f64>() / d.len() as f64;
    let profile = |u: f64| -> Option<(f64, f64)> {
        let l = u.exp();
        let centre = (2.0 * p as f64 * l / mean_d).ln();
        let v = golden(
            |v| vg_log_likelihood(d, p, l, v.exp()),
            centre - 1.5,
            centre + 1.5,
        );
        vg_log_likelihood(d, p, l, v.exp()).map(|ll| (ll, v.exp()))
    };
    let dl = if lambdas.len() > 1 {
        (lambdas[1] / lambdas[0]).ln()
    } else {
        1.0
    };
    let u = golden(
        |u| profile(u).map(|(ll, _)| ll),
        best.lambda.ln() - 2.0 * dl,
        best.lambda.ln() + 2.0 * dl,
    );
    if let Some((ll, psi)) = profile(u) {
        if ll > best.log_likelihood {
            best = VgFit {
                lambda: u.exp(),
                psi,
                log_likelihood: ll,
            };
        }
    }
    Ok(best)
}

fn golden<F: Fn(f64) -> Option<f64>>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let val = |x: f64| f(x).unwrap_or(f64::NEG_INFINITY);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (val(x1), val(x2));
    for _ in 0..20 {
        if f1 > f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = val(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = val(x2);
        }
    }
    if f1 > f2 {
        x1
    } else {
        x2
    }
}

/// Settings of the synthetic return generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticMarket {
    pub assets: usize,
    pub days: usize,
    pub lambda: f64,
    pub psi: f64,
    /// Typical daily volatility of each asset.
    pub daily_vol: f64,
    /// Mean daily returns are spread evenly over this interval.
    pub drift: (f64, f64),
    /// Correlation between assets in calm periods.
    pub correlation: f64,
    /// Days of the high-volatility block.
    pub shock_days: Range<usize>,
    /// Standard deviation of the common shock, in units of `daily_vol`.
    pub shock_size: f64,
    pub seed: u64,
}

impl SyntheticMarket {
    pub fn new(assets: usize, days: usize) -> Self {
        Self {
            assets,
            days,
            lambda: 1.0,
            psi: 2.0,
            daily_vol: 0.01,
            drift: (0.0002, 0.0008),
            correlation: 0.3,
            shock_days: days..days,
            shock_size: 8.0,
            seed: 0,
        }
    }

    /// Variance-gamma returns; on the shock days a common factor with
    /// negative drift is added to every asset.
    pub fn generate(&self) -> Result<ReturnSeries> {
        let p = self.assets;
        if p == 0 || self.days < 2 {
            return Err(Error::Domain("need at least one asset and two days".into()));
        }
        let mu = Vector::from_fn(p, |i, _| {
            if p == 1 {
                self.drift.0
            } else {
                self.drift.0 + (self.drift.1 - self.drift.0) * i as f64 / (p - 1) as f64
            }
        });
        let v = self.daily_vol * self.daily_vol;
        let sigma = Matrix::from_fn(p, p, |i, j| if i == j { v } else { self.correlation * v });
        let gen = GeneratingFunction::new(
            Family::VarianceGamma {
                lambda: self.lambda,
                psi: self.psi,
            },
            p,
        )?;
        let model = EllipticalModel::new(mu, sigma, gen)?;
        let mut rng = trial_rng(self.seed, 0);
        let mut r = model.sample_with(self.days, &mut rng)?;
        let mut shock_rng = trial_rng(self.seed, 1);
        for t in self.shock_days.clone().filter(|t| *t < self.days) {
            let z: f64 = StandardNormal.sample(&mut shock_rng);
            let f = self.shock_size * self.daily_vol * (z - 0.5);
            for j in 0..p {
                let idio: f64 = StandardNormal.sample(&mut shock_rng);
                r[(t, j)] += f * (1.0 + 0.5 * j as f64 / p as f64) + 0.5 * self.daily_vol * idio;
            }
        }
        Ok(ReturnSeries {
            dates: (0..self.days).map(|t| format!("day{t:05}")).collect(),
            assets: (0..p).map(|j| format!("A{j}")).collect(),
            returns: r,
        })
    }
}
