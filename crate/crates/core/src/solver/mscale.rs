use crate::error::{Error, Result};
use crate::kernels::EstimatorKernel;
use crate::roots::{bisect, newton_bisect};
use crate::stats::median;

/// Solution of the M-scale equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MScale {
    pub value: f64,
    /// Every scale up to `value` satisfies the equation; the supremum is
    /// returned.
    pub degenerate: bool,
}

/// Expand a bracket in `u = ln(sigma)` around `u0` until the decreasing
/// function `g` changes sign.
fn bracket<G: Fn(f64) -> f64>(g: &G, u0: f64, first_step: f64) -> Option<(f64, f64)> {
    let g0 = g(u0);
    if g0 == 0.0 {
        return Some((u0, u0));
    }
    let dir = if g0 > 0.0 { 1.0 } else { -1.0 };
    let mut step = first_step;
    let mut prev = u0;
    while step < 2048.0 {
        let u = u0 + dir * step;
        let gu = g(u);
        if gu.is_nan() {
            return None;
        }
        if gu == 0.0 || gu.signum() != g0.signum() {
            return Some(if dir > 0.0 { (prev, u) } else { (u, prev) });
        }
        prev = u;
        step *= 2.0;
    }
    None
}

/// Scale `sigma` with `mean rho(d_i / sigma) = b`.
pub fn m_scale(distances: &[f64], kernel: &EstimatorKernel, b: f64) -> Result<MScale> {
    m_scale_near(distances, kernel, b, None)
}

/// [`m_scale`] with the search started at `guess`, typically the scale of
/// the previous iterate.
pub fn m_scale_near(
    distances: &[f64],
    kernel: &EstimatorKernel,
    b: f64,
    guess: Option<f64>,
) -> Result<MScale> {
    let n = distances.len();
    if n == 0 {
        return Err(Error::InsufficientData("no distances".into()));
    }
    if distances.iter().any(|d| !(*d >= 0.0) || !d.is_finite()) {
        return Err(Error::DegenerateData(
            "distances must be finite and non-negative".into(),
        ));
    }
    let positive = distances.iter().filter(|d| **d > 0.0).count();
    let proper = kernel.is_proper();
    if proper {
        if !(b > 0.0 && b <= 1.0) {
            return Err(Error::DegenerateData(format!(
                "b = {b} must lie in (0, 1) for a bounded rho"
            )));
        }
        let need = (n as f64 * (1.0 - b) - 1e-9).ceil().max(0.0) as usize;
        if positive < need || (positive as f64) < b * n as f64 {
            return Err(Error::DegenerateData(format!(
                "only {positive} of {n} distances are positive; at least {} are needed for b = {b}",
                need.max((b * n as f64).ceil() as usize)
            )));
        }
        if b == 1.0 {
            let min_pos = distances.iter().copied().fold(f64::INFINITY, f64::min);
            if !(min_pos > 0.0) || !kernel.c().is_finite() {
                return Err(Error::DegenerateData(
                    "b = 1 has no scale solution for these distances".into(),
                ));
            }
            return Ok(MScale {
                value: min_pos / kernel.c(),
                degenerate: true,
            });
        }
    } else if !b.is_finite() {
        return Err(Error::DegenerateData(format!("b = {b} is not finite")));
    }
    if positive == 0 {
        return Err(Error::DegenerateData("all distances are zero".into()));
    }

    let nf = n as f64;
    let g = |u: f64| {
        let inv = (-u).exp();
        distances.iter().map(|&d| kernel.rho(d * inv)).sum::<f64>() / nf - b
    };
    let fdf = |u: f64| {
        let inv = (-u).exp();
        let (mut s, mut ds) = (0.0, 0.0);
        for &d in distances {
            let t = d * inv;
            let (r, w) = kernel.rho_weight(t);
            s += r;
            ds -= w * t;
        }
        (s / nf - b, ds / nf)
    };
    let (u0, first_step) = match guess {
        Some(s) if s > 0.0 && s.is_finite() => (s.ln(), 0.05),
        _ => {
            let pos: Vec<f64> = distances.iter().copied().filter(|d| *d > 0.0).collect();
            (median(&pos).ln(), 1.0)
        }
    };
    let (lo, hi) = bracket(&g, u0, first_step).ok_or_else(|| {
        Error::DegenerateData(format!(
            "no scale solves mean rho = {b} for these distances"
        ))
    })?;
    if lo == hi {
        return Ok(MScale {
            value: lo.exp(),
            degenerate: false,
        });
    }
    let start = if guess.is_some() && u0 > lo && u0 < hi {
        u0
    } else {
        0.5 * (lo + hi)
    };
    let mut u = newton_bisect(fdf, lo, hi, start, 1e-15)?;
    if g(u).abs() > 1e-12 {
        // Flat stretches defeat Newton; finish by plain bisection.
        u = bisect(g, lo, hi, 0.0)?;
    }
    Ok(MScale {
        value: u.exp(),
        degenerate: false,
    })
}

/// Scale solving `mean t w(t) = p` with `t = d / sigma`, the likelihood
/// equation for the scale of `d`.
pub(crate) fn mle_scale(distances: &[f64], kernel: &EstimatorKernel) -> Result<f64> {
    let p = kernel.p() as f64;
    let nf = distances.len() as f64;
    let g = |u: f64| {
        let inv = (-u).exp();
        distances
            .iter()
            .map(|&d| {
                let t = d * inv;
                t * kernel.weight(t)
            })
            .sum::<f64>()
            / nf
            - p
    };
    let pos: Vec<f64> = distances.iter().copied().filter(|d| *d > 0.0).collect();
    if pos.is_empty() {
        return Err(Error::DegenerateData("all distances are zero".into()));
    }
    let (lo, hi) = bracket(&g, median(&pos).ln(), 1.0)
        .ok_or_else(|| Error::DegenerateData("likelihood scale equation has no solution".into()))?;
    if lo == hi {
        return Ok(lo.exp());
    }
    Ok(bisect(g, lo, hi, 1e-14)?.exp())
}
