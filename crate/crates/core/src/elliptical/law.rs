//! Distribution of the squared Mahalanobis distance `d` of an elliptical
//! vector: density `beta_p d^{p/2-1} phi(d)` with numerically computed
//! normalization, distribution function, quantiles and expectations.
//!
//! Integration runs in a compactified variable `v`: `d = scale * tan(v)` on
//! `[0, pi/2)` for unbounded support and `d = upper * v` on `[0, 1]` when the
//! support is bounded. The range of `v` is cut into equal panels whose
//! cumulative masses are cached, so that `cdf` and `quantile` only need one
//! short integral each.

use super::family::GeneratingFunction;
use crate::error::{Error, Result};
use crate::quadrature::{integrate_pieces, Tolerance};
use crate::roots::{geometric_grid, newton_bisect};
use std::f64::consts::FRAC_PI_2;

const PANELS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Map {
    Tan { scale: f64 },
    Linear { upper: f64 },
}

impl Map {
    fn v_max(self) -> f64 {
        match self {
            Map::Tan { .. } => FRAC_PI_2,
            Map::Linear { .. } => 1.0,
        }
    }

    #[inline]
    fn d(self, v: f64) -> f64 {
        match self {
            Map::Tan { scale } => scale * v.tan(),
            Map::Linear { upper } => upper * v,
        }
    }

    #[inline]
    fn jacobian(self, v: f64) -> f64 {
        match self {
            Map::Tan { scale } => {
                let c = v.cos();
                scale / (c * c)
            }
            Map::Linear { upper } => upper,
        }
    }

    fn v(self, d: f64) -> f64 {
        match self {
            Map::Tan { scale } => (d / scale).atan(),
            Map::Linear { upper } => (d / upper).min(1.0),
        }
    }
}

/// Law of `d` for a given generating function and dimension.
#[derive(Debug, Clone)]
pub struct DistanceLaw {
    gen: GeneratingFunction,
    half_p_minus_one: f64,
    map: Map,
    /// Offset subtracted from the log-integrand before exponentiation.
    shift: f64,
    /// Integral of the shifted, mapped integrand.
    total: f64,
    ln_beta: f64,
    breaks: Vec<f64>,
    cum: Vec<f64>,
    tol: Tolerance,
}

impl DistanceLaw {
    /// Normalizes the density of `d`; fails when the quadrature does.
    pub fn new(gen: GeneratingFunction) -> Result<Self> {
        let p = gen.p() as f64;
        let half_p_minus_one = p / 2.0 - 1.0;
        let log_kernel = |d: f64| -> f64 {
            let lead = if half_p_minus_one == 0.0 {
                0.0
            } else {
                half_p_minus_one * d.ln()
            };
            lead + gen.ln_phi(d)
        };

        // Coarse survey in log(d) to pick a stable offset and a mapping scale.
        let upper = gen.support_upper();
        let hi = upper.map(|u| u * (1.0 - 1e-9)).unwrap_or(1e12);
        let grid = geometric_grid(1e-12, hi, 600);
        let logs: Vec<f64> = grid.iter().map(|&d| log_kernel(d)).collect();
        let shift = logs
            .iter()
            .copied()
            .filter(|v| v.is_finite())
            .fold(f64::NEG_INFINITY, f64::max);
        if !shift.is_finite() {
            return Err(Error::Quadrature {
                residual: f64::INFINITY,
            });
        }
        let mass: Vec<f64> = grid
            .iter()
            .zip(&logs)
            .map(|(&d, &l)| {
                if l.is_finite() {
                    (l - shift).exp() * d
                } else {
                    0.0
                }
            })
            .collect();
        let crude_total: f64 = mass.iter().sum();
        let mut acc = 0.0;
        let mut median = grid[grid.len() / 2];
        for (d, m) in grid.iter().zip(&mass) {
            acc += m;
            if acc >= 0.5 * crude_total {
                median = *d;
                break;
            }
        }
        let dlnd = (grid[1] / grid[0]).ln();
        let map = match upper {
            Some(u) => Map::Linear { upper: u },
            None => Map::Tan { scale: median },
        };
        let tol = Tolerance {
            abs: 1e-13 * crude_total * dlnd,
            rel: 1e-13,
            max_segments: 4000,
        };

        let mut law = Self {
            gen,
            half_p_minus_one,
            map,
            shift,
            total: 1.0,
            ln_beta: 0.0,
            breaks: Vec::new(),
            cum: Vec::new(),
            tol,
        };
        let v_max = map.v_max();
        let breaks: Vec<f64> = (0..=PANELS)
            .map(|k| v_max * k as f64 / PANELS as f64)
            .collect();
        let mut cum = Vec::with_capacity(PANELS + 1);
        cum.push(0.0);
        let mut running = 0.0;
        for w in breaks.windows(2) {
            let piece = integrate_pieces(&|v| law.mapped(v), &[w[0], w[1]], tol)?;
            running += piece.value;
            cum.push(running);
        }
        if !(running > 0.0) || !running.is_finite() {
            return Err(Error::Quadrature {
                residual: f64::INFINITY,
            });
        }
        for c in cum.iter_mut() {
            *c /= running;
        }
        law.total = running;
        law.ln_beta = -shift - running.ln();
        law.breaks = breaks;
        law.cum = cum;
        Ok(law)
    }

    pub fn generating_function(&self) -> &GeneratingFunction {
        &self.gen
    }

    pub fn p(&self) -> usize {
        self.gen.p()
    }

    /// Normalizing constant `beta_p` of the density of `d`.
    pub fn beta(&self) -> f64 {
        self.ln_beta.exp()
    }

    pub fn ln_beta(&self) -> f64 {
        self.ln_beta
    }

    /// Upper end of the support of `d` (`inf` when unbounded).
    pub fn support_upper(&self) -> f64 {
        self.gen.support_upper().unwrap_or(f64::INFINITY)
    }

    #[inline]
    fn ln_kernel(&self, d: f64) -> f64 {
        let lead = if self.half_p_minus_one == 0.0 {
            0.0
        } else {
            self.half_p_minus_one * d.ln()
        };
        lead + self.gen.ln_phi(d)
    }

    /// Shifted integrand in the mapped variable.
    #[inline]
    fn mapped(&self, v: f64) -> f64 {
        let d = self.map.d(v);
        if !(d > 0.0) {
            return 0.0;
        }
        let l = self.ln_kernel(d) - self.shift;
        if l == f64::NEG_INFINITY || l.is_nan() {
            return 0.0;
        }
        l.exp() * self.map.jacobian(v)
    }

    /// `ln f(d)`.
    pub fn ln_density(&self, d: f64) -> f64 {
        if d < 0.0 || d >= self.support_upper() {
            return f64::NEG_INFINITY;
        }
        let l = self.ln_kernel(d);
        if l.is_nan() {
            // 0 * inf at d = 0; take the limit from the right.
            return self.ln_kernel(1e-200) + self.ln_beta;
        }
        l + self.ln_beta
    }

    /// Density `f(d) = beta_p d^{p/2-1} phi(d)`.
    pub fn density(&self, d: f64) -> f64 {
        self.ln_density(d).exp()
    }

    fn partial(&self, k: usize, v: f64) -> f64 {
        let a = self.breaks[k];
        if v <= a {
            return 0.0;
        }
        integrate_pieces(&|x| self.mapped(x), &[a, v], self.tol)
            .map(|r| r.value)
            .unwrap_or_else(|_| crate::quadrature::gk21(&|x| self.mapped(x), a, v).value)
            / self.total
    }

    fn panel_of(&self, v: f64) -> usize {
        let w = self.map.v_max() / PANELS as f64;
        ((v / w).floor() as usize).min(PANELS - 1)
    }

    /// Distribution function `F(d)`.
    pub fn cdf(&self, d: f64) -> f64 {
        if !(d > 0.0) {
            return 0.0;
        }
        if d >= self.support_upper() {
            return 1.0;
        }
        let v = self.map.v(d);
        let k = self.panel_of(v);
        (self.cum[k] + self.partial(k, v)).clamp(0.0, 1.0)
    }

    /// Survival function `1 - F(d)`, accurate in the upper tail.
    pub fn sf(&self, d: f64) -> f64 {
        if !(d > 0.0) {
            return 1.0;
        }
        if d >= self.support_upper() {
            return 0.0;
        }
        let v = self.map.v(d);
        let k = self.panel_of(v);
        let rest = integrate_pieces(&|x| self.mapped(x), &[v, self.breaks[k + 1]], self.tol)
            .map(|r| r.value)
            .unwrap_or(0.0)
            / self.total;
        ((1.0 - self.cum[k + 1]) + rest).clamp(0.0, 1.0)
    }

    /// Quantile `F^{-1}(u)` for `u` in `(0, 1)`.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::Domain(format!("quantile level {u} outside (0, 1)")));
        }
        // last panel whose left cumulative mass does not exceed u
        let k = match self.cum.partition_point(|&c| c <= u) {
            0 => 0,
            i => (i - 1).min(PANELS - 1),
        };
        let (a, b) = (self.breaks[k], self.breaks[k + 1]);
        let (ca, cb) = (self.cum[k], self.cum[k + 1]);
        let start = if cb > ca {
            a + (b - a) * (u - ca) / (cb - ca)
        } else {
            0.5 * (a + b)
        };
        let target = u - ca;
        let v = newton_bisect(
            |v| (self.partial(k, v) - target, self.mapped(v) / self.total),
            a,
            b,
            start,
            1e-15 * self.map.v_max(),
        )?;
        Ok(self.map.d(v))
    }

    /// `E[g(d)]` restricted to `lo <= d <= hi`, split at the given interior
    /// breakpoints (in `d` units) and at the cached panels.
    pub fn expect_between<G: Fn(f64) -> f64>(
        &self,
        g: G,
        lo: f64,
        hi: f64,
        interior: &[f64],
    ) -> Result<f64> {
        let hi = hi.min(self.support_upper());
        if !(hi > lo) {
            return Ok(0.0);
        }
        let (vlo, vhi) = (
            self.map.v(lo.max(0.0)),
            if hi.is_finite() {
                self.map.v(hi)
            } else {
                self.map.v_max()
            },
        );
        let mut pts: Vec<f64> = vec![vlo, vhi];
        pts.extend(self.breaks.iter().copied().filter(|&v| v > vlo && v < vhi));
        pts.extend(
            interior
                .iter()
                .filter(|&&d| d > lo && d < hi)
                .map(|&d| self.map.v(d)),
        );
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let f = |v: f64| {
            let m = self.mapped(v);
            if m == 0.0 {
                0.0
            } else {
                g(self.map.d(v)) * m
            }
        };
        let tol = Tolerance {
            abs: 1e-12 * self.total,
            rel: 1e-11,
            max_segments: 8000,
        };
        let r = integrate_pieces(&f, &pts, tol)?;
        Ok(r.value / self.total)
    }

    /// `E[g(d)]` over the whole support.
    pub fn expect<G: Fn(f64) -> f64>(&self, g: G) -> Result<f64> {
        self.expect_between(g, 0.0, f64::INFINITY, &[])
    }

    /// Integral of the density over the support (1 up to quadrature error).
    pub fn total_mass(&self) -> Result<f64> {
        self.expect(|_| 1.0)
    }
}
