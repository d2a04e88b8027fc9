//! Asymptotic variances, efficiencies, influence functions and tuning by
//! target efficiency.

use crate::elliptical::{DistanceLaw, GeneratingFunction};
use crate::error::{Error, Result};
use crate::kernels::{valid_q_range, EstimatorKernel, KernelKind};
use crate::linalg::{cholesky, mahalanobis_with, Matrix, Vector};
use crate::roots::{bisect, newton_bisect};
use serde::{Deserialize, Serialize};

/// Scalars governing the asymptotic covariance of location, scatter and
/// shape estimates at an elliptical model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticConstants {
    pub omega1: f64,
    pub omega2: f64,
    pub zeta1: f64,
    pub zeta2: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Scale of `d` at which the kernel is evaluated.
    pub sigma: f64,
    /// Constraint value `E[rho(d/sigma)]`.
    pub b: f64,
}

impl AsymptoticConstants {
    /// Location variance factor `omega1 / omega2^2`.
    pub fn location_factor(&self) -> f64 {
        self.omega1 / (self.omega2 * self.omega2)
    }
}

/// How the scale of `d` is pinned down.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScaleChoice {
    /// Solve `E[rho(d/sigma)] = b`.
    Constraint(f64),
    /// Use this scale; `b` becomes `E[rho(d/sigma)]`.
    Fixed(f64),
}

fn kernel_center(kernel: &EstimatorKernel) -> f64 {
    match kernel.kind() {
        KernelKind::Sq if kernel.c().is_finite() => 0.5 * (kernel.a() + kernel.c()),
        KernelKind::Bisquare => 0.5,
        KernelKind::Shr => 0.5 * (1.0 + kernel.c()),
        _ => 1.0,
    }
}

fn breaks(kernel: &EstimatorKernel, sigma: f64) -> Vec<f64> {
    kernel.breakpoints().iter().map(|b| b * sigma).collect()
}

/// Scale solving `E[rho(d/sigma)] = b` under the model.
pub fn model_scale(kernel: &EstimatorKernel, law: &DistanceLaw, b: f64) -> Result<f64> {
    if kernel.is_proper() && !(b > 0.0 && b < 1.0) {
        return Err(Error::Domain(format!("b = {b} must lie in (0, 1)")));
    }
    let mean_rho = |u: f64| -> Result<f64> {
        let s = u.exp();
        law.expect_between(
            |d| kernel.rho(d / s),
            0.0,
            f64::INFINITY,
            &breaks(kernel, s),
        )
    };
    let slope = |u: f64| -> Result<f64> {
        let s = u.exp();
        let (lo, hi) = (kernel.a() * s, kernel.c() * s);
        let hi = if kernel.kind() == KernelKind::Shr {
            hi
        } else {
            hi.max(lo)
        };
        let lo = if kernel.kind() == KernelKind::Shr || kernel.kind() == KernelKind::Bisquare {
            0.0
        } else {
            lo
        };
        Ok(-law.expect_between(|d| kernel.weight(d / s) * d / s, lo, hi, &breaks(kernel, s))?)
    };
    let median = law.quantile(0.5)?;
    let u0 = (median / kernel_center(kernel)).ln();
    let g0 = mean_rho(u0)? - b;
    if g0 == 0.0 {
        return Ok(u0.exp());
    }
    let dir = if g0 > 0.0 { 1.0 } else { -1.0 };
    let (mut lo, mut hi) = (u0, u0);
    let mut step = 0.5;
    loop {
        let u = u0 + dir * step;
        let gu = mean_rho(u)? - b;
        if gu.signum() != g0.signum() || gu == 0.0 {
            if dir > 0.0 {
                hi = u;
            } else {
                lo = u;
            }
            break;
        }
        if dir > 0.0 {
            lo = u;
        } else {
            hi = u;
        }
        step *= 2.0;
        if step > 1024.0 {
            return Err(Error::RootFinding {
                lo: (u0 - 1024.0).exp(),
                hi: (u0 + 1024.0).exp(),
                reason: format!("no scale gives E[rho] = {b}"),
            });
        }
    }
    // `expect_between` errors are rare; treat them as NaN so bisection stops.
    let fdf = |u: f64| {
        (
            mean_rho(u).map(|v| v - b).unwrap_or(f64::NAN),
            slope(u).unwrap_or(f64::NAN),
        )
    };
    let u = newton_bisect(fdf, lo, hi, 0.5 * (lo + hi), 1e-13)?;
    Ok(u.exp())
}

/// The six asymptotic constants for `kernel` at the model `law`.
pub fn constants_with(
    kernel: &EstimatorKernel,
    law: &DistanceLaw,
    choice: ScaleChoice,
) -> Result<AsymptoticConstants> {
    let gen = *law.generating_function();
    let pf = gen.p() as f64;
    let sigma = match choice {
        ScaleChoice::Constraint(b) => model_scale(kernel, law, b)?,
        ScaleChoice::Fixed(s) => s,
    };
    let br = breaks(kernel, sigma);
    let (wlo, whi) = match kernel.kind() {
        KernelKind::Sq | KernelKind::Rocke => (kernel.a() * sigma, kernel.c() * sigma),
        KernelKind::Bisquare | KernelKind::Shr => (0.0, kernel.c() * sigma),
        KernelKind::Mle => (0.0, f64::INFINITY),
    };
    let w = |d: f64| kernel.weight(d / sigma);
    let r1 = |d: f64| gen.log_derivs(d).d1;
    let on_support = |g: &dyn Fn(f64) -> f64| law.expect_between(g, wlo, whi, &br);

    let b = match choice {
        ScaleChoice::Constraint(b) => b,
        ScaleChoice::Fixed(_) => {
            law.expect_between(|d| kernel.rho(d / sigma), 0.0, f64::INFINITY, &br)?
        }
    };
    let omega1 = on_support(&|d| d * w(d).powi(2))? / pf;
    let omega2 = -2.0 / pf * on_support(&|d| d * w(d) * r1(d))?;
    let lambda1 = -2.0 / sigma * on_support(&|d| d * d * w(d) * r1(d))?;
    let lambda2 = -law.expect_between(
        |d| d * (kernel.rho(d / sigma) - b) * r1(d),
        0.0,
        f64::INFINITY,
        &br,
    )?;
    let zeta1 = pf * (pf + 2.0) * on_support(&|d| (d / sigma).powi(2) * w(d).powi(2))?
        / (lambda1 * lambda1);
    let var_rho = law.expect_between(
        |d| (kernel.rho(d / sigma) - b).powi(2),
        0.0,
        f64::INFINITY,
        &br,
    )?;
    let zeta2 = var_rho / (lambda2 * lambda2) - 2.0 * zeta1 / pf;
    Ok(AsymptoticConstants {
        omega1,
        omega2,
        zeta1,
        zeta2,
        lambda1,
        lambda2,
        sigma,
        b,
    })
}

/// Scale of the MM step: the median of `d` under the model.
pub fn mm_scale(law: &DistanceLaw) -> Result<f64> {
    law.quantile(0.5)
}

/// Constants with the scale convention of each estimator: the constraint
/// for S-estimators, the median of `d` for MM-SHR, and unit scale for
/// unbounded rho functions.
pub fn constants(
    kernel: &EstimatorKernel,
    law: &DistanceLaw,
    b: f64,
) -> Result<AsymptoticConstants> {
    let choice = match kernel.kind() {
        KernelKind::Shr => ScaleChoice::Fixed(mm_scale(law)?),
        _ if !kernel.is_proper() => ScaleChoice::Fixed(1.0),
        _ => ScaleChoice::Constraint(b),
    };
    constants_with(kernel, law, choice)
}

/// Constants of the maximum likelihood estimator.
pub fn mle_constants(law: &DistanceLaw) -> Result<AsymptoticConstants> {
    constants_with(
        &EstimatorKernel::mle(*law.generating_function()),
        law,
        ScaleChoice::Fixed(1.0),
    )
}

/// Shape efficiency relative to the likelihood estimate, `zeta1_mle / zeta1`.
pub fn efficiency_shape(kernel: &EstimatorKernel, law: &DistanceLaw, b: f64) -> Result<f64> {
    Ok(mle_constants(law)?.zeta1 / constants(kernel, law, b)?.zeta1)
}

/// Location efficiency relative to the likelihood estimate.
pub fn efficiency_location(kernel: &EstimatorKernel, law: &DistanceLaw, b: f64) -> Result<f64> {
    Ok(mle_constants(law)?.location_factor() / constants(kernel, law, b)?.location_factor())
}

/// Kernel family whose tuning constant is searched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TunableKind {
    Sq,
    Rocke,
    Shr,
}

impl TunableKind {
    pub fn kernel(self, gen: &GeneratingFunction, param: f64) -> Result<EstimatorKernel> {
        match self {
            TunableKind::Sq => EstimatorKernel::sq(*gen, param),
            TunableKind::Rocke => EstimatorKernel::rocke(gen.p(), param),
            TunableKind::Shr => EstimatorKernel::shr(gen.p(), param),
        }
    }

    /// Map an unbounded search coordinate to the tuning parameter.
    fn param(self, u: f64) -> f64 {
        match self {
            TunableKind::Sq => 1.0 - u.exp(),
            TunableKind::Rocke => u,
            TunableKind::Shr => 1.0 + u.exp(),
        }
    }

    /// Search interval in the coordinate of [`Self::param`], ordered so the
    /// parameter increases with the coordinate index of the scan.
    fn search_range(self, gen: &GeneratingFunction) -> (f64, f64) {
        match self {
            TunableKind::Sq => {
                let range = valid_q_range(gen);
                let mut q_hi: f64 = if range.excluded.is_some() {
                    0.998
                } else {
                    0.999
                };
                if let Some(h) = range.upper_below_one {
                    q_hi = q_hi.min(h - 1e-6);
                }
                let mut q_lo: f64 = -10.0;
                if let Some(l) = range.lower {
                    q_lo = q_lo.max(l + 1e-3 * (1.0 - l).abs().max(1e-3));
                }
                ((1.0 - q_lo).ln(), (1.0 - q_hi).ln())
            }
            TunableKind::Rocke => (0.02, 1.0),
            TunableKind::Shr => ((0.01f64).ln(), (1000.0f64).ln()),
        }
    }
}

/// Result of a tuning search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tuned {
    pub param: f64,
    pub efficiency: f64,
}

/// Efficiency of `kind` with parameter `param`, or `None` when the kernel
/// cannot be built or integrated there.
pub fn efficiency_at(
    kind: TunableKind,
    law: &DistanceLaw,
    b: f64,
    param: f64,
    mle_zeta1: f64,
) -> Option<f64> {
    let k = kind.kernel(law.generating_function(), param).ok()?;
    let c = constants(&k, law, b).ok()?;
    let e = mle_zeta1 / c.zeta1;
    e.is_finite().then_some(e)
}

/// Largest achievable shape efficiency and its parameter.
pub fn max_efficiency(kind: TunableKind, law: &DistanceLaw, b: f64) -> Result<Tuned> {
    let mle = mle_constants(law)?.zeta1;
    let (scan, best) = coarse_scan(kind, law, b, mle)?;
    refine_max(kind, law, b, mle, &scan, best)
}

type Scan = Vec<(f64, Option<f64>)>;

const SCAN_POINTS: usize = 24;

fn coarse_scan(kind: TunableKind, law: &DistanceLaw, b: f64, mle: f64) -> Result<(Scan, usize)> {
    let (u0, u1) = kind.search_range(law.generating_function());
    let scan: Scan = (0..SCAN_POINTS)
        .map(|i| {
            let u = u0 + (u1 - u0) * i as f64 / (SCAN_POINTS - 1) as f64;
            (u, efficiency_at(kind, law, b, kind.param(u), mle))
        })
        .collect();
    let best = scan
        .iter()
        .enumerate()
        .filter_map(|(i, (_, e))| e.map(|e| (i, e)))
        .max_by(|x, y| x.1.total_cmp(&y.1))
        .map(|(i, _)| i)
        .ok_or_else(|| Error::Tuning(format!("no admissible {kind:?} parameter for this model")))?;
    Ok((scan, best))
}

fn refine_max(
    kind: TunableKind,
    law: &DistanceLaw,
    b: f64,
    mle: f64,
    scan: &Scan,
    best: usize,
) -> Result<Tuned> {
    let eff = |u: f64| efficiency_at(kind, law, b, kind.param(u), mle).unwrap_or(f64::NEG_INFINITY);
    let (mut lo, mut hi) = (
        scan[best.saturating_sub(1)].0,
        scan[(best + 1).min(scan.len() - 1)].0,
    );
    let (mut best_u, mut best_e) = (scan[best].0, scan[best].1.unwrap_or(f64::NEG_INFINITY));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (eff(x1), eff(x2));
    for _ in 0..40 {
        if (hi - lo).abs() < 1e-6 {
            break;
        }
        if f1 > f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = eff(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = eff(x2);
        }
    }
    for (u, e) in [(x1, f1), (x2, f2)] {
        if e > best_e {
            best_e = e;
            best_u = u;
        }
    }
    Ok(Tuned {
        param: kind.param(best_u),
        efficiency: best_e,
    })
}

/// Parameter giving shape efficiency `target`, searched on the branch where
/// efficiency rises toward its maximum.
pub fn tune_to_efficiency(
    kind: TunableKind,
    law: &DistanceLaw,
    b: f64,
    target: f64,
) -> Result<Tuned> {
    if !(target > 0.0 && target < 1.0 + 1e-12) {
        return Err(Error::Domain(format!(
            "target efficiency {target} must lie in (0, 1]"
        )));
    }
    let mle = mle_constants(law)?.zeta1;
    let (scan, best) = coarse_scan(kind, law, b, mle)?;
    let top = refine_max(kind, law, b, mle, &scan, best)?;
    if target > top.efficiency + 1e-4 {
        return Err(Error::Tuning(format!(
            "target efficiency {target} exceeds the maximum {:.6} reached at parameter {:.6}",
            top.efficiency, top.param
        )));
    }
    if target >= top.efficiency - 1e-4 {
        return Ok(top);
    }
    // Walk down from the maximum to the first scanned point below target.
    let mut upper = best;
    let lower = loop {
        if upper == 0 {
            return Err(Error::Tuning(format!(
                "efficiency stays above {target} over the whole parameter range"
            )));
        }
        match scan[upper - 1].1 {
            Some(e) if e < target => break upper - 1,
            Some(_) => upper -= 1,
            None => {
                return Err(Error::Tuning(format!(
                    "efficiency undefined below parameter {}",
                    kind.param(scan[upper].0)
                )))
            }
        }
    };
    let f = |u: f64| efficiency_at(kind, law, b, kind.param(u), mle).unwrap_or(f64::NAN) - target;
    let (mut lo, mut hi) = (scan[lower].0, scan[upper].0);
    let mut u = 0.5 * (lo + hi);
    for _ in 0..100 {
        u = 0.5 * (lo + hi);
        let v = f(u);
        if v.abs() < 1e-4 * 0.1 || (hi - lo).abs() < 1e-12 {
            break;
        }
        if v < 0.0 {
            lo = u;
        } else {
            hi = u;
        }
    }
    let param = kind.param(u);
    Ok(Tuned {
        param,
        efficiency: f(u) + target,
    })
}

/// Influence function of the scatter estimate at `z`.
pub fn influence_scatter(
    kernel: &EstimatorKernel,
    c: &AsymptoticConstants,
    mu: &Vector,
    sigma: &Matrix,
    z: &Vector,
) -> Result<Matrix> {
    let p = mu.len() as f64;
    let ch = cholesky(sigma)?;
    let zc = z - mu;
    let dz = mahalanobis_with(&ch, &zc);
    let t = dz / c.sigma;
    let mut out = sigma * ((kernel.rho(t) - c.b) / c.lambda2);
    if dz > 0.0 {
        let alpha = p * (p + 2.0) * t * kernel.weight(t) / c.lambda1;
        out += (&zc * zc.transpose() / dz - sigma / p) * alpha;
    }
    Ok(out)
}

/// Influence function of the location estimate at `z`.
pub fn influence_location(
    kernel: &EstimatorKernel,
    c: &AsymptoticConstants,
    mu: &Vector,
    sigma: &Matrix,
    z: &Vector,
) -> Result<Vector> {
    let ch = cholesky(sigma)?;
    let zc = z - mu;
    let dz = mahalanobis_with(&ch, &zc);
    if dz == 0.0 {
        return Ok(Vector::zeros(mu.len()));
    }
    Ok(zc * (kernel.weight(dz / c.sigma) / c.omega2))
}

/// Radial factor `p(p+2) (d/sigma) w(d/sigma) / lambda1` of the scatter
/// influence function.
pub fn alpha_sigma(kernel: &EstimatorKernel, c: &AsymptoticConstants, d_z: f64) -> f64 {
    let p = kernel.p() as f64;
    let t = d_z / c.sigma;
    if t == 0.0 {
        return 0.0;
    }
    p * (p + 2.0) * t * kernel.weight(t) / c.lambda1
}

/// Outcome of testing `t phi''/phi - t (phi'/phi)^2 = y phi'/phi` for a
/// constant `y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MleEquivalence {
    pub satisfied: bool,
    pub y: f64,
    /// Largest residual relative to the largest left-hand side.
    pub residual: f64,
}

/// Whether the family admits a constant `y` making the unit-power S-q
/// estimator coincide with the likelihood estimator.
pub fn mle_equivalence_check(gen: &GeneratingFunction) -> MleEquivalence {
    let hi = gen.support_upper().map_or(100.0, |u| 0.95 * u);
    let lo = hi * 1e-4;
    let pts = crate::roots::geometric_grid(lo, hi, 50);
    let pairs: Vec<(f64, f64)> = pts
        .iter()
        .map(|&t| {
            let ld = gen.log_derivs(t);
            (t * (ld.d2 - ld.d1 * ld.d1), ld.d1)
        })
        .collect();
    let srr: f64 = pairs.iter().map(|(_, r)| r * r).sum();
    let slr: f64 = pairs.iter().map(|(l, r)| l * r).sum();
    let y = if srr > 0.0 { slr / srr } else { 0.0 };
    let scale = pairs.iter().map(|(l, _)| l.abs()).fold(0.0, f64::max);
    let worst = pairs
        .iter()
        .map(|(l, r)| (l - y * r).abs())
        .fold(0.0, f64::max);
    let residual = if scale > 0.0 { worst / scale } else { worst };
    MleEquivalence {
        satisfied: residual < 1e-8,
        y,
        residual,
    }
}

/// Shape efficiency over a parameter grid; `None` where undefined.
pub fn efficiency_curve(
    kind: TunableKind,
    law: &DistanceLaw,
    b: f64,
    params: &[f64],
    exec: crate::parallel::Execution,
) -> Result<Vec<(f64, Option<f64>)>> {
    let mle = mle_constants(law)?.zeta1;
    Ok(crate::parallel::map_slice(params, exec, |&q| {
        (q, efficiency_at(kind, law, b, q, mle))
    }))
}

/// Parameter where the efficiency curve first reaches `target`, by plain
/// bisection on `[lo, hi]` (used when the caller already knows a bracket).
pub fn solve_efficiency_between(
    kind: TunableKind,
    law: &DistanceLaw,
    b: f64,
    target: f64,
    lo: f64,
    hi: f64,
) -> Result<f64> {
    let mle = mle_constants(law)?.zeta1;
    bisect(
        |x| efficiency_at(kind, law, b, x, mle).unwrap_or(f64::NAN) - target,
        lo,
        hi,
        1e-10,
    )
}
