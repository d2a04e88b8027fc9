//! Density-power (S-q) rho construction.

use crate::elliptical::{Canonical, GeneratingFunction};
use crate::error::{Error, Result};
use crate::roots::{bisect, geometric_grid, scan_sign_changes};
use serde::{Deserialize, Serialize};

/// Whether the S-q rho has an inlier rejection point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SqType {
    /// Single zero of the weight: `a = 0`.
    TypeI,
    /// Two zeros: `0 < a < c`.
    TypeII,
    /// `q = 1`, unbounded rho.
    QEqualsOne,
}

const SCAN_LO: f64 = 1e-8;
const SCAN_HI: f64 = 1e8;
const SCAN_POINTS: usize = 512;
/// Stand-in for `t = 0` where the formulas need a positive argument.
pub(crate) const T_ZERO: f64 = 1e-200;

fn s_p(gen: &GeneratingFunction) -> f64 {
    gen.p() as f64 / 2.0 - 1.0
}

/// `ln` of the envelope `phi^{s_q} t^{s_p s_q}`; `-inf` outside the support.
fn ln_envelope(gen: &GeneratingFunction, q: f64, t: f64, ln_phi: f64) -> f64 {
    let sq = 1.0 - q;
    if sq == 0.0 {
        return 0.0;
    }
    let lead = if s_p(gen) == 0.0 {
        0.0
    } else {
        s_p(gen) * sq * t.ln()
    };
    sq * ln_phi + lead
}

/// Bracketed factor of the S-q weight; the weight vanishes exactly where
/// this does.
pub(crate) fn weight_bracket(gen: &GeneratingFunction, q: f64, t: f64) -> f64 {
    let sp = s_p(gen);
    let sq = 1.0 - q;
    let ld = gen.log_derivs(t);
    sq * sp * sp / t + (2.0 * sq * sp + 1.0) * ld.d1 - q * t * ld.d1 * ld.d1 + t * ld.d2
}

fn outside_support(gen: &GeneratingFunction, t: f64) -> bool {
    gen.support_upper().is_some_and(|u| t >= u)
}

/// `rho~_q(t) / exp(shift)`, the unnormalized S-q rho with the constant
/// density factor dropped.
pub(crate) fn rho_tilde_shifted(gen: &GeneratingFunction, q: f64, t: f64, shift: f64) -> f64 {
    if outside_support(gen, t) {
        return 0.0;
    }
    let t = t.max(T_ZERO);
    let ld = gen.log_derivs(t);
    let env = (ln_envelope(gen, q, t, ld.ln_phi) - shift).exp();
    -env * (t * ld.d1 + s_p(gen))
}

/// Derivative of [`rho_tilde_shifted`] in `t`.
pub(crate) fn weight_tilde_shifted(gen: &GeneratingFunction, q: f64, t: f64, shift: f64) -> f64 {
    if outside_support(gen, t) || t <= 0.0 {
        return 0.0;
    }
    let ld = gen.log_derivs(t);
    let env = (ln_envelope(gen, q, t, ld.ln_phi) - shift).exp();
    let sp = s_p(gen);
    let sq = 1.0 - q;
    let bracket =
        sq * sp * sp / t + (2.0 * sq * sp + 1.0) * ld.d1 - q * t * ld.d1 * ld.d1 + t * ld.d2;
    -env * bracket
}

/// Both [`rho_tilde_shifted`] and [`weight_tilde_shifted`] from one
/// evaluation of the generating function, for `t` inside the support.
pub(crate) fn rho_weight_tilde_shifted(
    gen: &GeneratingFunction,
    q: f64,
    t: f64,
    shift: f64,
) -> (f64, f64) {
    let t = t.max(T_ZERO);
    let ld = gen.log_derivs(t);
    let env = (ln_envelope(gen, q, t, ld.ln_phi) - shift).exp();
    let sp = s_p(gen);
    let sq = 1.0 - q;
    let bracket =
        sq * sp * sp / t + (2.0 * sq * sp + 1.0) * ld.d1 - q * t * ld.d1 * ld.d1 + t * ld.d2;
    (-env * (t * ld.d1 + sp), -env * bracket)
}

/// Unnormalized S-q rho `-(phi)^{s_q} t^{s_p s_q} (t phi'/phi + s_p)`.
pub fn sq_rho_tilde(gen: &GeneratingFunction, q: f64, t: f64) -> f64 {
    rho_tilde_shifted(gen, q, t, 0.0)
}

/// Derivative of [`sq_rho_tilde`].
pub fn sq_weight_tilde(gen: &GeneratingFunction, q: f64, t: f64) -> f64 {
    weight_tilde_shifted(gen, q, t, 0.0)
}

/// Admissible values of `q` for a family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QRange {
    /// `q` must exceed this when set.
    pub lower: Option<f64>,
    /// For `q < 1`, `q` must stay below this when set.
    pub upper_below_one: Option<f64>,
    /// Open interval of excluded values.
    pub excluded: Option<(f64, f64)>,
    /// The lower bound was found by probing rather than from a formula.
    pub heuristic: bool,
}

impl QRange {
    pub fn contains(&self, q: f64) -> bool {
        self.check(q).is_ok()
    }

    /// `Ok` when `q` is admissible, else a tuning error naming the bound.
    pub fn check(&self, q: f64) -> Result<()> {
        if !q.is_finite() || q > 1.0 {
            return Err(Error::Tuning(format!("q = {q} must satisfy q <= 1")));
        }
        if q == 1.0 {
            return Ok(());
        }
        if let Some(lo) = self.lower {
            if q <= lo {
                let kind = if self.heuristic { "empirical " } else { "" };
                return Err(Error::Tuning(format!(
                    "q = {q} is at or below the {kind}lower bound {lo}"
                )));
            }
        }
        if let Some(hi) = self.upper_below_one {
            if q >= hi {
                return Err(Error::Tuning(format!("q = {q} must be 1 or below {hi}")));
            }
        }
        if let Some((lo, hi)) = self.excluded {
            if q > lo && q < hi {
                return Err(Error::Tuning(format!(
                    "q = {q} lies in the numerically excluded interval ({lo}, {hi})"
                )));
            }
        }
        Ok(())
    }
}

/// Numerical precision excludes `q` just below 1 for the Bessel families.
const GH_EXCLUDED: (f64, f64) = (0.998, 1.0);

/// Range of `q` for which the S-q rho is well defined.
pub fn valid_q_range(gen: &GeneratingFunction) -> QRange {
    let sp = s_p(gen);
    let mut range = QRange {
        lower: None,
        upper_below_one: None,
        excluded: None,
        heuristic: false,
    };
    match gen.canonical() {
        Canonical::Kotz { n, s, .. } => {
            if -1.0 - sp < n && n < -sp {
                range.lower = Some(1.0 + s / (4.0 * (sp + n)));
            }
        }
        Canonical::PearsonII { m } => range.upper_below_one = Some(1.0 - 1.0 / m),
        Canonical::PearsonVII { .. } => {}
        Canonical::GenHyperbolic { lambda, chi, .. } => {
            range.excluded = Some(GH_EXCLUDED);
            if chi == 0.0 && lambda < 1.0 {
                range.lower = Some(probe_lower_q(gen));
                range.heuristic = true;
            }
        }
    }
    range
}

/// Walk `q` downward until the weight no longer has a clean one- or
/// two-zero pattern; returns the last failing value as an exclusive bound.
fn probe_lower_q(gen: &GeneratingFunction) -> f64 {
    let mut last_ok = None;
    let mut q = 0.99;
    while q > -20.0 {
        if scan_roots(gen, q).is_ok() {
            last_ok = Some(q);
        } else if last_ok.is_some() {
            return q;
        }
        q -= if q > 0.0 { 0.05 } else { 0.5 };
    }
    match last_ok {
        Some(_) => f64::NEG_INFINITY,
        None => 0.99,
    }
}

/// Rejection points and type of an S-q rho with `q < 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RejectionPoints {
    pub a: f64,
    pub c: f64,
    pub sq_type: SqType,
}

/// Inlier and outlier rejection points for `q < 1`. Closed forms for the
/// Kotz and Pearson families, bracketed roots for the Bessel family.
pub fn rejection_points(gen: &GeneratingFunction, q: f64) -> Result<RejectionPoints> {
    if q >= 1.0 {
        return Err(Error::Tuning(format!(
            "rejection points need q < 1 (got {q})"
        )));
    }
    valid_q_range(gen).check(q)?;
    let closed = closed_form(gen, q);
    match closed {
        Some((a, c)) if c.is_finite() && c > 0.0 && (a.is_nan() || a < c) => {
            let (a, sq_type) = if a.is_finite() && a > 0.0 {
                (a, SqType::TypeII)
            } else {
                (0.0, SqType::TypeI)
            };
            Ok(RejectionPoints { a, c, sq_type })
        }
        _ => scan_roots(gen, q),
    }
}

/// `(a, c)` from the quadratic in `t` (or `t^s`); `a` may come back
/// non-positive or NaN when there is no inlier zero.
fn closed_form(gen: &GeneratingFunction, q: f64) -> Option<(f64, f64)> {
    let sp = s_p(gen);
    let sq = 1.0 - q;
    match gen.canonical() {
        Canonical::Kotz { n, r, s } => {
            let disc = s * s + 4.0 * s * sq * n + 4.0 * s * sp * sq;
            if disc < 0.0 {
                return None;
            }
            let mid = s + 2.0 * sq * n + 2.0 * sp * sq;
            let den = 2.0 * sq * r * s;
            let lo = (mid - disc.sqrt()) / den;
            let hi = (mid + disc.sqrt()) / den;
            let a = if lo > 0.0 { lo.powf(1.0 / s) } else { f64::NAN };
            Some((a, hi.powf(1.0 / s)))
        }
        Canonical::PearsonII { m } => {
            let disc = m * m * (4.0 * sq * sp + 1.0) + 4.0 * m * sq * sp * sp;
            if disc < 0.0 {
                return None;
            }
            let mid = 2.0 * sq * sp * sp + m * (2.0 * sq * sp + 1.0);
            let den = 2.0 * (sq * sp * sp + m * (2.0 * sq * sp + m * sq));
            Some(((mid - disc.sqrt()) / den, (mid + disc.sqrt()) / den))
        }
        Canonical::PearsonVII { n, s } => {
            let den = 2.0 * sq * (sp - n) * (sp - n);
            if den == 0.0 {
                return None;
            }
            let disc = 4.0 * n * n * sq * sp - 4.0 * n * sq * sp * sp + n * n;
            if disc < 0.0 {
                return None;
            }
            let mid = 2.0 * n * sq * sp + n - 2.0 * sq * sp * sp;
            Some((s * (mid - disc.sqrt()) / den, s * (mid + disc.sqrt()) / den))
        }
        Canonical::GenHyperbolic { .. } => None,
    }
}

/// Scan the weight bracket for sign changes on a geometric grid and bisect
/// each bracket.
pub(crate) fn scan_roots(gen: &GeneratingFunction, q: f64) -> Result<RejectionPoints> {
    let hi = gen.support_upper().map_or(SCAN_HI, |u| u * (1.0 - 1e-12));
    let grid = geometric_grid(SCAN_LO, hi, SCAN_POINTS);
    let f = |t: f64| weight_bracket(gen, q, t);
    let changes = scan_sign_changes(f, &grid);
    let refine = |(lo, hi): (f64, f64)| bisect(f, lo, hi, 1e-12 * hi.max(1e-300));
    let start = f(grid[0]);
    match changes.as_slice() {
        [only] if start < 0.0 => Ok(RejectionPoints {
            a: 0.0,
            c: refine(*only)?,
            sq_type: SqType::TypeI,
        }),
        [first, second] if start > 0.0 => Ok(RejectionPoints {
            a: refine(*first)?,
            c: refine(*second)?,
            sq_type: SqType::TypeII,
        }),
        _ => Err(Error::Tuning(format!(
            "weight has {} sign changes on [{SCAN_LO:e}, {hi:e}] (starts {}) for q = {q}; \
             expected one falling from negative or two from positive",
            changes.len(),
            if start > 0.0 {
                "positive"
            } else {
                "non-positive"
            },
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elliptical::Family;
    use approx::assert_relative_eq;

    fn gen(f: Family, p: usize) -> GeneratingFunction {
        GeneratingFunction::new(f, p).unwrap()
    }

    #[test]
    fn gaussian_q_one_rho_is_linear() {
        let g = gen(Family::Gaussian, 2);
        assert_relative_eq!(sq_rho_tilde(&g, 1.0, 4.0), 2.0, epsilon = 1e-14);
        let g5 = gen(Family::Gaussian, 5);
        assert_relative_eq!(sq_rho_tilde(&g5, 1.0, 3.0), 1.5 - 1.5, epsilon = 1e-14);
        assert_relative_eq!(sq_weight_tilde(&g5, 1.0, 7.3), 0.5, epsilon = 1e-14);
    }

    #[test]
    fn q_one_rho_is_mle_rho_for_t() {
        let g = gen(Family::T { nu: 3.0 }, 4);
        let t = 2.5;
        let ld = g.log_derivs(t);
        assert_relative_eq!(
            sq_rho_tilde(&g, 1.0, t),
            -(t * ld.d1 + 1.0),
            epsilon = 1e-14
        );
    }

    #[test]
    fn rho_tilde_vanishes_at_zero_for_p_above_two() {
        let g = gen(Family::Gaussian, 5);
        assert!(sq_rho_tilde(&g, 0.5, 0.0).abs() < 1e-100);
    }

    #[test]
    fn weight_is_rho_derivative() {
        let g = gen(Family::Gaussian, 5);
        let h = 1e-5;
        let fd = (sq_rho_tilde(&g, 0.5, 3.0 + h) - sq_rho_tilde(&g, 0.5, 3.0 - h)) / (2.0 * h);
        assert_relative_eq!(sq_weight_tilde(&g, 0.5, 3.0), fd, max_relative = 1e-6);
        assert!(sq_weight_tilde(&g, 0.5, 1.0).abs() < 1e-14);
    }

    #[test]
    fn gaussian_rejection_points_closed_form() {
        let g = gen(Family::Gaussian, 5);
        let r = rejection_points(&g, 0.5).unwrap();
        assert_relative_eq!(r.a, 1.0, epsilon = 1e-12);
        assert_relative_eq!(r.c, 9.0, epsilon = 1e-12);
        assert_eq!(r.sq_type, SqType::TypeII);
    }

    #[test]
    fn closed_forms_match_scanned_roots() {
        let cases = [
            (Family::Gaussian, 5, 0.5),
            (Family::Gaussian, 20, 0.9),
            (
                Family::Kotz {
                    n: 0.7,
                    r: 0.4,
                    s: 1.6,
                },
                6,
                0.8,
            ),
            (
                Family::Kotz {
                    n: 0.0,
                    r: 1.0,
                    s: 0.5,
                },
                10,
                0.7,
            ),
            (Family::PearsonII { m: 4.0 }, 5, 0.5),
            (Family::PearsonVII { n: 5.0, s: 2.0 }, 3, 0.6),
            (Family::T { nu: 3.0 }, 20, 0.9),
            (Family::Cauchy, 20, 0.7),
        ];
        for (f, p, q) in cases {
            let g = gen(f, p);
            let closed = rejection_points(&g, q).unwrap();
            let scanned = scan_roots(&g, q).unwrap();
            assert_eq!(closed.sq_type, scanned.sq_type, "{f:?}");
            assert_relative_eq!(closed.a, scanned.a, max_relative = 1e-9, epsilon = 1e-12);
            assert_relative_eq!(closed.c, scanned.c, max_relative = 1e-9);
        }
    }

    #[test]
    fn laplace_is_type_one() {
        let g = gen(Family::Laplace, 5);
        for q in [-2.0, 0.5, 0.9] {
            let r = rejection_points(&g, q).unwrap();
            assert_eq!(r.sq_type, SqType::TypeI, "q = {q}");
            assert_eq!(r.a, 0.0);
        }
    }

    #[test]
    fn gaussian_outlier_point_grows_with_q() {
        let g = gen(Family::Gaussian, 5);
        let cs: Vec<f64> = [0.5, 0.9, 0.99]
            .iter()
            .map(|&q| rejection_points(&g, q).unwrap().c)
            .collect();
        assert!(cs[0] < cs[1] && cs[1] < cs[2]);
    }

    #[test]
    fn bessel_family_roots_are_weight_zeros() {
        for f in [
            Family::NormalInverseGaussian { chi: 1.0, psi: 1.0 },
            Family::MultivariateHyperbolic { chi: 1.0, psi: 1.0 },
            Family::HyperbolicUnivariateMarginals { chi: 0.5, psi: 2.0 },
        ] {
            let g = gen(f, 20);
            let r = rejection_points(&g, 0.9).unwrap();
            assert!(weight_bracket(&g, 0.9, r.c).abs() < 1e-6, "{f:?}");
            if r.a > 0.0 {
                assert!(weight_bracket(&g, 0.9, r.a).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn q_ranges() {
        let gauss = valid_q_range(&gen(Family::Gaussian, 5));
        assert!(gauss.contains(1.0) && gauss.contains(-5.0) && !gauss.contains(1.1));
        let p2 = valid_q_range(&gen(Family::PearsonII { m: 4.0 }, 5));
        assert!(p2.contains(1.0) && p2.contains(0.7) && !p2.contains(0.75) && !p2.contains(0.8));
        let kotz = valid_q_range(&gen(
            Family::Kotz {
                n: 0.0,
                r: 1.0,
                s: 2.0,
            },
            5,
        ));
        assert_eq!(kotz.lower, None);
        let gh = valid_q_range(&gen(
            Family::NormalInverseGaussian { chi: 1.0, psi: 1.0 },
            5,
        ));
        assert!(!gh.contains(0.999) && gh.contains(0.99) && gh.contains(1.0));
    }

    #[test]
    fn kotz_restricted_lower_bound() {
        // p = 1: s_p = -1/2, N in (-1/2, 1/2) triggers the bound.
        let g = gen(
            Family::Kotz {
                n: 0.2,
                r: 1.0,
                s: 1.0,
            },
            1,
        );
        let r = valid_q_range(&g);
        let lo = 1.0 + 1.0 / (4.0 * (-0.5 + 0.2));
        assert_relative_eq!(r.lower.unwrap(), lo, epsilon = 1e-15);
        assert!(r.check(lo - 0.01).is_err());
    }

    #[test]
    fn out_of_range_q_is_a_tuning_error() {
        let g = gen(Family::PearsonII { m: 4.0 }, 5);
        assert!(matches!(rejection_points(&g, 0.8), Err(Error::Tuning(_))));
    }
}
