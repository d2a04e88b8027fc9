//! Generating functions of the common elliptical families.

use crate::error::{invalid, Result};
use crate::special::{bessel_k_ratios, ln_bessel_k};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

/// Elliptical family with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// `d^N exp(-r d^s)`.
    Kotz {
        n: f64,
        r: f64,
        s: f64,
    },
    Gaussian,
    /// `(1-d)^m` on `[0, 1]`.
    PearsonII {
        m: f64,
    },
    /// `(1 + d/s)^{-N}`.
    PearsonVII {
        n: f64,
        s: f64,
    },
    T {
        nu: f64,
    },
    Cauchy,
    /// `x^{lambda-p/2} K_{lambda-p/2}(x)` with `x = sqrt(psi (chi + d))`.
    GeneralizedHyperbolic {
        lambda: f64,
        chi: f64,
        psi: f64,
    },
    VarianceGamma {
        lambda: f64,
        psi: f64,
    },
    Laplace,
    MultivariateHyperbolic {
        chi: f64,
        psi: f64,
    },
    HyperbolicUnivariateMarginals {
        chi: f64,
        psi: f64,
    },
    NormalInverseGaussian {
        chi: f64,
        psi: f64,
    },
}

/// The four parametric forms every family reduces to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Canonical {
    Kotz { n: f64, r: f64, s: f64 },
    PearsonII { m: f64 },
    PearsonVII { n: f64, s: f64 },
    GenHyperbolic { lambda: f64, chi: f64, psi: f64 },
}

/// `ln phi`, `phi'/phi` and `phi''/phi` at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogDerivs {
    pub ln_phi: f64,
    pub d1: f64,
    pub d2: f64,
}

/// Generating function `phi(d)` of a `p`-variate elliptical family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratingFunction {
    family: Family,
    p: usize,
    canon: Canonical,
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, v, "must be positive and finite"))
    }
}

impl Family {
    /// Reduce to the canonical parametrization for dimension `p`.
    fn canonical(self, p: usize) -> Result<Canonical> {
        let pf = p as f64;
        let c = match self {
            Family::Kotz { n, r, s } => {
                positive("r", r)?;
                positive("s", s)?;
                if !(n > -pf / 2.0) || !n.is_finite() {
                    return Err(invalid("N", n, format!("must exceed -p/2 = {}", -pf / 2.0)));
                }
                Canonical::Kotz { n, r, s }
            }
            Family::Gaussian => Canonical::Kotz {
                n: 0.0,
                r: 0.5,
                s: 1.0,
            },
            Family::PearsonII { m } => {
                positive("m", m)?;
                Canonical::PearsonII { m }
            }
            Family::PearsonVII { n, s } => {
                positive("s", s)?;
                if !(n > pf / 2.0) || !n.is_finite() {
                    return Err(invalid("N", n, format!("must exceed p/2 = {}", pf / 2.0)));
                }
                Canonical::PearsonVII { n, s }
            }
            Family::T { nu } => {
                positive("nu", nu)?;
                Canonical::PearsonVII {
                    n: (nu + pf) / 2.0,
                    s: nu,
                }
            }
            Family::Cauchy => Canonical::PearsonVII {
                n: (1.0 + pf) / 2.0,
                s: 1.0,
            },
            Family::GeneralizedHyperbolic { lambda, chi, psi } => {
                positive("psi", psi)?;
                if !lambda.is_finite() {
                    return Err(invalid("lambda", lambda, "must be finite"));
                }
                if chi > 0.0 && chi.is_finite() {
                } else if chi == 0.0 {
                    if !(lambda > 0.0) {
                        return Err(invalid("lambda", lambda, "must be positive when chi = 0"));
                    }
                } else {
                    return Err(invalid("chi", chi, "must be non-negative"));
                }
                Canonical::GenHyperbolic { lambda, chi, psi }
            }
            Family::VarianceGamma { lambda, psi } => {
                return Family::GeneralizedHyperbolic {
                    lambda,
                    chi: 0.0,
                    psi,
                }
                .canonical(p)
            }
            Family::Laplace => Canonical::GenHyperbolic {
                lambda: 1.0,
                chi: 0.0,
                psi: 2.0,
            },
            Family::MultivariateHyperbolic { chi, psi } => {
                if !(chi >= 0.0) {
                    return Err(invalid("chi", chi, "must be non-negative"));
                }
                return Family::GeneralizedHyperbolic {
                    lambda: (pf + 1.0) / 2.0,
                    chi,
                    psi,
                }
                .canonical(p);
            }
            Family::HyperbolicUnivariateMarginals { chi, psi } => {
                if !(chi >= 0.0) {
                    return Err(invalid("chi", chi, "must be non-negative"));
                }
                return Family::GeneralizedHyperbolic {
                    lambda: 1.0,
                    chi,
                    psi,
                }
                .canonical(p);
            }
            Family::NormalInverseGaussian { chi, psi } => {
                positive("chi", chi)?;
                return Family::GeneralizedHyperbolic {
                    lambda: -0.5,
                    chi,
                    psi,
                }
                .canonical(p);
            }
        };
        Ok(c)
    }
}

impl Canonical {
    fn as_family(self) -> Family {
        match self {
            Canonical::Kotz { n, r, s } => Family::Kotz { n, r, s },
            Canonical::PearsonII { m } => Family::PearsonII { m },
            Canonical::PearsonVII { n, s } => Family::PearsonVII { n, s },
            Canonical::GenHyperbolic { lambda, chi, psi } => {
                Family::GeneralizedHyperbolic { lambda, chi, psi }
            }
        }
    }
}

/// `c * d^e`, treating a zero coefficient as an exact zero.
#[inline]
fn term(c: f64, d: f64, e: f64) -> f64 {
    if c == 0.0 {
        0.0
    } else {
        c * d.powf(e)
    }
}

impl GeneratingFunction {
    /// Validates the family parameters for dimension `p`.
    pub fn new(family: Family, p: usize) -> Result<Self> {
        if p == 0 {
            return Err(invalid("p", 0.0, "dimension must be at least 1"));
        }
        let canon = family.canonical(p)?;
        Ok(Self { family, p, canon })
    }

    pub fn gaussian(p: usize) -> Self {
        Self::new(Family::Gaussian, p).expect("gaussian is always valid")
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn canonical(&self) -> Canonical {
        self.canon
    }

    /// The same function expressed in its canonical parametrization.
    pub fn reduced(&self) -> Self {
        Self {
            family: self.canon.as_family(),
            p: self.p,
            canon: self.canon,
        }
    }

    /// Same family in another dimension (parameters tied to `p` follow it).
    pub fn with_dimension(&self, p: usize) -> Result<Self> {
        Self::new(self.family, p)
    }

    /// Upper end of the support of `phi`, when bounded.
    pub fn support_upper(&self) -> Option<f64> {
        match self.canon {
            Canonical::PearsonII { .. } => Some(1.0),
            _ => None,
        }
    }

    /// Whether this is the Gaussian generating function (up to reparametrization).
    pub fn is_gaussian(&self) -> bool {
        matches!(self.canon, Canonical::Kotz { n, r, s } if n == 0.0 && r == 0.5 && s == 1.0)
    }

    /// `ln phi(d)`; `-inf` outside the support.
    pub fn ln_phi(&self, d: f64) -> f64 {
        match self.canon {
            Canonical::Kotz { n, r, s } => {
                let lead = if n == 0.0 { 0.0 } else { n * d.ln() };
                lead - r * d.powf(s)
            }
            Canonical::PearsonII { m } => {
                if d >= 1.0 {
                    f64::NEG_INFINITY
                } else {
                    m * (1.0 - d).ln()
                }
            }
            Canonical::PearsonVII { n, s } => -n * (d / s).ln_1p(),
            Canonical::GenHyperbolic { lambda, chi, psi } => {
                let nu = lambda - self.p as f64 / 2.0;
                let x = (psi * (chi + d)).sqrt();
                if x == 0.0 {
                    if nu > 0.0 {
                        ln_gamma(nu) + (nu - 1.0) * std::f64::consts::LN_2
                    } else {
                        f64::INFINITY
                    }
                } else {
                    nu * x.ln() + ln_bessel_k(nu, x)
                }
            }
        }
    }

    /// `ln phi`, `phi'/phi`, `phi''/phi` at `d > 0` inside the support.
    pub fn log_derivs(&self, d: f64) -> LogDerivs {
        let ln_phi = self.ln_phi(d);
        let (d1, d2) = match self.canon {
            Canonical::Kotz { n, r, s } => {
                let d1 = term(n, d, -1.0) - term(r * s, d, s - 1.0);
                let d2 = d1 * d1 - term(n, d, -2.0) - term(r * s * (s - 1.0), d, s - 2.0);
                (d1, d2)
            }
            Canonical::PearsonII { m } => {
                if d >= 1.0 {
                    (0.0, 0.0)
                } else {
                    let u = 1.0 - d;
                    (-m / u, m * (m - 1.0) / (u * u))
                }
            }
            Canonical::PearsonVII { n, s } => {
                let u = s + d;
                (-n / u, n * (n + 1.0) / (u * u))
            }
            Canonical::GenHyperbolic { lambda, chi, psi } => {
                let nu = lambda - self.p as f64 / 2.0;
                let x = (psi * (chi + d)).sqrt();
                // d/dx [x^nu K_nu(x)] = -x^nu K_{nu-1}(x) and dx/dd = psi/(2x)
                let (r1, r2) = bessel_k_ratios(nu, x);
                let g = psi / (2.0 * x);
                (-g * r1, g * g * r2)
            }
        };
        LogDerivs { ln_phi, d1, d2 }
    }

    /// `(phi, phi', phi'')` at `d >= 0`; zeros outside the support.
    pub fn eval(&self, d: f64) -> (f64, f64, f64) {
        if let Some(u) = self.support_upper() {
            if d >= u {
                return (0.0, 0.0, 0.0);
            }
        }
        let ld = self.log_derivs(d);
        let phi = ld.ln_phi.exp();
        (phi, ld.d1 * phi, ld.d2 * phi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn all_families(p: usize) -> Vec<Family> {
        let pf = p as f64;
        vec![
            Family::Kotz {
                n: 0.5,
                r: 0.7,
                s: 1.3,
            },
            Family::Kotz {
                n: 0.0,
                r: 0.5,
                s: 0.6,
            },
            Family::Gaussian,
            Family::PearsonII { m: 3.0 },
            Family::PearsonVII {
                n: pf / 2.0 + 1.5,
                s: 2.0,
            },
            Family::T { nu: 3.0 },
            Family::Cauchy,
            Family::GeneralizedHyperbolic {
                lambda: 0.3,
                chi: 1.0,
                psi: 2.0,
            },
            Family::VarianceGamma {
                lambda: 2.0,
                psi: 1.5,
            },
            Family::Laplace,
            Family::MultivariateHyperbolic { chi: 1.0, psi: 2.0 },
            Family::HyperbolicUnivariateMarginals { chi: 0.5, psi: 1.0 },
            Family::NormalInverseGaussian { chi: 1.0, psi: 2.0 },
        ]
    }

    #[test]
    fn gaussian_values_by_hand() {
        let g = GeneratingFunction::gaussian(5);
        let (phi, d1, d2) = g.eval(2.0);
        let e = (-1.0f64).exp();
        assert_relative_eq!(phi, e, max_relative = 1e-15);
        assert_relative_eq!(d1, -e / 2.0, max_relative = 1e-15);
        assert_relative_eq!(d2, e / 4.0, max_relative = 1e-15);
    }

    #[test]
    fn cauchy_at_zero_is_one() {
        let g = GeneratingFunction::new(Family::Cauchy, 3).unwrap();
        assert_eq!(g.eval(0.0).0, 1.0);
    }

    #[test]
    fn aliases_match_their_formulas() {
        let p = 5usize;
        let pf = p as f64;
        for &d in &[0.01, 0.5, 1.0, 3.0, 17.0, 120.0] {
            let g = GeneratingFunction::gaussian(p);
            assert_relative_eq!(g.eval(d).0, (-d / 2.0).exp(), max_relative = 1e-12);
            let nu = 3.0;
            let t = GeneratingFunction::new(Family::T { nu }, p).unwrap();
            let pearson = GeneratingFunction::new(
                Family::PearsonVII {
                    n: (nu + pf) / 2.0,
                    s: nu,
                },
                p,
            )
            .unwrap();
            assert_relative_eq!(
                t.eval(d).0,
                (1.0 + d / nu).powf(-(nu + pf) / 2.0),
                max_relative = 1e-12
            );
            assert_relative_eq!(t.eval(d).0, pearson.eval(d).0, max_relative = 1e-12);
            let c = GeneratingFunction::new(Family::Cauchy, p).unwrap();
            assert_relative_eq!(
                c.eval(d).0,
                (1.0 + d).powf(-(1.0 + pf) / 2.0),
                max_relative = 1e-12
            );
            let lap = GeneratingFunction::new(Family::Laplace, p).unwrap();
            let vg = GeneratingFunction::new(
                Family::VarianceGamma {
                    lambda: 1.0,
                    psi: 2.0,
                },
                p,
            )
            .unwrap();
            assert_relative_eq!(lap.eval(d).0, vg.eval(d).0, max_relative = 1e-12);
            // Laplace at p = 5 has K_{3/2} in closed form.
            let x = (2.0 * d).sqrt();
            let k32 = (std::f64::consts::PI / (2.0 * x)).sqrt() * (-x).exp() * (1.0 + 1.0 / x);
            assert_relative_eq!(lap.eval(d).0, x.powf(-1.5) * k32, max_relative = 1e-12);
        }
    }

    #[test]
    fn reduced_form_evaluates_identically() {
        for fam in all_families(5) {
            let g = GeneratingFunction::new(fam, 5).unwrap();
            let r = g.reduced();
            for &d in &[0.05, 0.4, 0.9, 2.5, 30.0] {
                assert_eq!(g.eval(d), r.eval(d));
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for p in [3usize, 5, 20] {
            for fam in all_families(p) {
                let g = GeneratingFunction::new(fam, p).unwrap();
                let upper = g.support_upper().unwrap_or(f64::INFINITY);
                for i in 0..20 {
                    let d = (0.05 + 0.3 * i as f64).min(0.95 * upper);
                    let d = if upper.is_finite() {
                        0.02 + 0.9 * (i as f64 / 20.0)
                    } else {
                        d
                    };
                    let h = 1e-4 * d.max(1e-2);
                    let (f0, d1, d2) = g.eval(d);
                    let (fp, dp, _) = g.eval(d + h);
                    let (fm, dm, _) = g.eval(d - h);
                    let fd1 = (fp - fm) / (2.0 * h);
                    let fd2 = (dp - dm) / (2.0 * h);
                    let scale1 = d1.abs().max(1e-300);
                    let scale2 = d2.abs().max(1e-3 * f0.abs() / d.max(1e-2).powi(2));
                    assert!(
                        ((fd1 - d1) / scale1).abs() < 1e-6,
                        "{fam:?} p={p} d={d}: dphi {d1} vs {fd1}"
                    );
                    assert!(
                        ((fd2 - d2) / scale2).abs() < 1e-6,
                        "{fam:?} p={p} d={d}: ddphi {d2} vs {fd2}"
                    );
                }
            }
        }
    }

    #[test]
    fn out_of_range_parameters_rejected() {
        assert!(GeneratingFunction::new(
            Family::Kotz {
                n: -3.0,
                r: 1.0,
                s: 1.0
            },
            5
        )
        .is_err());
        assert!(GeneratingFunction::new(
            Family::Kotz {
                n: 0.0,
                r: -1.0,
                s: 1.0
            },
            5
        )
        .is_err());
        assert!(GeneratingFunction::new(Family::PearsonVII { n: 2.0, s: 1.0 }, 5).is_err());
        assert!(GeneratingFunction::new(Family::T { nu: 0.0 }, 5).is_err());
        assert!(GeneratingFunction::new(Family::PearsonII { m: 0.0 }, 5).is_err());
        assert!(GeneratingFunction::new(
            Family::GeneralizedHyperbolic {
                lambda: -1.0,
                chi: 0.0,
                psi: 1.0
            },
            5
        )
        .is_err());
        assert!(GeneratingFunction::new(
            Family::VarianceGamma {
                lambda: 1.0,
                psi: 0.0
            },
            5
        )
        .is_err());
        assert!(
            GeneratingFunction::new(Family::NormalInverseGaussian { chi: 0.0, psi: 1.0 }, 5)
                .is_err()
        );
    }

    #[test]
    fn pearson_ii_zero_outside_support() {
        let g = GeneratingFunction::new(Family::PearsonII { m: 2.0 }, 4).unwrap();
        assert_eq!(g.eval(1.0), (0.0, 0.0, 0.0));
        assert_eq!(g.eval(7.0), (0.0, 0.0, 0.0));
    }
}
