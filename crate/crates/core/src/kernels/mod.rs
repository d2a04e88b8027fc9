//! Rho and weight functions of the S-, MM- and maximum likelihood estimators.

mod sq;

pub use sq::{
    rejection_points, sq_rho_tilde, sq_weight_tilde, valid_q_range, QRange, RejectionPoints, SqType,
};

use crate::elliptical::GeneratingFunction;
use crate::error::{invalid, Error, Result};
use serde::{Deserialize, Serialize};
use sq::{rho_tilde_shifted, rho_weight_tilde_shifted, weight_tilde_shifted, T_ZERO};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Sq,
    Rocke,
    Bisquare,
    Shr,
    Mle,
}

impl KernelKind {
    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Sq => "sq",
            KernelKind::Rocke => "rocke",
            KernelKind::Bisquare => "bisquare",
            KernelKind::Shr => "shr",
            KernelKind::Mle => "mle",
        }
    }
}

/// A rho function with its derivative, ready for evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorKernel {
    kind: KernelKind,
    tuning: Option<f64>,
    p: usize,
    gen: Option<GeneratingFunction>,
    a: f64,
    c: f64,
    s1: f64,
    sq_type: Option<SqType>,
    // S-q: log-scale shift and shifted rho~ at `a`. MLE: ln phi anchor.
    shift: f64,
    rho_at_a: f64,
}

impl EstimatorKernel {
    /// S-q kernel for the given generating function and `q <= 1`.
    pub fn sq(gen: GeneratingFunction, q: f64) -> Result<Self> {
        if !(q <= 1.0) || !q.is_finite() {
            return Err(Error::Tuning(format!("q = {q} must satisfy q <= 1")));
        }
        let base = Self {
            kind: KernelKind::Sq,
            tuning: Some(q),
            p: gen.p(),
            gen: Some(gen),
            a: 0.0,
            c: f64::INFINITY,
            s1: 1.0,
            sq_type: Some(SqType::QEqualsOne),
            shift: 0.0,
            rho_at_a: 0.0,
        };
        if q == 1.0 {
            return Ok(base);
        }
        let rp = rejection_points(&gen, q)?;
        // Evaluate rho~ relative to its size at `c` so extreme q stay finite.
        let ln_env_c = {
            let probe = rho_tilde_shifted(&gen, q, rp.c, 0.0);
            if probe.is_finite() && probe != 0.0 {
                probe.abs().ln()
            } else {
                0.0
            }
        };
        let at = |t: f64| rho_tilde_shifted(&gen, q, t, ln_env_c);
        let rho_a = at(rp.a.max(T_ZERO));
        let rho_c = at(rp.c);
        let span = rho_c - rho_a;
        if !(span > 0.0) || !span.is_finite() {
            return Err(Error::Tuning(format!(
                "rho~ does not increase between a = {} and c = {} for q = {q}",
                rp.a, rp.c
            )));
        }
        Ok(Self {
            a: rp.a,
            c: rp.c,
            s1: 1.0 / span,
            sq_type: Some(rp.sq_type),
            shift: ln_env_c,
            rho_at_a: rho_a,
            ..base
        })
    }

    /// S-Rocke kernel, `gamma` in `(0, 1]`.
    pub fn rocke(p: usize, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(invalid("gamma", gamma, "must lie in (0, 1]"));
        }
        Ok(Self::generic(
            KernelKind::Rocke,
            Some(gamma),
            p,
            1.0 - gamma,
            1.0 + gamma,
        ))
    }

    /// S-bisquare kernel.
    pub fn bisquare(p: usize) -> Self {
        Self::generic(KernelKind::Bisquare, None, p, 0.0, 1.0)
    }

    /// Smoothed hard rejection kernel with cutoff `c > 1`.
    pub fn shr(p: usize, c: f64) -> Result<Self> {
        if !(c > 1.0) || !c.is_finite() {
            return Err(invalid("c", c, "must be finite and greater than 1"));
        }
        Ok(Self::generic(KernelKind::Shr, Some(c), p, 0.0, c))
    }

    /// Maximum likelihood weights for the given family. Rho is
    /// `-2 ln phi(t)`, anchored at `t = 0` when `phi(0)` is finite and
    /// positive, otherwise at `t = 1`.
    pub fn mle(gen: GeneratingFunction) -> Self {
        let at0 = gen.ln_phi(0.0);
        let anchor = if at0.is_finite() {
            at0
        } else {
            gen.ln_phi(1.0)
        };
        Self {
            gen: Some(gen),
            shift: anchor,
            ..Self::generic(KernelKind::Mle, None, gen.p(), 0.0, f64::INFINITY)
        }
    }

    fn generic(kind: KernelKind, tuning: Option<f64>, p: usize, a: f64, c: f64) -> Self {
        Self {
            kind,
            tuning,
            p,
            gen: None,
            a,
            c,
            s1: 1.0,
            sq_type: None,
            shift: 0.0,
            rho_at_a: 0.0,
        }
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn tuning(&self) -> Option<f64> {
        self.tuning
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn generating_function(&self) -> Option<&GeneratingFunction> {
        self.gen.as_ref()
    }

    /// Inlier rejection point (start of the weight's support).
    pub fn a(&self) -> f64 {
        self.a
    }

    /// Outlier rejection point (end of the weight's support).
    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn s1(&self) -> f64 {
        self.s1
    }

    pub fn sq_type(&self) -> Option<SqType> {
        self.sq_type
    }

    /// Bounded, normalized rho with `rho(0) = 0` and `rho(inf) = 1`.
    pub fn is_proper(&self) -> bool {
        match self.kind {
            KernelKind::Sq => self.tuning != Some(1.0),
            KernelKind::Mle => false,
            _ => true,
        }
    }

    /// Points where rho or the weight are not smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut v = match self.kind {
            KernelKind::Rocke => vec![self.a, 1.0, self.c],
            KernelKind::Shr => vec![1.0, self.c],
            _ => vec![self.a, self.c],
        };
        v.retain(|x| x.is_finite() && *x > 0.0);
        v
    }

    pub fn rho(&self, t: f64) -> f64 {
        match self.kind {
            KernelKind::Sq => self.sq_rho(t),
            KernelKind::Rocke => {
                let g = self.tuning.unwrap_or(1.0);
                if t <= 1.0 - g {
                    0.0
                } else if t >= 1.0 + g {
                    1.0
                } else {
                    let u = (t - 1.0) / g;
                    (t - 1.0) / (4.0 * g) * (3.0 - u * u) + 0.5
                }
            }
            KernelKind::Bisquare => {
                if t >= 1.0 {
                    1.0
                } else {
                    1.0 - (1.0 - t).powi(3)
                }
            }
            KernelKind::Shr => {
                let c = self.c;
                let k = 0.5 * (c + 1.0);
                if t <= 1.0 {
                    t / k
                } else if t >= c {
                    1.0
                } else {
                    let s = (t - 1.0) / (c - 1.0);
                    (1.0 + (c - 1.0) * (s - s.powi(3) + 0.5 * s.powi(4))) / k
                }
            }
            KernelKind::Mle => {
                let g = self.gen.as_ref().expect("mle kernel has a family");
                if g.support_upper().is_some_and(|u| t >= u) {
                    return f64::INFINITY;
                }
                -2.0 * (g.ln_phi(t.max(0.0)) - self.shift)
            }
        }
    }

    pub fn weight(&self, t: f64) -> f64 {
        match self.kind {
            KernelKind::Sq => self.sq_weight(t),
            KernelKind::Rocke => {
                let g = self.tuning.unwrap_or(1.0);
                if t < 1.0 - g || t > 1.0 + g {
                    0.0
                } else {
                    let u = (t - 1.0) / g;
                    0.75 / g * (1.0 - u * u)
                }
            }
            KernelKind::Bisquare => {
                if t <= 1.0 {
                    3.0 * (1.0 - t).powi(2)
                } else {
                    0.0
                }
            }
            KernelKind::Shr => {
                let c = self.c;
                let k = 0.5 * (c + 1.0);
                if t <= 1.0 {
                    1.0 / k
                } else if t >= c {
                    0.0
                } else {
                    let s = (t - 1.0) / (c - 1.0);
                    (1.0 - 3.0 * s * s + 2.0 * s.powi(3)) / k
                }
            }
            KernelKind::Mle => {
                let g = self.gen.as_ref().expect("mle kernel has a family");
                if g.support_upper().is_some_and(|u| t >= u) {
                    return 0.0;
                }
                -2.0 * g.log_derivs(t.max(T_ZERO)).d1
            }
        }
    }

    fn sq_rho(&self, t: f64) -> f64 {
        let g = self.gen.as_ref().expect("sq kernel has a family");
        let q = self.tuning.unwrap_or(1.0);
        if q == 1.0 {
            return rho_tilde_shifted(g, q, t, 0.0);
        }
        if t <= self.a {
            0.0
        } else if t >= self.c {
            1.0
        } else {
            let v = self.s1 * (rho_tilde_shifted(g, q, t, self.shift) - self.rho_at_a);
            v.clamp(0.0, 1.0)
        }
    }

    /// `(rho(t), weight(t))`, sharing work where the kernel allows.
    pub fn rho_weight(&self, t: f64) -> (f64, f64) {
        if self.kind == KernelKind::Sq && t > self.a && t < self.c && self.tuning != Some(1.0) {
            let g = self.gen.as_ref().expect("sq kernel has a family");
            let q = self.tuning.unwrap_or(1.0);
            let (r, w) = rho_weight_tilde_shifted(g, q, t, self.shift);
            return (
                (self.s1 * (r - self.rho_at_a)).clamp(0.0, 1.0),
                (self.s1 * w).max(0.0),
            );
        }
        (self.rho(t), self.weight(t))
    }

    fn sq_weight(&self, t: f64) -> f64 {
        let g = self.gen.as_ref().expect("sq kernel has a family");
        let q = self.tuning.unwrap_or(1.0);
        if q == 1.0 {
            return weight_tilde_shifted(g, q, t.max(T_ZERO), 0.0);
        }
        if t <= self.a || t >= self.c {
            0.0
        } else {
            (self.s1 * weight_tilde_shifted(g, q, t.max(T_ZERO), self.shift)).max(0.0)
        }
    }
}
