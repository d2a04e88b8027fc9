//! Plain-text `key=value` specifications of models and estimators.
//!
//! ```text
//! family=t nu=3 p=20
//! estimator=sq q=0.9
//! estimator=shr eff=0.8
//! ```

use crate::elliptical::{Family, GeneratingFunction};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

/// Ordered `key=value` pairs. Tokens are separated by whitespace; `#` starts
/// a comment that runs to the end of the line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    map: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("");
            for tok in line.split_whitespace() {
                let (k, v) = tok.split_once('=').ok_or_else(|| {
                    Error::Parse(format!(
                        "line {}: expected key=value, found `{tok}`",
                        lineno + 1
                    ))
                })?;
                if k.is_empty() {
                    return Err(Error::Parse(format!(
                        "line {}: empty key in `{tok}`",
                        lineno + 1
                    )));
                }
                if map.insert(k.to_string(), v.to_string()).is_some() {
                    return Err(Error::Parse(format!("key `{k}` given twice")));
                }
            }
        }
        Ok(Self { map })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::Parse(format!("missing key `{key}`")))
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        parse_f64(key, self.require(key)?)
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        self.get(key).map_or(Ok(default), |v| parse_f64(key, v))
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        parse_usize(key, self.require(key)?)
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        self.get(key).map_or(Ok(default), |v| parse_usize(key, v))
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.map.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// Set `key`, replacing any earlier value.
    pub fn set(&mut self, key: &str, value: &str) {
        self.map.insert(key.to_string(), value.to_string());
    }

    /// Copy every pair of `other` over this one.
    pub fn overlay(&mut self, other: &KeyValues) {
        for (k, v) in other.iter() {
            self.set(k, v);
        }
    }

    /// Keep only the listed keys.
    pub fn subset(&self, keys: &[&str]) -> Self {
        Self {
            map: self
                .map
                .iter()
                .filter(|(k, _)| keys.contains(&k.as_str()))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    /// Error naming the first key outside `allowed`.
    pub fn reject_unknown(&self, allowed: &[&str]) -> Result<()> {
        match self.keys().find(|k| !allowed.contains(k)) {
            Some(k) => Err(Error::Parse(format!(
                "unknown key `{k}` (expected one of: {})",
                allowed.join(", ")
            ))),
            None => Ok(()),
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.parse::<f64>()
        .map_err(|_| Error::Parse(format!("key `{key}`: `{v}` is not a number")))
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.parse::<usize>()
        .map_err(|_| Error::Parse(format!("key `{key}`: `{v}` is not a non-negative integer")))
}

/// Keys a model specification may use.
pub const MODEL_KEYS: &[&str] = &[
    "family", "p", "N", "r", "s", "m", "nu", "lambda", "chi", "psi",
];

/// Family and dimension from pairs such as `family=t nu=3 p=20`.
pub fn parse_model(kv: &KeyValues) -> Result<GeneratingFunction> {
    let p = kv.usize("p")?;
    let name = kv.require("family")?;
    let (family, keys): (Family, &[&str]) = match name {
        "gaussian" | "normal" => (Family::Gaussian, &[]),
        "kotz" => (
            Family::Kotz {
                n: kv.f64("N")?,
                r: kv.f64("r")?,
                s: kv.f64("s")?,
            },
            &["N", "r", "s"],
        ),
        "pearson2" => (Family::PearsonII { m: kv.f64("m")? }, &["m"]),
        "pearson7" => (
            Family::PearsonVII {
                n: kv.f64("N")?,
                s: kv.f64("s")?,
            },
            &["N", "s"],
        ),
        "t" => (Family::T { nu: kv.f64("nu")? }, &["nu"]),
        "cauchy" => (Family::Cauchy, &[]),
        "genhyp" => (
            Family::GeneralizedHyperbolic {
                lambda: kv.f64("lambda")?,
                chi: kv.f64("chi")?,
                psi: kv.f64("psi")?,
            },
            &["lambda", "chi", "psi"],
        ),
        "vg" => (
            Family::VarianceGamma {
                lambda: kv.f64("lambda")?,
                psi: kv.f64("psi")?,
            },
            &["lambda", "psi"],
        ),
        "laplace" => (Family::Laplace, &[]),
        "mvhyp" => (
            Family::MultivariateHyperbolic {
                chi: kv.f64("chi")?,
                psi: kv.f64("psi")?,
            },
            &["chi", "psi"],
        ),
        "hypmarg" => (
            Family::HyperbolicUnivariateMarginals {
                chi: kv.f64("chi")?,
                psi: kv.f64("psi")?,
            },
            &["chi", "psi"],
        ),
        "nig" => (
            Family::NormalInverseGaussian {
                chi: kv.f64("chi")?,
                psi: kv.f64("psi")?,
            },
            &["chi", "psi"],
        ),
        other => {
            return Err(Error::Parse(format!(
                "unknown family `{other}` (expected gaussian, kotz, pearson2, pearson7, t, \
                 cauchy, genhyp, vg, laplace, mvhyp, hypmarg or nig)"
            )))
        }
    };
    let mut allowed = vec!["family", "p"];
    allowed.extend_from_slice(keys);
    kv.subset(MODEL_KEYS).reject_unknown(&allowed)?;
    GeneratingFunction::new(family, p)
}

/// Render a model back into its `key=value` form.
pub fn format_model(gen: &GeneratingFunction) -> String {
    let p = gen.p();
    match gen.family() {
        Family::Gaussian => format!("family=gaussian p={p}"),
        Family::Kotz { n, r, s } => format!("family=kotz N={n} r={r} s={s} p={p}"),
        Family::PearsonII { m } => format!("family=pearson2 m={m} p={p}"),
        Family::PearsonVII { n, s } => format!("family=pearson7 N={n} s={s} p={p}"),
        Family::T { nu } => format!("family=t nu={nu} p={p}"),
        Family::Cauchy => format!("family=cauchy p={p}"),
        Family::GeneralizedHyperbolic { lambda, chi, psi } => {
            format!("family=genhyp lambda={lambda} chi={chi} psi={psi} p={p}")
        }
        Family::VarianceGamma { lambda, psi } => {
            format!("family=vg lambda={lambda} psi={psi} p={p}")
        }
        Family::Laplace => format!("family=laplace p={p}"),
        Family::MultivariateHyperbolic { chi, psi } => {
            format!("family=mvhyp chi={chi} psi={psi} p={p}")
        }
        Family::HyperbolicUnivariateMarginals { chi, psi } => {
            format!("family=hypmarg chi={chi} psi={psi} p={p}")
        }
        Family::NormalInverseGaussian { chi, psi } => {
            format!("family=nig chi={chi} psi={psi} p={p}")
        }
    }
}

/// Estimator families available for fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Sq,
    Rocke,
    Bisquare,
    Shr,
    Mle,
    /// Sample mean and covariance.
    Sample,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Sq => "sq",
            EstimatorKind::Rocke => "rocke",
            EstimatorKind::Bisquare => "bisquare",
            EstimatorKind::Shr => "shr",
            EstimatorKind::Mle => "mle",
            EstimatorKind::Sample => "sample",
        }
    }

    /// Name of the tuning key, if the estimator has one.
    pub fn tuning_key(self) -> Option<&'static str> {
        match self {
            EstimatorKind::Sq => Some("q"),
            EstimatorKind::Rocke => Some("gamma"),
            EstimatorKind::Shr => Some("c"),
            _ => None,
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How the tuning constant is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "snake_case")]
pub enum Tuning {
    /// Explicit value of `q`, `gamma` or `c`.
    Param(f64),
    /// Asymptotic shape efficiency to reach at the model.
    Efficiency(f64),
    /// Largest achievable asymptotic efficiency.
    MaxEfficiency,
    /// Estimator has no tuning constant.
    Untuned,
}

/// Parsed estimator specification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub kind: EstimatorKind,
    pub tuning: Tuning,
}

impl EstimatorSpec {
    pub fn new(kind: EstimatorKind, tuning: Tuning) -> Self {
        Self { kind, tuning }
    }

    /// Parse `estimator=sq q=0.9`, `estimator=rocke eff=max` and the like.
    pub fn parse(text: &str) -> Result<Self> {
        Self::from_kv(&KeyValues::parse(text)?)
    }

    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let kind = match kv.require("estimator")? {
            "sq" => EstimatorKind::Sq,
            "rocke" => EstimatorKind::Rocke,
            "bisquare" => EstimatorKind::Bisquare,
            "shr" => EstimatorKind::Shr,
            "mle" => EstimatorKind::Mle,
            "sample" => EstimatorKind::Sample,
            other => {
                return Err(Error::Parse(format!(
                    "unknown estimator `{other}` (expected sq, rocke, bisquare, shr, mle or sample)"
                )))
            }
        };
        let tuning = match kind.tuning_key() {
            None => {
                kv.reject_unknown(&["estimator"])?;
                Tuning::Untuned
            }
            Some(key) => {
                kv.reject_unknown(&["estimator", key, "eff"])?;
                match (kv.get(key), kv.get("eff")) {
                    (Some(_), Some(_)) => {
                        return Err(Error::Parse(format!(
                            "give either `{key}` or `eff`, not both"
                        )))
                    }
                    (Some(v), None) => Tuning::Param(parse_f64(key, v)?),
                    (None, Some("max")) => Tuning::MaxEfficiency,
                    (None, Some(v)) => {
                        let e = parse_f64("eff", v)?;
                        if !(e > 0.0 && e <= 1.0) {
                            return Err(Error::Parse(format!("key `eff`: {e} must lie in (0, 1]")));
                        }
                        Tuning::Efficiency(e)
                    }
                    (None, None) => {
                        return Err(Error::Parse(format!(
                            "estimator {kind} needs `{key}` or `eff`"
                        )))
                    }
                }
            }
        };
        Ok(Self { kind, tuning })
    }
}

impl fmt::Display for EstimatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "estimator={}", self.kind)?;
        match (self.tuning, self.kind.tuning_key()) {
            (Tuning::Param(v), Some(k)) => write!(f, " {k}={v}"),
            (Tuning::Efficiency(e), _) => write!(f, " eff={e}"),
            (Tuning::MaxEfficiency, _) => write!(f, " eff=max"),
            _ => Ok(()),
        }
    }
}

impl std::str::FromStr for EstimatorSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

/// Scale target `b` of S-estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "snake_case")]
pub enum BMode {
    /// `1/2 - (p+1)/(2n)`.
    MaxBreakdown,
    Value(f64),
}

impl BMode {
    pub fn parse(v: &str) -> Result<Self> {
        if v == "max" {
            return Ok(BMode::MaxBreakdown);
        }
        let b = parse_f64("b", v)?;
        if !(b > 0.0 && b < 1.0) {
            return Err(Error::Parse(format!("key `b`: {b} must lie in (0, 1)")));
        }
        Ok(BMode::Value(b))
    }

    pub fn resolve(self, n: usize, p: usize) -> Result<f64> {
        match self {
            BMode::MaxBreakdown => crate::solver::b_max_breakdown(n, p),
            BMode::Value(b) => Ok(b),
        }
    }

    /// Large-sample value, used when tuning to an asymptotic efficiency.
    pub fn asymptotic(self) -> f64 {
        match self {
            BMode::MaxBreakdown => 0.5,
            BMode::Value(b) => b,
        }
    }
}
