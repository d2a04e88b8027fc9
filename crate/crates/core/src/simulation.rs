//! Monte Carlo experiments: finite-sample efficiency, robustness to shift
//! contamination, stability under different starts, and iteration counts.
//!
//! Every trial draws from the model with zero location and identity scatter;
//! trial `t` uses the random stream `(seed, t)`, so results do not depend on
//! the execution mode.

pub use crate::divergence::{kl_divergence, kl_shape_divergence};

use crate::elliptical::{EllipticalModel, GeneratingFunction};
use crate::error::{Error, Result};
use crate::estimator::{Estimator, ResolvedTuning};
use crate::linalg::{Matrix, Vector};
use crate::parallel::{map_indexed, Execution};
use crate::rng::trial_rng;
use crate::solver::{FitOptions, FitResult};
use crate::spec::{parse_model, BMode, EstimatorKind, EstimatorSpec, KeyValues, MODEL_KEYS};
use serde::Serialize;

/// Contamination values used when none are given.
pub const DEFAULT_K_GRID: [f64; 13] = [
    2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0, 16.0, 18.0, 20.0, 1e2, 1e3, 1e6,
];

/// Averages below this are reported as zero.
pub const REPORT_FLOOR: f64 = 1e-10;

/// Set the first coordinate of the first `floor(epsilon n)` rows to `k`.
pub fn contaminate(data: &Matrix, epsilon: f64, k: f64) -> Result<Matrix> {
    let mut out = data.clone();
    contaminate_in_place(&mut out, epsilon, k)?;
    Ok(out)
}

pub fn contaminate_in_place(data: &mut Matrix, epsilon: f64, k: f64) -> Result<()> {
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::Domain(format!(
            "contamination fraction {epsilon} must lie in [0, 1)"
        )));
    }
    let m = contaminated_rows(data.nrows(), epsilon);
    for i in 0..m {
        data[(i, 0)] = k;
    }
    Ok(())
}

/// `floor(epsilon n)`, robust to `epsilon n` landing just below an integer.
pub fn contaminated_rows(n: usize, epsilon: f64) -> usize {
    ((epsilon * n as f64) + 1e-9).floor() as usize
}

/// Which divergence scores an estimate against the truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    /// `D(mu, Omega; mu, Omega_hat)`.
    Shape,
    /// `D(mu, Sigma; mu_hat, Sigma)`.
    Location,
    /// `D(mu, Sigma; mu, Sigma_hat)`.
    Scatter,
    /// `D(mu, Sigma; mu_hat, Sigma_hat)`.
    Joint,
}

impl Measure {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "shape" => Ok(Measure::Shape),
            "location" => Ok(Measure::Location),
            "scatter" => Ok(Measure::Scatter),
            "joint" => Ok(Measure::Joint),
            _ => Err(Error::Parse(format!(
                "unknown measure `{s}` (expected shape, location, scatter or joint)"
            ))),
        }
    }

    /// Divergence of `fit` from zero location and identity scatter.
    pub fn score(self, fit: &FitResult) -> Result<f64> {
        let p = fit.mu_hat.len();
        let zero = Vector::zeros(p);
        let eye = Matrix::identity(p, p);
        match self {
            Measure::Shape => kl_shape_divergence(&eye, &fit.omega_hat),
            Measure::Location => kl_divergence(&zero, &eye, &fit.mu_hat, &eye),
            Measure::Scatter => kl_divergence(&zero, &eye, &zero, &fit.sigma_hat),
            Measure::Joint => kl_divergence(&zero, &eye, &fit.mu_hat, &fit.sigma_hat),
        }
    }
}

/// Settings shared by all experiments.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub model: GeneratingFunction,
    pub n: usize,
    pub epsilon: f64,
    pub k_grid: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub estimators: Vec<EstimatorSpec>,
    pub b: BMode,
    pub max_iter: usize,
    pub tol: f64,
    pub exec: Execution,
}

impl ExperimentConfig {
    pub fn new(model: GeneratingFunction, n: usize, estimators: Vec<EstimatorSpec>) -> Self {
        Self {
            model,
            n,
            epsilon: 0.0,
            k_grid: DEFAULT_K_GRID.to_vec(),
            trials: 50,
            seed: 0,
            estimators,
            b: BMode::MaxBreakdown,
            max_iter: 200,
            tol: 1e-10,
            exec: Execution::default(),
        }
    }

    pub fn p(&self) -> usize {
        self.model.p()
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.p();
        if self.n < p + 1 {
            return Err(Error::InsufficientData(format!(
                "n = {} is below p + 1 = {}",
                self.n,
                p + 1
            )));
        }
        if !(0.0..0.5).contains(&self.epsilon) {
            return Err(Error::Domain(format!(
                "epsilon = {} must lie in [0, 1/2)",
                self.epsilon
            )));
        }
        if self.trials == 0 {
            return Err(Error::Domain("trials must be at least 1".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::Domain("no estimators given".into()));
        }
        if self.k_grid.is_empty() || self.k_grid.iter().any(|k| !k.is_finite()) {
            return Err(Error::Domain("k_grid must hold finite values".into()));
        }
        Ok(())
    }

    pub fn b_value(&self) -> Result<f64> {
        self.b.resolve(self.n, self.p())
    }

    pub fn fit_options(&self) -> Result<FitOptions> {
        FitOptions {
            max_iter: self.max_iter,
            tol: self.tol,
            model_median: None,
        }
        .with_reference(&self.model)
    }

    /// Resolve every estimator's tuning at the model. Efficiency targets
    /// are asymptotic, so they use the large-sample `b`.
    pub fn resolve(&self) -> Result<Vec<Estimator>> {
        let b = self.b.asymptotic();
        self.estimators
            .iter()
            .map(|s| Estimator::resolve(*s, self.model, b))
            .collect()
    }

    /// Clean sample of trial `t`.
    pub fn trial_data(&self, t: usize) -> Result<Matrix> {
        let m = EllipticalModel::standard(self.model);
        m.sample_with(self.n, &mut trial_rng(self.seed, t as u64))
    }

    /// Read an experiment from `key=value` pairs.
    ///
    /// Keys: the model keys (`family`, `p`, ...), `n`, `epsilon`, `k_grid`
    /// (comma separated), `trials`, `seed`, `b` (`max` or a value),
    /// `max_iter`, `tol`, and `estimators` (comma separated kinds). Each
    /// tuned estimator takes `<kind>.<key>=value`, for example `sq.eff=0.9`
    /// or `rocke.gamma=1`.
    pub fn from_kv(kv: &KeyValues, extra: &[&str]) -> Result<Self> {
        let model = parse_model(&kv.subset(MODEL_KEYS))?;
        let n = kv.usize("n")?;
        let kinds = kv.require("estimators")?;
        let mut estimators = Vec::new();
        let mut allowed: Vec<String> = MODEL_KEYS.iter().map(|s| s.to_string()).collect();
        for k in [
            "n",
            "epsilon",
            "k_grid",
            "trials",
            "seed",
            "b",
            "max_iter",
            "tol",
            "estimators",
        ] {
            allowed.push(k.to_string());
        }
        allowed.extend(extra.iter().map(|s| s.to_string()));
        for name in kinds.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let mut text = format!("estimator={name}");
            let prefix = format!("{name}.");
            for (k, v) in kv.iter() {
                if let Some(rest) = k.strip_prefix(&prefix) {
                    text.push_str(&format!(" {rest}={v}"));
                    allowed.push(k.to_string());
                }
            }
            estimators.push(EstimatorSpec::parse(&text).map_err(|e| match e {
                Error::Parse(m) => {
                    Error::Parse(format!("{m} (tuning keys are written `{name}.<key>`)"))
                }
                other => other,
            })?);
        }
        let allowed_ref: Vec<&str> = allowed.iter().map(String::as_str).collect();
        kv.reject_unknown(&allowed_ref)?;
        let mut cfg = Self::new(model, n, estimators);
        cfg.epsilon = kv.f64_or("epsilon", 0.0)?;
        if let Some(g) = kv.get("k_grid") {
            cfg.k_grid = g
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Parse(format!("key `k_grid`: `{v}` is not a number")))
                })
                .collect::<Result<_>>()?;
        }
        cfg.trials = kv.usize_or("trials", cfg.trials)?;
        cfg.seed = kv.get("seed").map_or(Ok(0), |v| {
            v.parse::<u64>()
                .map_err(|_| Error::Parse(format!("key `seed`: `{v}` is not an unsigned integer")))
        })?;
        if let Some(b) = kv.get("b") {
            cfg.b = BMode::parse(b)?;
        }
        cfg.max_iter = kv.usize_or("max_iter", cfg.max_iter)?;
        cfg.tol = kv.f64_or("tol", cfg.tol)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Mean over the trials that succeeded, with the failure count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialMean {
    pub mean: f64,
    pub used: usize,
    pub failures: usize,
}

fn mean_of(values: &[Option<f64>], estimator: EstimatorKind) -> Result<TrialMean> {
    let failures = values.iter().filter(|v| v.is_none()).count();
    check_failures(failures, values.len(), estimator)?;
    let ok: Vec<f64> = values.iter().flatten().copied().collect();
    Ok(TrialMean {
        mean: ok.iter().sum::<f64>() / ok.len() as f64,
        used: ok.len(),
        failures,
    })
}

fn check_failures(failures: usize, trials: usize, estimator: EstimatorKind) -> Result<()> {
    if failures * 10 > trials || failures == trials {
        return Err(Error::Experiment(format!(
            "{estimator}: {failures} of {trials} trials failed (more than 10%)"
        )));
    }
    Ok(())
}

fn floor_report(v: f64) -> f64 {
    if v < REPORT_FLOOR {
        0.0
    } else {
        v
    }
}

/// Finite-sample efficiency of one estimator against the likelihood fit.
#[derive(Debug, Clone, Serialize)]
pub struct EfficiencyRow {
    pub estimator: EstimatorKind,
    pub tuning: ResolvedTuning,
    pub efficiency: f64,
    pub mean_divergence: f64,
    pub mle_mean_divergence: f64,
    /// Trials where either fit failed.
    pub failures: usize,
}

/// `E[D(MLE)] / E[D(estimator)]` with common random numbers; a trial is
/// dropped for an estimator when either fit fails.
pub fn finite_sample_efficiency(
    config: &ExperimentConfig,
    measure: Measure,
) -> Result<Vec<EfficiencyRow>> {
    config.validate()?;
    let ests = config.resolve()?;
    let mle = Estimator::with_param(EstimatorKind::Mle, config.model, None)?;
    let b = config.b_value()?;
    let opts = config.fit_options()?;
    let per_trial: Vec<Result<(Option<f64>, Vec<Option<f64>>)>> =
        map_indexed(config.trials, config.exec, |t| {
            let mut x = config.trial_data(t)?;
            contaminate_in_place(&mut x, config.epsilon, config.k_grid[0])?;
            let score = |e: &Estimator| {
                e.fit(&x, b, &opts)
                    .and_then(|f| measure.score(&f))
                    .ok()
                    .filter(|v| v.is_finite())
            };
            Ok((score(&mle), ests.iter().map(score).collect()))
        });
    let per_trial = per_trial.into_iter().collect::<Result<Vec<_>>>()?;
    ests.iter()
        .enumerate()
        .map(|(j, e)| {
            let pairs: Vec<Option<(f64, f64)>> =
                per_trial.iter().map(|(m, v)| m.zip(v[j])).collect();
            let failures = pairs.iter().filter(|p| p.is_none()).count();
            check_failures(failures, config.trials, e.kind())?;
            let (sm, se) = pairs
                .iter()
                .flatten()
                .fold((0.0, 0.0), |(a, b), (m, v)| (a + m, b + v));
            let used = (config.trials - failures) as f64;
            Ok(EfficiencyRow {
                estimator: e.kind(),
                tuning: e.summary(),
                efficiency: sm / se,
                mean_divergence: se / used,
                mle_mean_divergence: sm / used,
                failures,
            })
        })
        .collect()
}

/// Mean shape divergence at one contamination value.
#[derive(Debug, Clone, Serialize)]
pub struct RobustnessRow {
    pub estimator: EstimatorKind,
    pub k: f64,
    pub mean_divergence: f64,
    pub failures: usize,
}

/// Mean `D(mu, Omega; mu, Omega_hat)` for every estimator and every `k`.
pub fn robustness_curve(config: &ExperimentConfig) -> Result<Vec<RobustnessRow>> {
    config.validate()?;
    let ests = config.resolve()?;
    robustness_with(config, &ests)
}

fn robustness_with(config: &ExperimentConfig, ests: &[Estimator]) -> Result<Vec<RobustnessRow>> {
    let b = config.b_value()?;
    let opts = config.fit_options()?;
    let per_trial: Vec<Result<Vec<Vec<Option<f64>>>>> =
        map_indexed(config.trials, config.exec, |t| {
            let clean = config.trial_data(t)?;
            config
                .k_grid
                .iter()
                .map(|&k| {
                    let x = contaminate(&clean, config.epsilon, k)?;
                    Ok(ests
                        .iter()
                        .map(|e| {
                            e.fit(&x, b, &opts)
                                .and_then(|f| Measure::Shape.score(&f))
                                .ok()
                                .filter(|v| v.is_finite())
                        })
                        .collect())
                })
                .collect()
        });
    let per_trial = per_trial.into_iter().collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for (j, e) in ests.iter().enumerate() {
        for (ki, &k) in config.k_grid.iter().enumerate() {
            let vals: Vec<Option<f64>> = per_trial.iter().map(|t| t[ki][j]).collect();
            let m = mean_of(&vals, e.kind())?;
            rows.push(RobustnessRow {
                estimator: e.kind(),
                k,
                mean_divergence: m.mean,
                failures: m.failures,
            });
        }
    }
    Ok(rows)
}

/// Contamination value with the largest mean divergence, per estimator.
pub fn worst_case_k(config: &ExperimentConfig) -> Result<Vec<(EstimatorKind, f64)>> {
    let ests = config.resolve()?;
    let ks = worst_with(config, &ests)?;
    Ok(ests.iter().map(|e| e.kind()).zip(ks).collect())
}

fn worst_with(config: &ExperimentConfig, ests: &[Estimator]) -> Result<Vec<f64>> {
    if config.epsilon == 0.0 || config.k_grid.len() == 1 {
        return Ok(vec![config.k_grid[0]; ests.len()]);
    }
    let rows = robustness_with(config, ests)?;
    Ok(ests
        .iter()
        .map(|e| {
            rows.iter()
                .filter(|r| r.estimator == e.kind())
                .max_by(|a, b| a.mean_divergence.total_cmp(&b.mean_divergence))
                .map(|r| r.k)
                .unwrap_or(config.k_grid[0])
        })
        .collect())
}

/// Mean divergence between fits from two different starts.
#[derive(Debug, Clone, Serialize)]
pub struct StabilityRow {
    pub estimator: EstimatorKind,
    pub k: f64,
    /// Mean divergence, zero when below the convergence criterion.
    pub mean_divergence: f64,
    pub raw_mean_divergence: f64,
    pub failures: usize,
}

/// Fit each contaminated sample twice: from the likelihood fit to all clean
/// rows, and from the likelihood fit to the first quarter of them. Reports
/// the mean `D(Omega_1, Omega_2)`. `ks` gives each estimator's contamination
/// value; by default the worst case over `k_grid`.
pub fn stability_experiment(
    config: &ExperimentConfig,
    ks: Option<&[f64]>,
) -> Result<Vec<StabilityRow>> {
    config.validate()?;
    let ests = config.resolve()?;
    let ks = match ks {
        Some(k) if k.len() == ests.len() => k.to_vec(),
        Some(k) => {
            return Err(Error::Dimension {
                expected: ests.len(),
                actual: k.len(),
            })
        }
        None => worst_with(config, &ests)?,
    };
    let b = config.b_value()?;
    let opts = config.fit_options()?;
    let p = config.p();
    let quarter = config.n.div_ceil(4).max(p + 1).min(config.n);
    let mle = Estimator::with_param(EstimatorKind::Mle, config.model, None)?;
    let per_trial: Vec<Result<Vec<Option<f64>>>> = map_indexed(config.trials, config.exec, |t| {
        let clean = config.trial_data(t)?;
        let start_a = mle.fit(&clean, b, &opts).ok();
        let start_b = mle.fit(&clean.rows(0, quarter).into_owned(), b, &opts).ok();
        let starts = start_a.zip(start_b).map(|(a, bb)| {
            let to = |f: FitResult| crate::solver::StartingPoint {
                mu: f.mu_hat,
                omega: f.omega_hat,
                fallback: false,
            };
            (to(a), to(bb))
        });
        ests.iter()
            .zip(&ks)
            .map(|(e, &k)| {
                let Some((sa, sb)) = &starts else {
                    return Ok(None);
                };
                let x = contaminate(&clean, config.epsilon, k)?;
                let f1 = e.fit_from(&x, b, sa, &opts);
                let f2 = e.fit_from(&x, b, sb, &opts);
                Ok(match (f1, f2) {
                    (Ok(f1), Ok(f2)) => kl_shape_divergence(&f1.omega_hat, &f2.omega_hat).ok(),
                    _ => None,
                })
            })
            .collect()
    });
    let per_trial = per_trial.into_iter().collect::<Result<Vec<_>>>()?;
    ests.iter()
        .enumerate()
        .map(|(j, e)| {
            let vals: Vec<Option<f64>> = per_trial.iter().map(|t| t[j]).collect();
            let m = mean_of(&vals, e.kind())?;
            Ok(StabilityRow {
                estimator: e.kind(),
                k: ks[j],
                mean_divergence: floor_report(m.mean),
                raw_mean_divergence: m.mean,
                failures: m.failures,
            })
        })
        .collect()
}

/// Median iteration count from the deterministic robust start.
#[derive(Debug, Clone, Serialize)]
pub struct IterationRow {
    pub estimator: EstimatorKind,
    pub k: f64,
    pub median_iterations: f64,
    pub nonconverged: usize,
    pub failures: usize,
}

/// Median iterations per estimator; fits that hit `max_iter` count at
/// `max_iter`.
pub fn iteration_study(config: &ExperimentConfig, ks: Option<&[f64]>) -> Result<Vec<IterationRow>> {
    config.validate()?;
    let ests = config.resolve()?;
    let ks = match ks {
        Some(k) if k.len() == ests.len() => k.to_vec(),
        Some(k) => {
            return Err(Error::Dimension {
                expected: ests.len(),
                actual: k.len(),
            })
        }
        None => worst_with(config, &ests)?,
    };
    let b = config.b_value()?;
    let opts = config.fit_options()?;
    let per_trial: Vec<Result<Vec<Option<(usize, bool)>>>> =
        map_indexed(config.trials, config.exec, |t| {
            let clean = config.trial_data(t)?;
            ests.iter()
                .zip(&ks)
                .map(|(e, &k)| {
                    let x = contaminate(&clean, config.epsilon, k)?;
                    Ok(e.fit(&x, b, &opts)
                        .ok()
                        .map(|f| (f.iterations, f.converged)))
                })
                .collect()
        });
    let per_trial = per_trial.into_iter().collect::<Result<Vec<_>>>()?;
    ests.iter()
        .enumerate()
        .map(|(j, e)| {
            let vals: Vec<Option<(usize, bool)>> = per_trial.iter().map(|t| t[j]).collect();
            let failures = vals.iter().filter(|v| v.is_none()).count();
            check_failures(failures, config.trials, e.kind())?;
            let iters: Vec<f64> = vals.iter().flatten().map(|(i, _)| *i as f64).collect();
            let nonconverged = vals.iter().flatten().filter(|(_, c)| !c).count();
            Ok(IterationRow {
                estimator: e.kind(),
                k: ks[j],
                median_iterations: crate::stats::median(&iters),
                nonconverged,
                failures,
            })
        })
        .collect()
}

/// Mean shape divergence of one estimator at each sample size.
pub fn consistency_curve(
    config: &ExperimentConfig,
    sizes: &[usize],
) -> Result<Vec<(usize, Vec<TrialMean>)>> {
    sizes
        .iter()
        .map(|&n| {
            let cfg = ExperimentConfig {
                n,
                ..config.clone()
            };
            let rows = finite_sample_efficiency_divergences(&cfg)?;
            Ok((n, rows))
        })
        .collect()
}

fn finite_sample_efficiency_divergences(config: &ExperimentConfig) -> Result<Vec<TrialMean>> {
    config.validate()?;
    let ests = config.resolve()?;
    let b = config.b_value()?;
    let opts = config.fit_options()?;
    let per_trial: Vec<Result<Vec<Option<f64>>>> = map_indexed(config.trials, config.exec, |t| {
        let mut x = config.trial_data(t)?;
        contaminate_in_place(&mut x, config.epsilon, config.k_grid[0])?;
        Ok(ests
            .iter()
            .map(|e| {
                e.fit(&x, b, &opts)
                    .and_then(|f| Measure::Shape.score(&f))
                    .ok()
            })
            .collect())
    });
    let per_trial = per_trial.into_iter().collect::<Result<Vec<_>>>()?;
    ests.iter()
        .enumerate()
        .map(|(j, e)| {
            let vals: Vec<Option<f64>> = per_trial.iter().map(|t| t[j]).collect();
            mean_of(&vals, e.kind())
        })
        .collect()
}
