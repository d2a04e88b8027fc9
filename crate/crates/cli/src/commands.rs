//! One function per subcommand. Each reads its settings from `key=value`
//! pairs, writes its outputs atomically and finishes with a manifest.

use crate::io::{self, csv_text, fmt_num, matrix_rows, num, nums, to_value, Outputs};
use anyhow::{anyhow, bail, Result};
use robust_scatter::asymptotics::{
    alpha_sigma, constants, efficiency_location, efficiency_shape, influence_location,
    influence_scatter, TunableKind,
};
use robust_scatter::elliptical::{DistanceLaw, Family, GeneratingFunction};
use robust_scatter::estimator::Estimator;
use robust_scatter::kernels::EstimatorKernel;
use robust_scatter::linalg::{Matrix, Vector};
use robust_scatter::parallel::{map_slice, Execution};
use robust_scatter::portfolio::{backtest, fit_vg_params};
use robust_scatter::simulation::{
    consistency_curve, finite_sample_efficiency, iteration_study, robustness_curve,
    stability_experiment, ExperimentConfig, Measure,
};
use robust_scatter::solver::FitOptions;
use robust_scatter::spec::{
    format_model, parse_model, BMode, EstimatorSpec, KeyValues, MODEL_KEYS,
};
use serde_json::{json, Map, Value};
use std::path::{Path, PathBuf};

pub struct Context {
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub threads: usize,
}

pub enum Status {
    Done,
    NotConverged,
}

const ESTIMATOR_KEYS: &[&str] = &["estimator", "q", "gamma", "c", "eff"];

fn check_keys(kv: &KeyValues, groups: &[&[&'static str]]) -> Result<()> {
    let all: Vec<&str> = groups.iter().flat_map(|g| g.iter().copied()).collect();
    kv.reject_unknown(&all)?;
    Ok(())
}

fn echo(kv: &KeyValues) -> Map<String, Value> {
    kv.iter()
        .map(|(k, v)| (k.to_string(), Value::String(v.to_string())))
        .collect()
}

fn estimator_spec(kv: &KeyValues) -> Result<EstimatorSpec> {
    Ok(EstimatorSpec::from_kv(&kv.subset(ESTIMATOR_KEYS))?)
}

/// Model from the model keys; the family defaults to Gaussian and `p` to
/// `default_p` when given.
fn model(kv: &KeyValues, default_p: Option<usize>) -> Result<GeneratingFunction> {
    let mut m = kv.subset(MODEL_KEYS);
    if m.get("family").is_none() {
        m.set("family", "gaussian");
    }
    match (m.get("p"), default_p) {
        (Some(v), Some(p)) if v.parse::<usize>().ok() != Some(p) => {
            bail!("key `p`: {v} does not match the {p} columns of the data")
        }
        (None, Some(p)) => m.set("p", &p.to_string()),
        _ => {}
    }
    Ok(parse_model(&m)?)
}

fn b_mode(kv: &KeyValues) -> Result<BMode> {
    Ok(kv.get("b").map_or(Ok(BMode::MaxBreakdown), BMode::parse)?)
}

fn fit_options(kv: &KeyValues, gen: &GeneratingFunction) -> Result<FitOptions> {
    let d = FitOptions::default();
    Ok(FitOptions {
        max_iter: kv.usize_or("max_iter", d.max_iter)?,
        tol: kv.f64_or("tol", d.tol)?,
        model_median: None,
    }
    .with_reference(gen)?)
}

fn tuning_json(e: &Estimator) -> Result<Value> {
    to_value(&e.summary())
}

pub fn fit(ctx: &Context, data: &Path, kv: KeyValues) -> Result<Status> {
    check_keys(
        &kv,
        &[ESTIMATOR_KEYS, MODEL_KEYS, &["b", "max_iter", "tol"]],
    )?;
    let (header, x) = io::read_data(data)?;
    let (n, p) = x.shape();
    let spec = estimator_spec(&kv)?;
    let gen = model(&kv, Some(p))?;
    let mode = b_mode(&kv)?;
    let b = mode.resolve(n, p)?;
    let est = Estimator::resolve(spec, gen, mode.asymptotic())?;
    let opts = fit_options(&kv, &gen)?;
    let f = est.fit(&x, b, &opts)?;
    let out = json!({
        "estimator": spec.to_string(),
        "model": format_model(&gen),
        "tuning": tuning_json(&est)?,
        "columns": header,
        "n": n,
        "p": p,
        "b": num(f.b),
        "mu": nums(f.mu_hat.iter().copied()),
        "omega": matrix_rows(&f.omega_hat),
        "sigma": matrix_rows(&f.sigma_hat),
        "m_scale": num(f.m_scale),
        "iterations": f.iterations,
        "converged": f.converged,
        "final_step": num(f.final_step),
    });
    let mut o = Outputs::new(&ctx.out)?;
    o.write_json("fit.json", &out)?;
    o.finish("fit", &echo(&kv), ctx.seed.unwrap_or(0), ctx.threads)?;
    println!(
        "{} n={n} p={p}: {} after {} iterations",
        spec,
        if f.converged {
            "converged"
        } else {
            "not converged"
        },
        f.iterations
    );
    Ok(if f.converged {
        Status::Done
    } else {
        Status::NotConverged
    })
}

fn constants_json(k: &EstimatorKernel, law: &DistanceLaw, b: f64) -> Result<Value> {
    let c = constants(k, law, b)?;
    Ok(json!({
        "omega1": num(c.omega1),
        "omega2": num(c.omega2),
        "zeta1": num(c.zeta1),
        "zeta2": num(c.zeta2),
        "lambda1": num(c.lambda1),
        "lambda2": num(c.lambda2),
        "sigma": num(c.sigma),
        "b": num(c.b),
        "location_factor": num(c.location_factor()),
    }))
}

fn kernel_of(est: &Estimator) -> Result<&EstimatorKernel> {
    est.kernel()
        .ok_or_else(|| anyhow!("estimator {} has no rho function", est.kind()))
}

pub fn tune(ctx: &Context, kv: KeyValues) -> Result<Status> {
    check_keys(&kv, &[ESTIMATOR_KEYS, MODEL_KEYS, &["b"]])?;
    let spec = estimator_spec(&kv)?;
    let gen = model(&kv, None)?;
    let b = b_mode(&kv)?.asymptotic();
    let est = Estimator::resolve(spec, gen, b)?;
    let k = kernel_of(&est)?;
    let law = DistanceLaw::new(gen)?;
    let eff_shape = efficiency_shape(k, &law, b)?;
    let eff_loc = efficiency_location(k, &law, b)?;
    let out = json!({
        "estimator": spec.to_string(),
        "model": format_model(&gen),
        "b": num(b),
        "param": est.param().map(num),
        "efficiency_shape": num(eff_shape),
        "efficiency_location": num(eff_loc),
        "constants": constants_json(k, &law, b)?,
    });
    let mut o = Outputs::new(&ctx.out)?;
    o.write_json("tune.json", &out)?;
    o.finish("tune", &echo(&kv), ctx.seed.unwrap_or(0), ctx.threads)?;
    match est.param() {
        Some(v) => println!(
            "{}: {}={} efficiency {:.6}",
            spec,
            spec.kind.tuning_key().unwrap_or("param"),
            fmt_num(v),
            eff_shape
        ),
        None => println!("{}: efficiency {:.6}", spec, eff_shape),
    }
    Ok(Status::Done)
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| anyhow!("key `{key}`: `{s}` is not a number"))
        })
        .collect()
}

fn grid(kv: &KeyValues) -> Result<Vec<f64>> {
    if let Some(g) = kv.get("grid") {
        let v = parse_list("grid", g)?;
        if v.is_empty() {
            bail!("key `grid` is empty");
        }
        return Ok(v);
    }
    let from = kv.f64("from")?;
    let to = kv.f64("to")?;
    let steps = kv.usize("steps")?;
    if steps == 0 {
        bail!("key `steps` must be at least 1");
    }
    if steps == 1 {
        return Ok(vec![from]);
    }
    Ok((0..steps)
        .map(|i| from + (to - from) * i as f64 / (steps - 1) as f64)
        .collect())
}

pub fn eff_sweep(ctx: &Context, kv: KeyValues) -> Result<Status> {
    check_keys(
        &kv,
        &[
            &["estimator", "grid", "from", "to", "steps", "b", "measure"],
            MODEL_KEYS,
        ],
    )?;
    let kind = match kv.require("estimator")? {
        "sq" => TunableKind::Sq,
        "rocke" => TunableKind::Rocke,
        "shr" => TunableKind::Shr,
        other => {
            bail!("key `estimator`: `{other}` has no tuning parameter (expected sq, rocke or shr)")
        }
    };
    let location = match kv.get("measure").unwrap_or("shape") {
        "shape" => false,
        "location" => true,
        other => bail!("key `measure`: `{other}` (expected shape or location)"),
    };
    let gen = model(&kv, None)?;
    let b = b_mode(&kv)?.asymptotic();
    let params = grid(&kv)?;
    let law = DistanceLaw::new(gen)?;
    let rows: Vec<Vec<String>> = map_slice(&params, Execution::Parallel, |&v| {
        let r = kind
            .kernel(&gen, v)
            .map_err(anyhow::Error::from)
            .and_then(|k| {
                Ok(if location {
                    efficiency_location(&k, &law, b)?
                } else {
                    efficiency_shape(&k, &law, b)?
                })
            });
        match r {
            Ok(e) => vec![fmt_num(v), fmt_num(e), String::new()],
            Err(e) => vec![fmt_num(v), String::new(), format!("{e}")],
        }
    });
    let mut o = Outputs::new(&ctx.out)?;
    o.write(
        "eff_sweep.csv",
        &csv_text(&["parameter", "efficiency", "error"], &rows)?,
    )?;
    o.finish("eff-sweep", &echo(&kv), ctx.seed.unwrap_or(0), ctx.threads)?;
    println!("{} grid points written", rows.len());
    Ok(Status::Done)
}

fn opt_num(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

pub fn simulate(ctx: &Context, kv: KeyValues) -> Result<Status> {
    let mut cfg = ExperimentConfig::from_kv(&kv, &["experiment", "measure", "sizes"])?;
    if let Some(s) = ctx.seed {
        cfg.seed = s;
    }
    cfg.exec = Execution::Parallel;
    let experiment = kv.require("experiment")?;
    let (header, rows, results): (Vec<&str>, Vec<Vec<String>>, Value) = match experiment {
        "efficiency" => {
            let measure = Measure::parse(kv.get("measure").unwrap_or("shape"))?;
            let r = finite_sample_efficiency(&cfg, measure)?;
            let rows = r
                .iter()
                .map(|r| {
                    vec![
                        r.estimator.to_string(),
                        opt_num(r.tuning.param),
                        opt_num(r.tuning.asymptotic_efficiency),
                        fmt_num(r.efficiency),
                        fmt_num(r.mean_divergence),
                        fmt_num(r.mle_mean_divergence),
                        r.failures.to_string(),
                    ]
                })
                .collect();
            (
                vec!["estimator", "param", "asymptotic_efficiency", "efficiency", "mean_divergence", "mle_mean_divergence", "failures"],
                rows,
                to_value(&r)?,
            )
        }
        "robustness" => {
            let r = robustness_curve(&cfg)?;
            let rows = r
                .iter()
                .map(|r| vec![r.estimator.to_string(), fmt_num(r.k), fmt_num(r.mean_divergence), r.failures.to_string()])
                .collect();
            (vec!["estimator", "k", "mean_divergence", "failures"], rows, to_value(&r)?)
        }
        "stability" => {
            let r = stability_experiment(&cfg, None)?;
            let rows = r
                .iter()
                .map(|r| {
                    vec![
                        r.estimator.to_string(),
                        fmt_num(r.k),
                        fmt_num(r.mean_divergence),
                        fmt_num(r.raw_mean_divergence),
                        r.failures.to_string(),
                    ]
                })
                .collect();
            (vec!["estimator", "k", "mean_divergence", "raw_mean_divergence", "failures"], rows, to_value(&r)?)
        }
        "iterations" => {
            let r = iteration_study(&cfg, None)?;
            let rows = r
                .iter()
                .map(|r| {
                    vec![
                        r.estimator.to_string(),
                        fmt_num(r.k),
                        fmt_num(r.median_iterations),
                        r.nonconverged.to_string(),
                        r.failures.to_string(),
                    ]
                })
                .collect();
            (vec!["estimator", "k", "median_iterations", "nonconverged", "failures"], rows, to_value(&r)?)
        }
        "consistency" => {
            let sizes: Vec<usize> = kv
                .require("sizes")?
                .split(',')
                .map(str::trim)
                .map(|s| s.parse::<usize>().map_err(|_| anyhow!("key `sizes`: `{s}` is not a sample size")))
                .collect::<Result<_>>()?;
            let r = consistency_curve(&cfg, &sizes)?;
            let ests = cfg.resolve()?;
            let mut rows = Vec::new();
            for (n, means) in &r {
                for (e, m) in ests.iter().zip(means) {
                    rows.push(vec![
                        e.kind().to_string(),
                        n.to_string(),
                        fmt_num(m.mean),
                        m.used.to_string(),
                        m.failures.to_string(),
                    ]);
                }
            }
            let results = Value::Array(
                r.iter()
                    .map(|(n, m)| Ok(json!({"n": n, "estimators": to_value(m)?})))
                    .collect::<Result<_>>()?,
            );
            (vec!["estimator", "n", "mean_divergence", "used", "failures"], rows, results)
        }
        other => bail!(
            "key `experiment`: `{other}` (expected efficiency, robustness, stability, iterations or consistency)"
        ),
    };
    let tunings: Vec<Value> = cfg
        .resolve()?
        .iter()
        .map(|e| Ok(json!({"spec": e.spec().to_string(), "tuning": tuning_json(e)?})))
        .collect::<Result<_>>()?;
    let summary = json!({
        "experiment": experiment,
        "config": echo(&kv),
        "model": format_model(&cfg.model),
        "n": cfg.n,
        "epsilon": num(cfg.epsilon),
        "trials": cfg.trials,
        "seed": cfg.seed,
        "b": num(cfg.b_value()?),
        "estimators": tunings,
        "results": results,
        "version": env!("CARGO_PKG_VERSION"),
    });
    let mut o = Outputs::new(&ctx.out)?;
    o.write("simulate.csv", &csv_text(&header, &rows)?)?;
    o.write_json("summary.json", &summary)?;
    o.finish("simulate", &echo(&kv), cfg.seed, ctx.threads)?;
    println!("{experiment}: {} rows", rows.len());
    Ok(Status::Done)
}

fn range(kv: &KeyValues, key: &str, days: usize) -> Result<std::ops::Range<usize>> {
    let Some(v) = kv.get(key) else {
        return Ok(0..days);
    };
    let (a, b) = v
        .split_once(':')
        .ok_or_else(|| anyhow!("key `{key}`: expected start:end, found `{v}`"))?;
    let a: usize = a
        .trim()
        .parse()
        .map_err(|_| anyhow!("key `{key}`: bad start `{a}`"))?;
    let b: usize = b
        .trim()
        .parse()
        .map_err(|_| anyhow!("key `{key}`: bad end `{b}`"))?;
    if a >= b {
        bail!("key `{key}`: start {a} must be below end {b}");
    }
    Ok(a..b)
}

pub fn portfolio(ctx: &Context, returns: &Path, kv: KeyValues) -> Result<Status> {
    check_keys(
        &kv,
        &[
            ESTIMATOR_KEYS,
            MODEL_KEYS,
            &[
                "b", "max_iter", "tol", "mu_p", "window", "holdout", "fit_vg",
            ],
        ],
    )?;
    let series = io::read_returns(returns)?;
    let p = series.assets();
    let spec = estimator_spec(&kv)?;
    let mu_p = kv.f64("mu_p")?;
    let window = range(&kv, "window", series.days())?;
    let holdout = range(&kv, "holdout", series.days())?;
    let mode = b_mode(&kv)?;
    let b = mode.resolve(window.len(), p)?;
    let fit_vg = match kv.get("fit_vg").unwrap_or("false") {
        "true" => true,
        "false" => false,
        other => bail!("key `fit_vg`: `{other}` (expected true or false)"),
    };
    let mut vg = Value::Null;
    let gen = if fit_vg {
        if kv.get("family").is_some() {
            bail!("give either `family` or `fit_vg=true`, not both");
        }
        // plug-in location and shape from the Gaussian-tuned estimator
        let g0 = GeneratingFunction::gaussian(p);
        let e0 = Estimator::resolve(spec, g0, mode.asymptotic())?;
        let data = series.returns.rows(window.start, window.len()).into_owned();
        let f0 = e0.fit(&data, b, &fit_options(&kv, &g0)?)?;
        let v = fit_vg_params(&data, &f0.mu_hat, &f0.omega_hat)?;
        vg = json!({
            "lambda": num(v.lambda),
            "psi": num(v.psi),
            "log_likelihood": num(v.log_likelihood),
            "method": "profile likelihood of the distance law over a grid, refined coordinate-wise",
        });
        GeneratingFunction::new(
            Family::VarianceGamma {
                lambda: v.lambda,
                psi: v.psi,
            },
            p,
        )?
    } else {
        model(&kv, Some(p))?
    };
    let est = Estimator::resolve(spec, gen, mode.asymptotic())?;
    let rep = backtest(
        &series,
        window,
        holdout,
        &est,
        b,
        mu_p,
        &fit_options(&kv, &gen)?,
    )?;
    let mut out = to_value(&rep)?;
    if let Value::Object(m) = &mut out {
        m.insert("model".into(), Value::String(format_model(&gen)));
        m.insert("assets".into(), json!(series.assets));
        m.insert("tuning".into(), tuning_json(&est)?);
        m.insert("vg_fit".into(), vg);
    }
    let mut o = Outputs::new(&ctx.out)?;
    o.write_json("portfolio.json", &out)?;
    o.finish("portfolio", &echo(&kv), ctx.seed.unwrap_or(0), ctx.threads)?;
    println!(
        "{}: holdout variance {}",
        spec,
        fmt_num(rep.holdout_variance)
    );
    Ok(Status::Done)
}

pub fn influence(ctx: &Context, kv: KeyValues) -> Result<Status> {
    check_keys(
        &kv,
        &[ESTIMATOR_KEYS, MODEL_KEYS, &["b", "d_max", "points", "z"]],
    )?;
    let spec = estimator_spec(&kv)?;
    let gen = model(&kv, None)?;
    let p = gen.p();
    let b = b_mode(&kv)?.asymptotic();
    let est = Estimator::resolve(spec, gen, b)?;
    let k = *kernel_of(&est)?;
    let law = DistanceLaw::new(gen)?;
    let c = constants(&k, &law, b)?;
    let d_max = match kv.get("d_max") {
        Some(_) => kv.f64("d_max")?,
        None => 2.0 * law.quantile(0.999)?,
    };
    let points = kv.usize_or("points", 201)?;
    if !(d_max > 0.0) || points < 2 {
        bail!("need d_max > 0 and at least 2 points");
    }
    let mut rows = Vec::with_capacity(points);
    let mut ges_loc = 0.0f64;
    let mut ges_scatter = 0.0f64;
    for i in 0..points {
        let d = d_max * i as f64 / (points - 1) as f64;
        let t = d / c.sigma;
        let a = alpha_sigma(&k, &c, d);
        let radial = (k.rho(t) - c.b) / c.lambda2;
        // |IF| of the location along any direction at this distance
        let loc = k.weight(t) * d.sqrt() / c.omega2;
        ges_loc = ges_loc.max(loc.abs());
        ges_scatter = ges_scatter.max(a.abs());
        rows.push(vec![fmt_num(d), fmt_num(a), fmt_num(radial), fmt_num(loc)]);
    }
    let mut out = json!({
        "estimator": spec.to_string(),
        "model": format_model(&gen),
        "b": num(b),
        "param": est.param().map(num),
        "constants": constants_json(&k, &law, b)?,
        "d_max": num(d_max),
        "sup_location": num(ges_loc),
        "sup_alpha_sigma": num(ges_scatter),
    });
    if let Some(z) = kv.get("z") {
        let z = parse_list("z", z)?;
        if z.len() != p {
            bail!("key `z`: {} coordinates for dimension {p}", z.len());
        }
        let z = Vector::from_vec(z);
        let mu = Vector::zeros(p);
        let sigma = Matrix::identity(p, p);
        let il = influence_location(&k, &c, &mu, &sigma, &z)?;
        let is = influence_scatter(&k, &c, &mu, &sigma, &z)?;
        out["at_z"] = json!({
            "z": nums(z.iter().copied()),
            "location": nums(il.iter().copied()),
            "scatter": matrix_rows(&is),
        });
    }
    let mut o = Outputs::new(&ctx.out)?;
    o.write(
        "influence.csv",
        &csv_text(
            &["d", "alpha_sigma", "scatter_radial", "location_norm"],
            &rows,
        )?,
    )?;
    o.write_json("influence.json", &out)?;
    o.finish("influence", &echo(&kv), ctx.seed.unwrap_or(0), ctx.threads)?;
    println!("{}: sup |IF location| {}", spec, fmt_num(ges_loc));
    Ok(Status::Done)
}
