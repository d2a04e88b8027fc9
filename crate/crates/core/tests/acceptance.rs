//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fail. Pass criterion numbers as arguments to run a subset.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use robust_scatter::asymptotics::{
    constants, efficiency_shape, influence_location, max_efficiency, TunableKind,
};
use robust_scatter::elliptical::{DistanceLaw, EllipticalModel, Family, GeneratingFunction};
use robust_scatter::estimator::Estimator;
use robust_scatter::kernels::{rejection_points, sq_weight_tilde, EstimatorKernel};
use robust_scatter::linalg::{sym_eigenvalues, to_shape, Matrix, Vector};
use robust_scatter::parallel::{map_indexed, Execution};
use robust_scatter::portfolio::{backtest, min_variance_weights, SyntheticMarket};
use robust_scatter::quadrature::{integrate_pieces, Tolerance};
use robust_scatter::roots::{bisect, geometric_grid, scan_sign_changes};
use robust_scatter::simulation::{
    consistency_curve, contaminate, iteration_study, stability_experiment, ExperimentConfig,
};
use robust_scatter::solver::{
    b_max_breakdown, breakdown_point, fit_mm_shr, fit_s, initial_estimate, max_breakdown_point,
    FitOptions,
};
use robust_scatter::spec::{BMode, EstimatorKind, EstimatorSpec};
use robust_scatter::special::ln_bessel_k;
use statrs::function::beta::ln_beta;
use statrs::function::gamma::ln_gamma;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gen(f: Family, p: usize) -> GeneratingFunction {
    GeneratingFunction::new(f, p).expect("valid family")
}

fn spec(s: &str) -> EstimatorSpec {
    EstimatorSpec::parse(s).expect("valid estimator spec")
}

/// Every family with representative parameters.
fn families(p: usize) -> Vec<(&'static str, Family)> {
    let pf = p as f64;
    vec![
        (
            "kotz",
            Family::Kotz {
                n: 0.5,
                r: 0.7,
                s: 1.3,
            },
        ),
        ("gaussian", Family::Gaussian),
        ("pearson2", Family::PearsonII { m: 1.5 }),
        (
            "pearson7",
            Family::PearsonVII {
                n: pf / 2.0 + 1.5,
                s: 2.0,
            },
        ),
        ("t", Family::T { nu: 4.0 }),
        ("cauchy", Family::Cauchy),
        (
            "genhyp",
            Family::GeneralizedHyperbolic {
                lambda: -0.8,
                chi: 1.2,
                psi: 0.7,
            },
        ),
        (
            "vg",
            Family::VarianceGamma {
                lambda: 1.5,
                psi: 2.0,
            },
        ),
        ("laplace", Family::Laplace),
        (
            "mvhyp",
            Family::MultivariateHyperbolic { chi: 1.0, psi: 1.0 },
        ),
        (
            "hypmarg",
            Family::HyperbolicUnivariateMarginals { chi: 1.0, psi: 2.0 },
        ),
        ("nig", Family::NormalInverseGaussian { chi: 1.0, psi: 1.0 }),
    ]
}

/// Five-point central difference.
fn derivative<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    (-f(x + 2.0 * h) + 8.0 * f(x + h) - 8.0 * f(x - h) + f(x - 2.0 * h)) / (12.0 * h)
}

fn rel_err(approx: f64, exact: f64) -> f64 {
    if exact == 0.0 {
        approx.abs()
    } else {
        ((approx - exact) / exact).abs()
    }
}

// ---------------------------------------------------------------------------

fn c1() -> Outcome {
    let law = DistanceLaw::new(GeneratingFunction::gaussian(10)).map_err(|e| e.to_string())?;
    let k = EstimatorKernel::rocke(10, 1.0).map_err(|e| e.to_string())?;
    let eff = efficiency_shape(&k, &law, 0.5).map_err(|e| e.to_string())?;
    check(
        (eff - 0.77).abs() <= 0.02,
        format!("Rocke gamma=1 efficiency {eff:.4} (target 0.77 +/- 0.02)"),
    )
}

fn c2() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for s in [0.5, 1.0, 2.0] {
        let g = gen(Family::Kotz { n: 0.0, r: 0.5, s }, 5);
        let law = DistanceLaw::new(g).map_err(|e| e.to_string())?;
        let k = EstimatorKernel::sq(g, 1.0).map_err(|e| e.to_string())?;
        // b is taken as E[rho] for the q = 1 kernel
        let eff = efficiency_shape(&k, &law, 0.5).map_err(|e| e.to_string())?;
        ok &= (eff - 1.0).abs() <= 1e-3;
        parts.push(format!("s={s}: {eff:.6}"));
    }
    check(
        ok,
        format!("Kotz N=0 r=0.5 q=1 efficiencies {}", parts.join(", ")),
    )
}

fn c3() -> Outcome {
    let b = b_max_breakdown(100, 20).map_err(|e| e.to_string())?;
    let bp = breakdown_point(100, b);
    let mbp = max_breakdown_point(100, 20);
    check(
        (b - 0.395).abs() < 1e-15 && bp == 0.40 && mbp == 0.40,
        format!("b = {b}, breakdown point = {bp}, maximum = {mbp}"),
    )
}

fn c4() -> Outcome {
    let g = GeneratingFunction::gaussian(5);
    let rp = rejection_points(&g, 0.5).map_err(|e| e.to_string())?;
    let grid = geometric_grid(1e-3, 1e3, 4000);
    let brackets = scan_sign_changes(|t| sq_weight_tilde(&g, 0.5, t), &grid);
    let roots: Vec<f64> = brackets
        .iter()
        .filter_map(|&(lo, hi)| bisect(|t| sq_weight_tilde(&g, 0.5, t), lo, hi, 1e-14).ok())
        .collect();
    let ok = (rp.a - 1.0).abs() < 1e-10
        && (rp.c - 9.0).abs() < 1e-10
        && roots.len() == 2
        && (roots[0] - rp.a).abs() < 1e-10
        && (roots[1] - rp.c).abs() < 1e-10;
    check(
        ok,
        format!(
            "closed form (a, c) = ({}, {}); bracketed roots {roots:?}",
            rp.a, rp.c
        ),
    )
}

fn c5() -> Outcome {
    let g = gen(Family::Cauchy, 20);
    let law = DistanceLaw::new(g).map_err(|e| e.to_string())?;
    let b = 0.5;
    let sq = max_efficiency(TunableKind::Sq, &law, b).map_err(|e| e.to_string())?;
    let shr = max_efficiency(TunableKind::Shr, &law, b).map_err(|e| e.to_string())?;
    let rocke = max_efficiency(TunableKind::Rocke, &law, b).map_err(|e| e.to_string())?;
    check(
        sq.efficiency > shr.efficiency && sq.efficiency > rocke.efficiency,
        format!(
            "Cauchy p=20 maxima: S-q {:.4} (q={:.4}), MM-SHR {:.4} (c={:.3}), S-Rocke {:.4} (gamma={:.3})",
            sq.efficiency, sq.param, shr.efficiency, shr.param, rocke.efficiency, rocke.param
        ),
    )
}

/// Estimators tuned as in the robustness comparisons: 90% efficiency at
/// p = 20 (S-Rocke at its maximum when 90% is out of reach), and every
/// estimator matched to the S-Rocke maximum at p = 5.
fn matched_estimators(p: usize) -> Result<Vec<EstimatorSpec>, String> {
    let g = GeneratingFunction::gaussian(p);
    let law = DistanceLaw::new(g).map_err(|e| e.to_string())?;
    let b = BMode::MaxBreakdown.asymptotic();
    let rocke_max = max_efficiency(TunableKind::Rocke, &law, b).map_err(|e| e.to_string())?;
    let target = if p >= 20 {
        0.9
    } else {
        rocke_max.efficiency - 1e-6
    };
    let rocke = if rocke_max.efficiency >= target + 1e-4 {
        format!("estimator=rocke eff={target}")
    } else {
        "estimator=rocke eff=max".to_string()
    };
    Ok(vec![
        spec(&format!("estimator=sq eff={target}")),
        spec(&rocke),
        spec(&format!("estimator=shr eff={target}")),
    ])
}

fn experiment(
    p: usize,
    n: usize,
    epsilon: f64,
    trials: usize,
    seed: u64,
) -> Result<ExperimentConfig, String> {
    let mut cfg = ExperimentConfig::new(GeneratingFunction::gaussian(p), n, matched_estimators(p)?);
    cfg.epsilon = epsilon;
    cfg.trials = trials;
    cfg.seed = seed;
    cfg.b = BMode::MaxBreakdown;
    cfg.tol = 1e-10;
    cfg.exec = Execution::Parallel;
    Ok(cfg)
}

fn c6() -> Outcome {
    let cfg = experiment(20, 2000, 0.0, 50, 6)?;
    let rows = iteration_study(&cfg, None).map_err(|e| e.to_string())?;
    let ok = rows
        .iter()
        .all(|r| (r.median_iterations - 7.0).abs() <= 5.0 && r.failures == 0);
    let detail = rows
        .iter()
        .map(|r| {
            format!(
                "{} {} (nonconverged {})",
                r.estimator, r.median_iterations, r.nonconverged
            )
        })
        .collect::<Vec<_>>()
        .join(", ");
    check(ok, format!("median iterations p=20 n=2000: {detail}"))
}

fn c7() -> Outcome {
    let mut ok = true;
    let mut cells = Vec::new();
    for p in [5usize, 20] {
        for n in [100 * p, 5 * p] {
            for eps in [0.0, 0.1] {
                let cfg = experiment(p, n, eps, 50, 7)?;
                let rows = stability_experiment(&cfg, None).map_err(|e| e.to_string())?;
                let get = |k: EstimatorKind| rows.iter().find(|r| r.estimator == k).expect("row");
                let sq = get(EstimatorKind::Sq);
                let rocke = get(EstimatorKind::Rocke);
                let shr = get(EstimatorKind::Shr);
                let mut cell_ok = sq.mean_divergence <= rocke.mean_divergence
                    && sq.mean_divergence <= shr.mean_divergence;
                if n == 100 * p && eps == 0.0 {
                    cell_ok &= sq.mean_divergence == 0.0;
                }
                ok &= cell_ok;
                cells.push(format!(
                    "[p={p} n={n} eps={eps}: S-q {:.1e} S-Rocke {:.1e} MM-SHR {:.1e}{}]",
                    sq.raw_mean_divergence,
                    rocke.raw_mean_divergence,
                    shr.raw_mean_divergence,
                    if cell_ok { "" } else { " x" }
                ));
            }
        }
    }
    check(ok, format!("mean paired divergence {}", cells.join(" ")))
}

fn c8() -> Outcome {
    let mut worst_w = 0.0f64;
    let mut worst_phi = 0.0f64;
    let mut where_w = String::new();
    let mut where_phi = String::new();

    let mut kernels: Vec<(String, EstimatorKernel)> = vec![
        ("rocke 0.5".into(), EstimatorKernel::rocke(5, 0.5).unwrap()),
        ("rocke 1".into(), EstimatorKernel::rocke(5, 1.0).unwrap()),
        ("bisquare".into(), EstimatorKernel::bisquare(5)),
        ("shr 3".into(), EstimatorKernel::shr(5, 3.0).unwrap()),
    ];
    for (name, f) in families(5) {
        let g = gen(f, 5);
        kernels.push((format!("mle {name}"), EstimatorKernel::mle(g)));
        for q in [1.0, 0.9, 0.5] {
            if let Ok(k) = EstimatorKernel::sq(g, q) {
                kernels.push((format!("sq {name} q={q}"), k));
            }
        }
    }
    for (name, k) in &kernels {
        let bps = k.breakpoints();
        let hi = if k.c().is_finite() { k.c() * 1.5 } else { 30.0 };
        let hi = match k.generating_function().and_then(|g| g.support_upper()) {
            Some(u) => hi.min(0.95 * u),
            None => hi,
        };
        for t in geometric_grid(1e-2 * hi, hi, 60) {
            let h = 1e-3 * t;
            if bps.iter().any(|b| (t - b).abs() < 5.0 * h) {
                continue;
            }
            let fd = derivative(|x| k.rho(x), t, h);
            let w = k.weight(t);
            let err = if w == 0.0 && fd.abs() < 1e-12 {
                0.0
            } else {
                rel_err(fd, w)
            };
            if err > worst_w {
                worst_w = err;
                where_w = format!("{name} t={t:.4}");
            }
        }
    }
    for p in [3usize, 5, 20] {
        for (name, f) in families(p) {
            let g = gen(f, p);
            let hi = g.support_upper().map(|u| 0.9 * u).unwrap_or(20.0);
            for d in geometric_grid(1e-2 * hi, hi, 25) {
                let h = 1e-3 * d;
                let (_, d1, d2) = g.eval(d);
                let e1 = rel_err(derivative(|x| g.eval(x).0, d, h), d1);
                let e2 = rel_err(derivative(|x| g.eval(x).1, d, h), d2);
                for e in [e1, e2] {
                    if e > worst_phi {
                        worst_phi = e;
                        where_phi = format!("{name} p={p} d={d:.4}");
                    }
                }
            }
        }
    }
    check(
        worst_w < 1e-5 && worst_phi < 1e-5,
        format!(
            "{} kernels: max rel err of w vs rho' {worst_w:.2e} ({where_w}); phi', phi'' {worst_phi:.2e} ({where_phi})",
            kernels.len()
        ),
    )
}

/// `ln of the integral of d^{p/2-1} phi(d)` in closed form.
fn ln_radial_integral(f: Family, p: usize) -> f64 {
    let g = gen(f, p);
    let hp = p as f64 / 2.0;
    match g.canonical() {
        robust_scatter::elliptical::Canonical::Kotz { n, r, s } => {
            let a = (n + hp) / s;
            ln_gamma(a) - s.ln() - a * r.ln()
        }
        robust_scatter::elliptical::Canonical::PearsonII { m } => ln_beta(hp, m + 1.0),
        robust_scatter::elliptical::Canonical::PearsonVII { n, s } => {
            hp * s.ln() + ln_beta(hp, n - hp)
        }
        robust_scatter::elliptical::Canonical::GenHyperbolic { lambda, chi, psi } => {
            let nu = lambda - hp;
            let head = ln_gamma(hp) + hp * std::f64::consts::LN_2 + nu * psi.ln();
            if chi > 0.0 {
                head + 0.5 * lambda * (chi / psi).ln() + ln_bessel_k(lambda, (chi * psi).sqrt())
            } else {
                head + ln_gamma(lambda) + (lambda - 1.0) * std::f64::consts::LN_2
                    - lambda * psi.ln()
            }
        }
    }
}

fn c9() -> Outcome {
    let mut worst_mass = 0.0f64;
    let mut worst_beta = 0.0f64;
    let mut worst_rt = 0.0f64;
    let mut where_ = String::new();
    let tol = Tolerance {
        abs: 1e-14,
        rel: 1e-13,
        max_segments: 20000,
    };
    for p in [3usize, 5, 20] {
        for (name, f) in families(p) {
            let g = gen(f, p);
            let law = DistanceLaw::new(g).map_err(|e| format!("{name} p={p}: {e}"))?;
            // integrate the library density over d = exp(y)
            let upper_y = g.support_upper().map(|u| u.ln()).unwrap_or(200.0);
            let mut breaks: Vec<f64> = (0..=80)
                .map(|i| -200.0 + i as f64 * 5.0)
                .filter(|y| *y < upper_y)
                .collect();
            breaks.push(upper_y);
            let mass = integrate_pieces(
                &|y: f64| {
                    let d = y.exp();
                    let v = law.density(d) * d;
                    if v.is_finite() {
                        v
                    } else {
                        0.0
                    }
                },
                &breaks,
                tol,
            )
            .map_err(|e| format!("{name} p={p}: {e}"))?
            .value;
            let e_mass = (mass - 1.0).abs();
            let e_beta = (law.ln_beta() + ln_radial_integral(f, p)).abs();
            let mut e_rt = 0.0f64;
            for u in [1e-3, 0.01, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99, 0.999] {
                let x = law.quantile(u).map_err(|e| e.to_string())?;
                e_rt = e_rt.max((law.cdf(x) - u).abs());
            }
            if e_mass.max(e_beta).max(e_rt) > worst_mass.max(worst_beta).max(worst_rt) {
                where_ = format!("{name} p={p}");
            }
            worst_mass = worst_mass.max(e_mass);
            worst_beta = worst_beta.max(e_beta);
            worst_rt = worst_rt.max(e_rt);
        }
    }
    check(
        worst_mass < 1e-8 && worst_beta < 1e-8 && worst_rt < 1e-8,
        format!(
            "max |mass - 1| {worst_mass:.1e}, normalizer vs closed form {worst_beta:.1e}, \
             cdf(quantile(u)) - u {worst_rt:.1e} (worst at {where_})"
        ),
    )
}

fn random_affine(p: usize, rng: &mut ChaCha8Rng) -> (Matrix, Vector) {
    loop {
        let a = Matrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let sv = a.clone().singular_values();
        if sv.min() > 0.2 {
            let shift = Vector::from_fn(p, |_, _| 10.0 * rng.sample::<f64, _>(StandardNormal));
            return (a, shift);
        }
    }
}

fn c10() -> Outcome {
    let p = 4;
    let n = 200;
    let g = GeneratingFunction::gaussian(p);
    let b = b_max_breakdown(n, p).map_err(|e| e.to_string())?;
    let opts = FitOptions::default();
    let sq = EstimatorKernel::sq(g, 0.9).map_err(|e| e.to_string())?;
    let rocke = EstimatorKernel::rocke(p, 0.5).map_err(|e| e.to_string())?;
    let bisq = EstimatorKernel::bisquare(p);
    let mut worst = 0.0f64;
    for seed in 0..10u64 {
        let x = EllipticalModel::standard(gen(Family::T { nu: 5.0 }, p))
            .sample(n, 100 + seed)
            .map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, shift) = random_affine(p, &mut rng);
        let y = Matrix::from_fn(n, p, |i, j| (a.row(j) * x.row(i).transpose())[0] + shift[j]);
        let start_x = initial_estimate(&x).map_err(|e| e.to_string())?;
        let start_y = start_x.transformed(&a, &shift).map_err(|e| e.to_string())?;
        let mut fits = Vec::new();
        for k in [&sq, &rocke] {
            let fx = fit_s(&x, k, b, &start_x, &opts).map_err(|e| e.to_string())?;
            let fy = fit_s(&y, k, b, &start_y, &opts).map_err(|e| e.to_string())?;
            fits.push((fx, fy));
        }
        let sx = fit_s(&x, &bisq, b, &start_x, &opts).map_err(|e| e.to_string())?;
        let sy = fit_s(&y, &bisq, b, &start_y, &opts).map_err(|e| e.to_string())?;
        let fx = fit_mm_shr(&x, 3.0, &sx, &opts).map_err(|e| e.to_string())?;
        let fy = fit_mm_shr(&y, 3.0, &sy, &opts).map_err(|e| e.to_string())?;
        fits.push((fx, fy));
        for (fx, fy) in fits {
            let mu = &a * &fx.mu_hat + &shift;
            let sigma = &a * &fx.sigma_hat * a.transpose();
            let omega = to_shape(&sigma).map_err(|e| e.to_string())?;
            let e_mu = (&fy.mu_hat - &mu).norm() / (1.0 + mu.norm());
            let e_sigma = (&fy.sigma_hat - &sigma).norm() / sigma.norm();
            let e_omega = (&fy.omega_hat - &omega).norm() / omega.norm();
            worst = worst.max(e_mu).max(e_sigma).max(e_omega);
        }
    }
    check(
        worst < 1e-6,
        format!("max relative deviation over 10 seeds x 3 estimators: {worst:.2e}"),
    )
}

fn c11() -> Outcome {
    let p = 5;
    let mut cfg = ExperimentConfig::new(
        GeneratingFunction::gaussian(p),
        10 * p,
        vec![spec("estimator=sq q=0.9")],
    );
    cfg.trials = 50;
    cfg.seed = 11;
    cfg.exec = Execution::Parallel;
    let curve = consistency_curve(&cfg, &[10 * p, 40 * p, 160 * p]).map_err(|e| e.to_string())?;
    let means: Vec<f64> = curve.iter().map(|(_, m)| m[0].mean).collect();
    let ok = means.windows(2).all(|w| w[1] < w[0]);
    check(
        ok,
        format!("mean shape divergence at n = 50, 200, 800: {means:?}"),
    )
}

fn c12() -> Outcome {
    let p = 3;
    let n = 10_000;
    let trials = 4000;
    let g = GeneratingFunction::gaussian(p);
    let b = b_max_breakdown(n, p).map_err(|e| e.to_string())?;
    let k = EstimatorKernel::sq(g, 0.9).map_err(|e| e.to_string())?;
    let law = DistanceLaw::new(g).map_err(|e| e.to_string())?;
    let zeta1 = constants(&k, &law, b).map_err(|e| e.to_string())?.zeta1;
    let model = EllipticalModel::standard(g);
    let opts = FitOptions::default();
    let rows: Vec<Option<Vec<f64>>> = map_indexed(trials, Execution::Parallel, |t| {
        let x = model.sample(n, 12_000 + t as u64).ok()?;
        let start = initial_estimate(&x).ok()?;
        let f = fit_s(&x, &k, b, &start, &opts).ok()?;
        let sn = (n as f64).sqrt();
        Some(
            (0..p * p)
                .map(|i| {
                    sn * (f.omega_hat[(i % p, i / p)] - if i % p == i / p { 1.0 } else { 0.0 })
                })
                .collect(),
        )
    });
    let rows: Vec<Vec<f64>> = rows.into_iter().flatten().collect();
    if rows.len() < trials * 99 / 100 {
        return Err(format!("only {} of {trials} fits succeeded", rows.len()));
    }
    let m = rows.len() as f64;
    let q = p * p;
    let mean: Vec<f64> = (0..q)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / m)
        .collect();
    let mut worst_rel = 0.0f64;
    let mut worst_zero = 0.0f64;
    for u in 0..q {
        for v in 0..q {
            let emp = rows
                .iter()
                .map(|r| (r[u] - mean[u]) * (r[v] - mean[v]))
                .sum::<f64>()
                / (m - 1.0);
            let (i, j, kk, l) = (u % p, u / p, v % p, v / p);
            let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
            let th = zeta1 * (delta(i, kk) * delta(j, l) + delta(i, l) * delta(j, kk))
                - 2.0 * zeta1 / p as f64 * delta(i, j) * delta(kk, l);
            if th.abs() > 1e-12 {
                worst_rel = worst_rel.max(((emp - th) / th).abs());
            } else {
                worst_zero = worst_zero.max((emp / zeta1).abs());
            }
        }
    }
    check(
        worst_rel <= 0.10 && worst_zero <= 0.10,
        format!(
            "{} trials, zeta1 = {zeta1:.5}: max relative error on nonzero entries {worst_rel:.3}, \
             max |entry|/zeta1 on zero entries {worst_zero:.3}",
            rows.len()
        ),
    )
}

fn c13() -> Outcome {
    let p = 3;
    let draws = 400_000;
    let mut parts = Vec::new();
    let mut ok = true;
    let cases: Vec<(&str, GeneratingFunction, EstimatorKernel)> = {
        let gs = GeneratingFunction::gaussian(p);
        let gt = gen(Family::T { nu: 5.0 }, p);
        vec![
            ("sq gaussian", gs, EstimatorKernel::sq(gs, 0.9).unwrap()),
            ("sq t5", gt, EstimatorKernel::sq(gt, 0.9).unwrap()),
            (
                "rocke gaussian",
                gs,
                EstimatorKernel::rocke(p, 0.8).unwrap(),
            ),
            ("shr gaussian", gs, EstimatorKernel::shr(p, 3.0).unwrap()),
        ]
    };
    for (name, g, k) in cases {
        let law = DistanceLaw::new(g).map_err(|e| e.to_string())?;
        let c = constants(&k, &law, 0.5).map_err(|e| e.to_string())?;
        let x = EllipticalModel::standard(g)
            .sample(draws, 13)
            .map_err(|e| e.to_string())?;
        let mu = Vector::zeros(p);
        let sigma = Matrix::identity(p, p);
        let mut acc = Matrix::zeros(p, p);
        for i in 0..draws {
            let z = x.row(i).transpose();
            let f = influence_location(&k, &c, &mu, &sigma, &z).map_err(|e| e.to_string())?;
            acc += &f * f.transpose();
        }
        acc /= draws as f64;
        let gamma = &sigma * c.location_factor();
        let err = (&acc - &gamma).norm() / gamma.norm();
        ok &= err <= 0.02;
        parts.push(format!("{name} {err:.4}"));
    }
    check(
        ok,
        format!(
            "relative Frobenius error of E[IF IF'] vs location covariance: {}",
            parts.join(", ")
        ),
    )
}

fn c14() -> Outcome {
    let p = 5;
    let n = 500;
    let g = GeneratingFunction::gaussian(p);
    let b = b_max_breakdown(n, p).map_err(|e| e.to_string())?;
    let ests = matched_estimators(p)?
        .into_iter()
        .map(|s| Estimator::resolve(s, g, BMode::MaxBreakdown.asymptotic()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let sample = Estimator::resolve(spec("estimator=sample"), g, b).map_err(|e| e.to_string())?;
    let opts = FitOptions::default()
        .with_reference(&g)
        .map_err(|e| e.to_string())?;
    let mut robust_ok = true;
    let mut sample_broken = true;
    let mut worst = 1.0f64;
    let mut sample_ratio = f64::INFINITY;
    for seed in 0..5u64 {
        let x = EllipticalModel::standard(g)
            .sample(n, 1400 + seed)
            .map_err(|e| e.to_string())?;
        let xc = contaminate(&x, 0.1, 1e9).map_err(|e| e.to_string())?;
        let ratio_range = |e: &Estimator| -> Result<f64, String> {
            let clean = e.fit(&x, b, &opts).map_err(|e| e.to_string())?;
            let dirty = e.fit(&xc, b, &opts).map_err(|e| e.to_string())?;
            let lc = sym_eigenvalues(&clean.sigma_hat);
            let ld = sym_eigenvalues(&dirty.sigma_hat);
            Ok(lc
                .iter()
                .zip(&ld)
                .map(|(c, d)| (d / c).max(c / d))
                .fold(1.0, f64::max))
        };
        for e in &ests {
            let r = ratio_range(e)?;
            worst = worst.max(r);
            robust_ok &= r <= 50.0;
        }
        let r = ratio_range(&sample)?;
        sample_ratio = sample_ratio.min(r);
        sample_broken &= r > 50.0;
    }
    check(
        robust_ok && sample_broken,
        format!(
            "largest eigenvalue ratio for S-q, S-Rocke, MM-SHR {worst:.3}; smallest for the sample estimator {sample_ratio:.3e}"
        ),
    )
}

fn c15() -> Outcome {
    // closed-form weights
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let p = 8;
    let a = Matrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let omega = &a * a.transpose() + Matrix::identity(p, p) * 0.5;
    let mu = Vector::from_fn(p, |_, _| 0.01 * rng.sample::<f64, _>(StandardNormal));
    let mu_p = 0.004;
    let alloc = min_variance_weights(&mu, &omega, mu_p).map_err(|e| e.to_string())?;
    let w = alloc.weights();
    let ones = Vector::from_element(p, 1.0);
    let e_budget = (w.dot(&ones) - 1.0).abs();
    let e_return = (w.dot(&mu) - mu_p).abs();
    let var = (w.transpose() * &omega * &w)[0];
    // random perturbations in the null space of [1, mu]
    let basis = {
        let m = Matrix::from_columns(&[ones.clone(), mu.clone()]);
        let q = m.qr().q();
        (q.column(0).into_owned(), q.column(1).into_owned())
    };
    let mut beaten = 0;
    for _ in 0..10_000 {
        let mut dlt = Vector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
        for bvec in [&basis.0, &basis.1] {
            let c = dlt.dot(bvec);
            dlt -= bvec * c;
        }
        dlt *= 10f64.powf(rng.random_range(-4.0..0.0)) / dlt.norm();
        let v = w.clone() + dlt;
        if (v.transpose() * &omega * &v)[0] < var {
            beaten += 1;
        }
    }
    // contaminated synthetic backtest
    let mut market = SyntheticMarket::new(10, 250);
    market.shock_days = 200..250;
    let mut wins = 0;
    let mut detail = Vec::new();
    let seeds = 5u64;
    for seed in 0..seeds {
        market.seed = seed;
        let series = market.generate().map_err(|e| e.to_string())?;
        let g = gen(
            Family::VarianceGamma {
                lambda: 1.0,
                psi: 2.0,
            },
            10,
        );
        let b = b_max_breakdown(250, 10).map_err(|e| e.to_string())?;
        let sq = Estimator::resolve(spec("estimator=sq q=0.9"), g, b).map_err(|e| e.to_string())?;
        let sample =
            Estimator::resolve(spec("estimator=sample"), g, b).map_err(|e| e.to_string())?;
        let opts = FitOptions::default();
        let rs =
            backtest(&series, 0..250, 0..200, &sq, b, 0.0005, &opts).map_err(|e| e.to_string())?;
        let rm = backtest(&series, 0..250, 0..200, &sample, b, 0.0005, &opts)
            .map_err(|e| e.to_string())?;
        if rs.holdout_variance <= rm.holdout_variance {
            wins += 1;
        }
        detail.push(format!(
            "{:.2e}/{:.2e}",
            rs.holdout_variance, rm.holdout_variance
        ));
    }
    check(
        e_budget < 1e-10 && e_return < 1e-10 && beaten == 0 && wins == seeds,
        format!(
            "budget err {e_budget:.1e}, return err {e_return:.1e}, {beaten} of 10000 perturbations beat the optimum; \
             holdout variance S-q/sample {}",
            detail.join(" ")
        ),
    )
}

fn main() {
    let selected: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let criteria: [(usize, fn() -> Outcome); 15] = [
        (1, c1),
        (2, c2),
        (3, c3),
        (4, c4),
        (5, c5),
        (6, c6),
        (7, c7),
        (8, c8),
        (9, c9),
        (10, c10),
        (11, c11),
        (12, c12),
        (13, c13),
        (14, c14),
        (15, c15),
    ];
    let mut failed = 0;
    for (i, f) in criteria {
        if !selected.is_empty() && !selected.contains(&i) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("criterion {i}: PASS  {d} [{secs:.1}s]"),
            Err(d) => {
                failed += 1;
                println!("criterion {i}: FAIL  {d} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
