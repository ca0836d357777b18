//! End-to-end acceptance checks. Runs as a plain binary so the per-criterion
//! lines are visible in `cargo test` output; exits non-zero when a hard
//! criterion fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::f64::consts::TAU;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::Rng;
use serde_json::{json, Value};

use common::{design_matrix, flat_evidence_oracle, geometric_edges, grid_with, integrate, log_sum_exp, median, priors, series, wls_oracle};
use qpsurrogate::analysis::{analyze, Analysis, AnalysisConfig, JitterSpec};
use qpsurrogate::grid::FrequencyGrid;
use qpsurrogate::linear::*;
use qpsurrogate::par::Executor;
use qpsurrogate::priors::*;
use qpsurrogate::scan::{scan_1d, scan_2d, scan_greedy};
use qpsurrogate::simulate::AliasSetup;
use qpsurrogate::trig::{TrigTable, DEFAULT_RESEED};
use qpsurrogate::{Observation, SeriesKind, TimeSeries};

type Outcome = Result<String, String>;

fn check(cond: bool, pass: String, fail: String) -> Outcome {
    if cond {
        Ok(pass)
    } else {
        Err(fail)
    }
}

fn within(elapsed: Duration, limit: f64, what: &str) -> Result<(), String> {
    let s = elapsed.as_secs_f64();
    if s < limit {
        Ok(())
    } else {
        Err(format!("{what} took {s:.1}s, limit {limit}s"))
    }
}

// 1 ---------------------------------------------------------------------------

fn priors_suite() -> Outcome {
    let t0 = Instant::now();
    let c = priors(1e-3, 1.0);
    let mut worst = 0.0_f64;

    let radial = geometric_edges(0.0, c.a0, c.a_max, 120);
    let angles: Vec<f64> = (0..=16).map(|k| TAU * k as f64 / 16.0).collect();
    let amp = integrate(
        |t| integrate(|a| log_prior_amplitude_pair(a * t.sin(), a * t.cos(), &c).exp() * a, &radial, 10),
        &angles,
        10,
    );
    worst = worst.max((amp - 1.0).abs());

    let pos = geometric_edges(0.0, c.b0, c.b_max, 80);
    let neg: Vec<f64> = pos.iter().rev().map(|v| -v).collect();
    let coef = |b: f64| log_prior_coefficient(b, &c).exp();
    worst = worst.max((integrate(coef, &neg, 12) + integrate(coef, &pos, 12) - 1.0).abs());
    worst = worst.max((integrate(|b| log_prior_coefficient_nonneg(b, &c).exp(), &pos, 12) - 1.0).abs());

    for prior in [
        JitterPrior::ModifiedJeffreys,
        JitterPrior::Cutoff { cutoff: 3.0 },
        JitterPrior::HalfNormal { scale: 2.0 },
    ] {
        let cj = PriorConfig { jitter_prior: prior, ..c };
        let hi = match prior {
            JitterPrior::HalfNormal { scale } => 40.0 * scale,
            JitterPrior::Cutoff { cutoff } => cutoff,
            JitterPrior::ModifiedJeffreys => cj.b_max,
        };
        let total = integrate(|s| log_prior_jitter(s, &cj).exp(), &geometric_edges(0.0, cj.b0, hi, 80), 12);
        worst = worst.max((total - 1.0).abs());
    }
    let freq = integrate(|f| log_prior_frequency(f, &c).exp(), &geometric_edges(c.f_min, c.f_min, c.f_max, 60), 12);
    worst = worst.max((freq - 1.0).abs());

    let mut ratio_err = 0.0_f64;
    for alpha in [0.1, 0.3, 0.5] {
        let p = PriorConfig { alpha, nf_max: 5, ..c };
        for n in 1..5 {
            ratio_err = ratio_err.max((prior_nf(n + 1, &p) / prior_nf(n, &p) - alpha).abs());
        }
    }
    let example: Vec<f64> = (0..=2).map(|n| prior_nf(n, &c)).collect();
    within(t0.elapsed(), 1.0, "prior suite")?;
    check(
        worst < 1e-6 && ratio_err < 1e-12 && example == [0.25, 0.5, 0.25],
        format!("max |mass - 1| = {worst:.1e}, ratio error {ratio_err:.1e}, p(N_f) = {example:?}"),
        format!("max |mass - 1| = {worst:.1e}, ratio error {ratio_err:.1e}, p(N_f) = {example:?}"),
    )
}

// 2 ---------------------------------------------------------------------------

fn laplace_gaussian_limit() -> Outcome {
    let t0 = Instant::now();
    let mut r = common::rng(7);
    let p = priors(0.01, 0.5);
    let mut worst = 0.0_f64;
    for case in 0..50 {
        let n = r.random_range(8..=30);
        let nf = r.random_range(0..=2);
        let nd = r.random_range(0..=(6 - 2 * nf).min(3));
        let freqs: Vec<f64> = loop {
            let mut f: Vec<f64> = (0..nf).map(|_| 0.05 + 0.4 * r.random::<f64>()).collect();
            f.sort_by(f64::total_cmp);
            if f.windows(2).all(|w| w[1] - w[0] > 0.02) {
                break f;
            }
        };
        let ts = series(100 + case, n, 40.0, &[(0.21, 2.0, 0.0)], 0.5, 0.5 + r.random::<f64>()).centered().0;
        let sj = r.random::<f64>();
        let d = build_design(&ts, &freqs, nd, 1e-6).map_err(|e| e.to_string())?;
        if d.cols() > 7 {
            return Err(format!("design with {} columns", d.cols()));
        }
        let laplace = laplace_log_evidence(&ts, &d, sj, &p, PriorMode::Flat).map_err(|e| e.to_string())?;
        worst = worst.max((laplace - flat_evidence_oracle(&ts, &design_matrix(&d), sj)).abs());
    }
    within(t0.elapsed(), 5.0, "50 designs")?;
    check(worst < 1e-8, format!("50 designs, max |diff| = {worst:.1e}"), format!("max |diff| = {worst:.1e}"))
}

// 3 ---------------------------------------------------------------------------

/// `log int L p dtheta` on a regular grid covering +-8 sd around the fit.
fn brute_force(ts: &TimeSeries, d: &DesignMatrix, p: &PriorConfig, per_dim: usize) -> f64 {
    let fit = fit_linear(ts, d, 0.0).unwrap();
    let cov = fit.covariance().unwrap();
    let dim = d.cols();
    let sd: Vec<f64> = (0..dim).map(|i| cov[i * dim + i].sqrt()).collect();
    let layout = d.layout();
    let h: Vec<f64> = sd.iter().map(|s| 16.0 * s / (per_dim - 1) as f64).collect();
    let total = per_dim.pow(dim as u32);
    let mut terms = Vec::with_capacity(total);
    let mut theta = vec![0.0; dim];
    let mut model = vec![0.0; ts.len()];
    for idx in 0..total {
        let mut rem = idx;
        for i in 0..dim {
            theta[i] = fit.coeffs[i] - 8.0 * sd[i] + h[i] * (rem % per_dim) as f64;
            rem /= per_dim;
        }
        for (k, m) in model.iter_mut().enumerate() {
            *m = d.row(k).iter().zip(&theta).map(|(x, c)| x * c).sum();
        }
        let mut lp = 0.0;
        for &j in &layout.pairs {
            lp += log_prior_amplitude_pair(theta[j], theta[j + 1], p);
        }
        for i in layout.poly_start..dim {
            lp += log_prior_coefficient(theta[i], p);
        }
        terms.push(log_likelihood(ts, &model, 0.0) + lp);
    }
    log_sum_exp(&terms) + h.iter().map(|v| v.ln()).sum::<f64>()
}

fn laplace_vs_quadrature() -> Outcome {
    let t0 = Instant::now();
    let mut worst = 0.0_f64;
    let mut count = 0;
    let p = priors(0.01, 0.5);
    for seed in 0..6 {
        // Mean-only model, offset 10 sigma.
        let ts = series(seed, 5 + seed as usize % 4, 10.0, &[], 10.0, 1.0).centered().0;
        let d = build_design(&ts, &[], 0, 1e-6).unwrap();
        let laplace = laplace_log_evidence(&ts, &d, 0.0, &p, PriorMode::Proper).unwrap();
        worst = worst.max((laplace - brute_force(&ts, &d, &p, 4001)).abs());
        count += 1;
    }
    for seed in 0..6 {
        // One sinusoid of amplitude 20 sigma plus a constant.
        let ts = series(seed, 6 + seed as usize % 3, 12.0, &[(0.19, 20.0, 0.8)], 20.0, 1.0).centered().0;
        let d = build_design(&ts, &[0.19], 0, 1e-6).unwrap();
        let laplace = laplace_log_evidence(&ts, &d, 0.0, &p, PriorMode::Proper).unwrap();
        worst = worst.max((laplace - brute_force(&ts, &d, &p, 81)).abs());
        count += 1;
    }
    within(t0.elapsed(), 60.0, "quadrature instances")?;
    check(
        worst < 0.1,
        format!("{count} instances, max |diff| = {worst:.3}"),
        format!("{count} instances, max |diff| = {worst:.3}"),
    )
}

// 4 ---------------------------------------------------------------------------

fn trig_recurrence() -> Outcome {
    let t0 = Instant::now();
    let ts = series(5, 60, 200.0, &[], 0.0, 1.0).centered().0;
    let xs: Vec<f64> = ts.xs().collect();
    let grid = FrequencyGrid::new(200.0, 0.01, 0.01 + 100_000.5 / 2000.0, 10.0, usize::MAX).map_err(|e| e.to_string())?;
    let mut table = TrigTable::new(&xs, &grid, 0, DEFAULT_RESEED);
    let mut worst = 0.0_f64;
    for step in 0..=100_000 {
        if step > 0 {
            table.advance();
        }
        let f = grid.freq(table.node());
        for (k, &x) in xs.iter().enumerate() {
            let (s, c) = (TAU * f * x).sin_cos();
            worst = worst.max((table.sin()[k] - s).abs()).max((table.cos()[k] - c).abs());
        }
    }
    within(t0.elapsed(), 5.0, "1e5 advances")?;
    check(
        worst < 1e-9,
        format!("1e5 advances, reseed every {DEFAULT_RESEED}, max error {worst:.1e}"),
        format!("max error {worst:.1e}"),
    )
}

// 5 ---------------------------------------------------------------------------

fn greedy_fidelity() -> Outcome {
    let t0 = Instant::now();
    let grid = grid_with(100.0, 5.0, 0.02, 200);
    let p = priors(grid.f_min, grid.f_max);
    let m = grid.count;
    let exec = Executor::sequential();
    let mut notes = Vec::new();
    let mut ok = true;
    for seed in 0..3 {
        let ts = series(seed, 40, 100.0, &[(0.097, 10.0, 0.4), (0.263, 10.0, 2.1)], 1.0, 1.0).centered().0;
        let ctx = common::context(&ts, &p, grid, JitterSpec::default(), PriorMode::Proper, 1e-3);
        let one = scan_1d(&ctx, 0, &exec).map_err(|e| e.to_string())?;
        let greedy = scan_greedy(&ctx, &one, &exec).map_err(|e| e.to_string())?;
        let exact = scan_2d(&ctx, 0, &exec).map_err(|e| e.to_string())?;
        let m1 = one.retained.len();
        let diff = (greedy.log_total - exact.log_total).abs();
        let evals = one.evaluations + greedy.evaluations;
        ok &= diff < 0.1 && evals <= m * (1 + m1);
        notes.push(format!("|diff| {diff:.4}, evals {evals} <= {}", m * (1 + m1)));
    }
    within(t0.elapsed(), 120.0, "greedy checks")?;
    check(ok, format!("M = {m}: {}", notes.join("; ")), notes.join("; "))
}

// 6 ---------------------------------------------------------------------------

fn detection_overrides() -> PriorOverrides {
    PriorOverrides {
        f_max: Some(0.5),
        ..PriorOverrides::default()
    }
}

fn run_analysis(ts: &TimeSeries, exec: &Executor) -> Result<Analysis, String> {
    let p = detection_overrides().resolve(ts).map_err(|e| e.to_string())?;
    analyze(ts, &p, &AnalysisConfig::default(), exec).map_err(|e| e.to_string())
}

fn log_bf(a: &Analysis, n: usize) -> Option<f64> {
    a.posterior.bayes_factors.iter().find(|b| b.n == n).map(|b| b.log_value)
}

fn detection() -> Outcome {
    let t0 = Instant::now();
    let exec = Executor::new(0).map_err(|e| e.to_string())?;
    let mut signal_hits = 0;
    for seed in 0..20 {
        let ts = series(seed, 30, 100.0, &[(0.137, 10.0, 0.5 * seed as f64)], 0.0, 1.0);
        let a = run_analysis(&ts, &exec)?;
        let b10 = log_bf(&a, 0).unwrap_or(f64::NEG_INFINITY);
        let b21 = log_bf(&a, 1).unwrap_or(f64::NEG_INFINITY);
        if b10 > 1e3f64.ln() && b21 < 0.0 {
            signal_hits += 1;
        }
    }
    let mut noise_hits = 0;
    for seed in 0..20 {
        let ts = series(500 + seed, 30, 100.0, &[], 0.0, 1.0);
        let a = run_analysis(&ts, &exec)?;
        let nf = &a.posterior.nf_posterior;
        let argmax = (0..nf.len()).max_by(|&x, &y| nf[x].total_cmp(&nf[y])).unwrap();
        if argmax == 0 {
            noise_hits += 1;
        }
    }
    within(t0.elapsed(), 600.0, "detection study")?;
    let msg = format!("signal: B10 > 1e3 and B21 < 1 in {signal_hits}/20; noise: argmax N_f = 0 in {noise_hits}/20");
    check(signal_hits >= 18 && noise_hits >= 18, msg.clone(), msg)
}

// 7 ---------------------------------------------------------------------------

fn aliasing() -> Outcome {
    let t0 = Instant::now();
    let setup = AliasSetup::default();
    let exec = Executor::new(0).map_err(|e| e.to_string())?;
    let (mut ground, mut random) = (Vec::new(), Vec::new());
    for seed in 0..20 {
        let pair = setup.run(seed, &exec).map_err(|e| e.to_string())?;
        ground.push(pair.a.overlap);
        random.push(pair.b.overlap);
    }
    let span = setup.cadence_a.span;
    let m = FrequencyGrid::new(
        span,
        0.5 / span,
        setup.priors.f_max.unwrap_or(0.3),
        setup.analysis.scan.oversample,
        usize::MAX,
    )
    .map(|g| g.count)
    .unwrap_or(0);
    within(t0.elapsed(), 1800.0, "aliasing study")?;
    let (mg, mr) = (median(&ground), median(&random));
    let below = ground.iter().zip(&random).filter(|(g, r)| g < r).count();
    let msg = format!("20 seeds, M ~ {m}: median overlap ground {mg:.3} vs random {mr:.3}; ground lower in {below}/20");
    check(mg < mr && mr > 0.2, msg.clone(), msg)
}

// 8 ---------------------------------------------------------------------------

fn cost_scaling() -> Outcome {
    let span = 1000.0;
    let grid = grid_with(span, 10.0, 0.001, 18_000);
    let mut r = common::rng(42);
    let mut xs: Vec<f64> = (0..300).map(|_| r.random::<f64>() * span).collect();
    xs[0] = 0.0;
    xs[299] = span;
    let comps = [(0.0731, 3.0, 0.2), (0.4123, 2.0, 1.3), (1.1017, 1.5, 2.9)];
    let noise = rand_distr::Normal::new(0.0, 1.0).unwrap();
    let obs: Vec<Observation> = xs
        .iter()
        .map(|&x| {
            let y: f64 = comps.iter().map(|&(f, a, p)| a * (TAU * f * x + p).cos()).sum();
            Observation::new(x, y + rand_distr::Distribution::sample(&noise, &mut r), 1.0)
        })
        .collect();
    let ts = TimeSeries::new(obs, SeriesKind::Generic).map_err(|e| e.to_string())?;
    let p = PriorOverrides {
        f_min: Some(grid.f_min),
        f_max: Some(grid.f_max),
        nf_max: Some(3),
        nd_max: Some(0),
        ..PriorOverrides::default()
    }
    .resolve(&ts)
    .map_err(|e| e.to_string())?;
    let config = AnalysisConfig {
        stop_ratio: 1e-300,
        ..AnalysisConfig::default()
    };
    let a = analyze(&ts, &p, &config, &Executor::sequential()).map_err(|e| e.to_string())?;
    let secs = |nf: usize| a.timings.iter().filter(|t| t.nf == nf).map(|t| t.seconds).sum::<f64>();
    let (t1, t2, t3) = (secs(1), secs(2), secs(3));
    // Reference profile 10 : 16 : 37, normalized to the first level.
    let ratios = [t2 / t1, t3 / t1];
    let reference = [1.6, 3.7];
    let shape_ok = ratios.iter().zip(&reference).all(|(r, q)| r / q < 3.0 && q / r < 3.0);
    let msg = format!(
        "M = {}, N = 300, one thread: N_f=1 {t1:.2}s, N_f=2 {t2:.2}s, N_f=3 {t3:.2}s; ratio 1 : {:.2} : {:.2} vs 1 : 1.6 : 3.7",
        a.grid.count, ratios[0], ratios[1]
    );
    check(t1 < 30.0 && shape_ok, msg.clone(), msg)
}

// 9 ---------------------------------------------------------------------------

fn cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_qpsurrogate"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(String::from_utf8_lossy(&out.stderr).into_owned())
    }
}

fn read_json(p: &Path) -> Result<Value, String> {
    serde_json::from_str(&fs::read_to_string(p).map_err(|e| e.to_string())?).map_err(|e| e.to_string())
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path();
    let s = |p: &Path| p.to_string_lossy().into_owned();
    let cfg = root.join("sim.json");
    let spec = json!({
        "signal": {
            "sinusoids": [{ "frequency": 0.11, "amplitude": 4.0 }, { "frequency": 0.29, "amplitude": 3.0, "phase": 1.0 }],
            "noise": { "type": "uniform", "lo": 0.8, "hi": 1.5 },
            "jitter": 0.5
        },
        "cadence": { "mode": "random_uniform", "n_obs": 60, "span": 150.0 },
        "seed": 9
    });
    fs::write(&cfg, spec.to_string()).map_err(|e| e.to_string())?;
    let data = root.join("data.csv");
    cli(&["simulate", "--config", &s(&cfg), "--output", &s(&data)])?;
    let run = |name: &str, threads: &str| -> Result<Value, String> {
        let out = root.join(name);
        cli(&["analyze", "--input", &s(&data), "--output-dir", &s(&out), "--f-max", "0.4", "--threads", threads])?;
        read_json(&out.join("posterior.json"))
    };
    let a = run("a", "1")?;
    let b = run("b", "1")?;
    let k = run("k", "4")?;
    let strip = |mut v: Value| {
        v.as_object_mut().map(|o| o.remove("run"));
        v
    };
    let mut identical = strip(a.clone()) == strip(b.clone());
    for f in a["files"].as_array().into_iter().flatten() {
        let f = f.as_str().unwrap_or_default();
        identical &= fs::read(root.join("a").join(f)).ok() == fs::read(root.join("b").join(f)).ok();
    }
    let (sa, sk) = (a["scans"].as_array().cloned().unwrap_or_default(), k["scans"].as_array().cloned().unwrap_or_default());
    let mut worst = if sa.len() == sk.len() && !sa.is_empty() { 0.0_f64 } else { f64::INFINITY };
    for (x, y) in sa.iter().zip(&sk) {
        let (u, v) = (x["log_evidence"].as_f64().unwrap_or(f64::NAN), y["log_evidence"].as_f64().unwrap_or(f64::NAN));
        worst = worst.max((u - v).abs());
    }
    let msg = format!("--threads 1 reruns identical: {identical}; --threads 4 max |log Z diff| = {worst:.1e}");
    check(identical && worst < 1e-9, msg.clone(), msg)
}

// 10 --------------------------------------------------------------------------

fn chi2_reduction(ts: &TimeSeries, f: f64) -> f64 {
    let n = ts.len();
    let xs: Vec<f64> = ts.xs().collect();
    let x1 = DMatrix::from_fn(n, 1, |_, _| 1.0);
    let x3 = DMatrix::from_fn(n, 3, |i, j| {
        let a = TAU * f * xs[i];
        [a.sin(), a.cos(), 1.0][j]
    });
    wls_oracle(ts, &x1, 0.0).1 - wls_oracle(ts, &x3, 0.0).1
}

fn least_squares_limit() -> Outcome {
    let mut matched = 0;
    for seed in 0..10 {
        let mut r = common::rng(1000 + seed);
        let n = r.random_range(30..=80);
        let span = r.random_range(50.0..300.0);
        let f = r.random_range(0.03..0.4);
        let a = r.random_range(1.0..5.0);
        let ts = series(seed, n, span, &[(f, a, r.random::<f64>() * 6.0)], 0.5, 1.0).centered().0;
        let grid = FrequencyGrid::new(ts.span(), 0.01, 0.5, 10.0, usize::MAX).map_err(|e| e.to_string())?;
        let p = PriorConfig { nd_min: 0, nd_max: 0, ..priors(grid.f_min, grid.f_max) };
        let ctx = common::context(&ts, &p, grid, JitterSpec::Fixed { sigma: 0.0 }, PriorMode::Flat, 1e-4);
        let scan = scan_1d(&ctx, 0, &Executor::sequential()).map_err(|e| e.to_string())?;
        let mut by_evidence: Vec<usize> = (0..scan.len()).collect();
        by_evidence.sort_by(|&x, &y| scan.log_evidence[y].total_cmp(&scan.log_evidence[x]));
        let reduction: Vec<f64> = grid.freqs().iter().map(|&f| chi2_reduction(&ts, f)).collect();
        let mut by_chi2: Vec<usize> = (0..scan.len()).collect();
        by_chi2.sort_by(|&x, &y| reduction[y].total_cmp(&reduction[x]));
        if by_evidence[..10] == by_chi2[..10] {
            matched += 1;
        }
    }
    let msg = format!("top-10 order matches the chi2-reduction periodogram on {matched}/10 instances");
    check(matched == 10, msg.clone(), msg)
}

fn main() {
    // Under `cargo test -- <filter>` only run when the filter names this target.
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if !args.is_empty() && !args.iter().any(|a| "acceptance".contains(a.as_str())) {
        return;
    }
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let criteria: [(usize, bool, fn() -> Outcome); 10] = [
        (1, true, priors_suite),
        (2, true, laplace_gaussian_limit),
        (3, true, laplace_vs_quadrature),
        (4, true, trig_recurrence),
        (5, true, greedy_fidelity),
        (6, true, detection),
        (7, true, aliasing),
        (8, false, cost_scaling),
        (9, true, determinism),
        (10, true, least_squares_limit),
    ];
    let mut failed = Vec::new();
    for (n, hard, f) in criteria {
        let t0 = Instant::now();
        let outcome = f();
        let secs = t0.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("criterion {n}: PASS ({msg}; {secs:.1}s)"),
            Err(msg) => {
                let note = if hard { "" } else { " [soft, reported only]" };
                println!("criterion {n}: FAIL ({msg}; {secs:.1}s){note}");
                if hard {
                    failed.push(n);
                }
            }
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
