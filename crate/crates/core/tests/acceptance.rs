//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL
//! line each and exits non-zero if any fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use polyak_feasibility::bounds::{confident_iter_bounds, expected_iters_basic, simulate_hitting_time, success_prob, tail_bound, BoundInputs};
use polyak_feasibility::certification::{coverage_exact, coverage_mc, CoverageQuery};
use polyak_feasibility::confident::{batch_size, error_audit, run_confident, ConfidentConfig};
use polyak_feasibility::polyak::{check_decrease, polyak_step, StepParams};
use polyak_feasibility::problem_gen::{gen_linear, LinearParams};
use polyak_feasibility::solver::{run_pfm, RunConfig, StopRule};
use polyak_feasibility::GeneratedProblem;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn within(limit: Duration, elapsed: Duration) -> (bool, String) {
    (elapsed <= limit, format!("{:.2}s of {}s", elapsed.as_secs_f64(), limit.as_secs()))
}

/// The setup shared by criteria 4 and 5.
fn theorem_setup() -> GeneratedProblem {
    gen_linear(
        &LinearParams {
            dimension: 10,
            count: 1000,
            interior_radius: 1.0,
            spread: 0.5,
            x0_distance: 4.0,
        },
        &mut ChaCha8Rng::seed_from_u64(2024),
    )
    .unwrap()
}

fn mean_iterations_to_coverage(p: &GeneratedProblem, l: usize, eps: f64, gamma: f64, seeds: u64) -> f64 {
    let total: u64 = (0..seeds)
        .into_par_iter()
        .map(|s| {
            let stop = StopRule::max_iters(1_000_000).with_coverage_target(eps, gamma, 1);
            let trace = run_pfm(&p.family, &p.x0, &RunConfig::new(l, stop, 10_000 + s)).unwrap();
            assert_eq!(trace.stop_reason.as_str(), "coverage_target");
            trace.iterations
        })
        .sum();
    total as f64 / seeds as f64
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let target = 10_000;
    let mut checked = [0usize; 2];
    let mut failures = 0usize;
    for (variant, count) in checked.iter_mut().enumerate() {
        while *count < target {
            let kind = *count % 4;
            let n = rng.random_range(1..=6);
            let (c, z) = common::constraint_with_feasible_point(kind, n, &mut rng);
            let x = common::gaussian_vec(n, 4.0, &mut rng);
            let (v, g) = c.value_and_subgradient(&x);
            if v <= 0.0 {
                continue;
            }
            let delta = if variant == 0 { 1.0 } else { rng.random_range(0.01..1.99) };
            let x_plus = polyak_step(&x, v, &g, StepParams::new(delta).unwrap()).unwrap();
            if !check_decrease(&x, &x_plus, &z, v, &g, delta) {
                failures += 1;
            }
            *count += 1;
        }
    }
    let (fast, t) = within(Duration::from_secs(10), start.elapsed());
    outcome(
        failures == 0 && fast,
        format!("{} steps with δ=1 and {} with δ∈(0,2), {failures} failures, {t}", checked[0], checked[1]),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let stats = simulate_hitting_time(20, 0.3, 100_000, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    let expected = 20.0 / 0.3;
    let rel = (stats.mean - expected).abs() / expected;
    let (fast, t) = within(Duration::from_secs(5), start.elapsed());
    outcome(
        rel <= 0.01 && fast,
        format!("mean {:.3} vs N/p = {expected:.3} (rel. err {rel:.4}), {t}", stats.mean),
    )
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let (n, p, trials) = (20u64, 0.3, 1_000_000u64);
    let stats = simulate_hitting_time(n, p, trials, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let e = n as f64 / p;
    let first = (2.0 * e).ceil() as u64;
    let mut worst = f64::NEG_INFINITY;
    let mut violations = 0;
    for k in first..=first + 30 {
        let bound = tail_bound(e, p, k).unwrap();
        let sigma = (bound * (1.0 - bound) / trials as f64).sqrt();
        let freq = stats.frequency(k as usize);
        if freq > bound + 3.0 * sigma {
            violations += 1;
        }
        worst = worst.max(freq - bound);
    }
    let (fast, t) = within(Duration::from_secs(60), start.elapsed());
    outcome(
        violations == 0 && fast,
        format!("k = {first}..={}, {violations} bins above bound + 3σ, max(freq − bound) = {worst:.3e}, {t}", first + 30),
    )
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let p = theorem_setup();
    let (l, gamma) = (5usize, 0.1);
    let m = p.lipschitz().unwrap();
    let eps = p.dist0() * m / 10.0;
    let mean = mean_iterations_to_coverage(&p, l, eps, gamma, 200);
    let e = expected_iters_basic(&BoundInputs::new(m, p.dist0(), eps, gamma, l as u64).unwrap()).unwrap();
    let (fast, t) = within(Duration::from_secs(120), start.elapsed());
    outcome(mean <= e && fast, format!("mean iterations {mean:.2} ≤ E = {e:.2} over 200 seeds, {t}"))
}

fn criterion_5() -> Outcome {
    let p = theorem_setup();
    let gamma = 0.1;
    let eps = p.dist0() * p.lipschitz().unwrap() / 10.0;
    let base = mean_iterations_to_coverage(&p, 1, eps, gamma, 200);
    let mut ok = true;
    let mut parts = vec![format!("L=1: {base:.2}")];
    for k in [2usize, 5, 10] {
        let mean = mean_iterations_to_coverage(&p, k, eps, gamma, 200);
        let ratio = base / mean;
        let inside = ratio >= k as f64 / 2.0 && ratio <= 2.0 * k as f64;
        ok &= inside;
        parts.push(format!("L={k}: {mean:.2} (ratio {ratio:.2} in [{}, {}])", k as f64 / 2.0, 2 * k));
    }
    outcome(ok, parts.join(", "))
}

fn criterion_6() -> Outcome {
    // Facets through the origin: a sharp system without finite termination.
    let p = gen_linear(
        &LinearParams {
            dimension: 10,
            count: 100,
            interior_radius: 0.0,
            spread: 0.0,
            x0_distance: 4.0,
        },
        &mut ChaCha8Rng::seed_from_u64(6),
    )
    .unwrap();
    let m = p.family.finite_size().unwrap();
    // Γ below 1/m: every constraint must be within ε, i.e. max residual ≤ ε.
    let gamma = 0.5 / m as f64;
    let scale = p.lipschitz().unwrap() * p.dist0();
    let xs: Vec<f64> = (1..=8).map(f64::from).collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|&j| mean_iterations_to_coverage(&p, 10, scale * 0.5f64.powf(j), gamma, 100))
        .collect();
    let r2 = r_squared(&xs, &ys);
    let slope = fit_slope(&xs, &ys);
    let inv_sq: Vec<f64> = xs.iter().map(|j| 4f64.powf(*j)).collect();
    let r2_quadratic = r_squared(&inv_sq, &ys);
    outcome(
        r2 >= 0.9,
        format!(
            "R² = {r2:.4} against log₂(1/ε) (slope {slope:.2}), R² = {r2_quadratic:.4} against (1/ε)²; means {:?}",
            ys.iter().map(|y| (y * 100.0).round() / 100.0).collect::<Vec<_>>()
        ),
    )
}

fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn r_squared(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    sxy * sxy / (sxx * syy)
}

struct ConfidentSummary {
    runs: usize,
    runs_with_errors: usize,
    error_free_checked: usize,
    bound_violations: usize,
    bound: u64,
    worst: u64,
    elapsed: Duration,
}

fn confident_campaign() -> ConfidentSummary {
    let start = Instant::now();
    let p = gen_linear(
        &LinearParams {
            dimension: 5,
            count: 200,
            interior_radius: 1.0,
            spread: 0.5,
            x0_distance: 3.0,
        },
        &mut ChaCha8Rng::seed_from_u64(7),
    )
    .unwrap();
    let (gamma, alpha, eps) = (0.1, 0.2, 0.4);
    let m = p.lipschitz().unwrap();
    let inputs = BoundInputs::new(m, p.dist_upper, eps, gamma, 1).unwrap();
    let bound = confident_iter_bounds(&inputs, None).unwrap().basic;
    let results: Vec<(bool, Option<u64>)> = (0..500u64)
        .into_par_iter()
        .map(|seed| {
            // run past the bound so a violation would be observed
            let stop = StopRule::max_iters(2 * bound).with_residual_target(eps);
            let run = run_confident(&p.family, &p.x0, &ConfidentConfig::new(gamma, alpha, stop, seed)).unwrap();
            let audit = error_audit(&run.pairs, &p.family, gamma).unwrap();
            (audit.error_free(), run.first_iteration_reaching(eps))
        })
        .collect();
    let runs_with_errors = results.iter().filter(|(ok, _)| !ok).count();
    let clean: Vec<Option<u64>> = results.iter().filter(|(ok, _)| *ok).map(|(_, k)| *k).collect();
    let bound_violations = clean.iter().filter(|k| k.is_none_or(|k| k > bound)).count();
    ConfidentSummary {
        runs: results.len(),
        runs_with_errors,
        error_free_checked: clean.len(),
        bound_violations,
        bound,
        worst: clean.iter().flatten().copied().max().unwrap_or(0),
        elapsed: start.elapsed(),
    }
}

fn criterion_7(s: &ConfidentSummary) -> Outcome {
    let allowed = 0.2 * 500.0 + 3.0 * (500.0f64 * 0.2 * 0.8).sqrt();
    let (fast, t) = within(Duration::from_secs(300), s.elapsed);
    outcome(
        s.runs_with_errors as f64 <= allowed && fast,
        format!("{} of {} runs with audit errors, allowed {allowed:.1}, {t}", s.runs_with_errors, s.runs),
    )
}

fn criterion_8(s: &ConfidentSummary) -> Outcome {
    outcome(
        s.bound_violations == 0 && s.error_free_checked > 0,
        format!(
            "{} error-free runs, latest first hit at iteration {} vs bound {}, {} violations",
            s.error_free_checked, s.worst, s.bound, s.bound_violations
        ),
    )
}

fn criterion_9() -> Outcome {
    // independent closed forms
    let p_ref = 1.0 - 0.9f64.powi(10);
    let l1_ref = (10.0 * (2.0f64 / 0.05).ln()).ceil() as usize;
    let l2_ref = (10.0 * (8.0f64 / 0.05).ln()).ceil() as usize;
    let basic_ref = 1 + (1.0f64 * 10.0 / 1.0).powi(2).floor() as u64;

    let p = success_prob(0.1, 10).unwrap();
    let l1 = batch_size(0.1, 0.05, 1).unwrap();
    let l2 = batch_size(0.1, 0.05, 2).unwrap();
    let basic = confident_iter_bounds(&BoundInputs::new(1.0, 10.0, 1.0, 0.1, 1).unwrap(), None).unwrap().basic;

    let ok = (p - 0.651322).abs() <= 1e-6
        && (p - p_ref).abs() <= 1e-12
        && (l1, l2) == (37, 51)
        && (l1, l2) == (l1_ref, l2_ref)
        && basic == 101
        && basic == basic_ref;
    outcome(
        ok,
        format!("success_prob = {p:.6}, batch sizes = ({l1}, {l2}), confident bound = {basic}"),
    )
}

fn criterion_10() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut close = 0;
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let p = gen_linear(
            &LinearParams {
                dimension: 2 + (seed as usize % 5),
                count: 50 + 10 * seed as usize,
                interior_radius: 1.0,
                spread: 0.5,
                x0_distance: 3.0,
            },
            &mut ChaCha8Rng::seed_from_u64(100 + seed),
        )
        .unwrap();
        let x: Vec<f64> = p.x0.iter().map(|v| v * 0.6).collect();
        let q = CoverageQuery::new(x, 0.2);
        let exact = coverage_exact(&p.family, &q).unwrap();
        let est = coverage_mc(&p.family, &q, 100_000, &mut rng).unwrap();
        let diff = (est.estimate - exact).abs();
        worst = worst.max(diff);
        if diff <= 0.01 {
            close += 1;
        }
    }
    outcome(close >= 19, format!("{close} of 20 within 0.01, max |diff| = {worst:.4}"))
}

fn main() -> ExitCode {
    let mut all = true;
    let mut report = |id: usize, o: Outcome| {
        all &= o.passed;
        println!("[acceptance {id:>2}] {} {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
    };
    report(1, criterion_1());
    report(2, criterion_2());
    report(3, criterion_3());
    report(4, criterion_4());
    report(5, criterion_5());
    report(6, criterion_6());
    let campaign = confident_campaign();
    report(7, criterion_7(&campaign));
    report(8, criterion_8(&campaign));
    report(9, criterion_9());
    report(10, criterion_10());
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
