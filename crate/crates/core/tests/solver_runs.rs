use polyak_feasibility::certification::{coverage_exact, coverage_mc, CoverageQuery};
use polyak_feasibility::confident::{error_audit, run_confident, ConfidentConfig};
use polyak_feasibility::problem_gen::{gen_linear, gen_quadratic, LinearParams, QuadraticParams};
use polyak_feasibility::solver::{run_pfm, RunConfig, SnapshotPolicy, StopRule};
use polyak_feasibility::vector::dist;
use polyak_feasibility::ReplacementMode;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn linear(seed: u64) -> polyak_feasibility::GeneratedProblem {
    gen_linear(
        &LinearParams {
            dimension: 4,
            count: 60,
            interior_radius: 1.0,
            spread: 0.5,
            x0_distance: 3.0,
        },
        &mut ChaCha8Rng::seed_from_u64(seed),
    )
    .unwrap()
}

#[test]
fn distance_to_witness_never_grows() {
    for seed in 0..20 {
        let p = linear(seed);
        let mut config = RunConfig::new(3, StopRule::max_iters(300), seed);
        config.snapshots = SnapshotPolicy::EveryStep;
        let trace = run_pfm(&p.family, &p.x0, &config).unwrap();
        let mut prev = dist(&p.x0, &p.feasible_witness);
        for r in &trace.records {
            let d = dist(r.x.as_ref().unwrap(), &p.feasible_witness);
            assert!(d <= prev + 1e-9, "seed {seed} k {}: {d} > {prev}", r.k);
            prev = d;
        }
    }
}

#[test]
fn large_moves_fit_the_deterministic_budget() {
    let p = linear(3);
    let eps = 0.05;
    let n = ((p.dist0() / eps).powi(2)).floor() as usize;
    for seed in 0..10 {
        let trace = run_pfm(&p.family, &p.x0, &RunConfig::new(1, StopRule::max_iters(20_000), seed)).unwrap();
        let large = trace.records.iter().filter(|r| r.moved && r.residual > eps).count();
        assert!(large <= n, "{large} > {n}");
    }
}

#[test]
fn same_seed_same_trace() {
    let p = linear(1);
    let config = RunConfig::new(4, StopRule::max_iters(200).with_residual_target(1e-3), 17);
    let a = run_pfm(&p.family, &p.x0, &config).unwrap();
    let b = run_pfm(&p.family, &p.x0, &config).unwrap();
    assert_eq!(a, b);
    let mut ca = Vec::new();
    let mut cb = Vec::new();
    a.write_csv(&mut ca).unwrap();
    b.write_csv(&mut cb).unwrap();
    assert_eq!(ca, cb);
}

#[test]
fn without_replacement_full_batch_is_deterministic_in_residual() {
    // L = m without replacement sees every constraint, so each residual is
    // the true maximum.
    let p = linear(2);
    let m = p.family.finite_size().unwrap();
    let mut config = RunConfig::new(m, StopRule::max_iters(50), 0);
    config.mode = ReplacementMode::Without;
    config.snapshots = SnapshotPolicy::EveryStep;
    let trace = run_pfm(&p.family, &p.x0, &config).unwrap();
    let mut x = p.x0.clone();
    for r in &trace.records {
        let truth = polyak_feasibility::certification::max_residual(&p.family, &x).unwrap();
        assert_eq!(r.residual, truth);
        x = r.x.clone().unwrap();
    }
}

#[test]
fn quadratic_problem_reaches_coverage() {
    let p = gen_quadratic(
        &QuadraticParams {
            dimension: 3,
            count: 40,
            inner_radius: 1.0,
            center_spread: 0.5,
            x0_distance: 2.0,
        },
        &mut ChaCha8Rng::seed_from_u64(4),
    )
    .unwrap();
    let config = RunConfig::new(5, StopRule::max_iters(100_000).with_coverage_target(0.1, 0.1, 1), 9);
    let trace = run_pfm(&p.family, &p.x0, &config).unwrap();
    assert_eq!(trace.stop_reason.as_str(), "coverage_target");
    let cov = coverage_exact(&p.family, &CoverageQuery::new(trace.final_x.clone(), 0.1)).unwrap();
    assert!(cov >= 0.9);
}

#[test]
fn monte_carlo_coverage_brackets_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut inside = 0;
    for seed in 0..40 {
        let p = linear(seed);
        let x: Vec<f64> = p.x0.iter().map(|v| v * 0.6).collect();
        let q = CoverageQuery::new(x, 0.2);
        let exact = coverage_exact(&p.family, &q).unwrap();
        let est = coverage_mc(&p.family, &q, 20_000, &mut rng).unwrap();
        assert!(exact > 0.05 && exact < 0.95, "coverage {exact} is not informative");
        if est.lower <= exact && exact <= est.upper {
            inside += 1;
        }
    }
    // 95% intervals: expect about 38 of 40
    assert!(inside >= 34, "{inside}");
}

#[test]
fn confident_runs_rarely_err() {
    let p = linear(6);
    let mut bad = 0;
    let runs = 100;
    for seed in 0..runs {
        let config = ConfidentConfig::new(0.1, 0.2, StopRule::max_iters(60), seed);
        let run = run_confident(&p.family, &p.x0, &config).unwrap();
        let audit = error_audit(&run.pairs, &p.family, 0.1).unwrap();
        assert_eq!(audit.pairs_checked, 60);
        if !audit.error_free() {
            bad += 1;
        }
    }
    // at most α·R + 3σ
    assert!(bad as f64 <= 20.0 + 3.0 * (100.0f64 * 0.2 * 0.8).sqrt(), "{bad}");
}
