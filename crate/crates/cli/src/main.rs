use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use polyak_feasibility::bounds::{
    confident_iter_bounds, expected_iters_basic, expected_iters_growth, success_prob, BoundInputs, GrowthProfile,
};
use polyak_feasibility::confident::{error_audit, error_audit_mc, run_confident, CertifiedPair, ConfidentConfig};
use polyak_feasibility::experiment::{load_spec, run_experiment, RunOptions};
use polyak_feasibility::problem_gen::{gen_interval, gen_linear, gen_quadratic, LinearParams, QuadraticParams};
use polyak_feasibility::solver::{run_pfm, RunConfig, StopRule};
use polyak_feasibility::{ProblemFile, ReplacementMode, StepParams};

#[derive(Parser)]
#[command(name = "pfm", version, about = "Minibatch Polyak solvers for stochastic convex feasibility")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SolverKind {
    Pfm,
    Confident,
}

#[derive(Subcommand)]
enum Command {
    /// Run one solver instance and write its trace.
    Solve(SolveArgs),
    /// Run a seed-replicated experiment spec.
    Experiment(ExperimentArgs),
    /// Print a table of iteration bounds.
    Bounds(BoundsArgs),
    /// Generate a problem file.
    Gen(GenArgs),
    /// Audit certified pairs from `solve --solver confident --format json`.
    Audit(AuditArgs),
}

#[derive(Args)]
struct SolveArgs {
    /// Problem file with `x0`.
    problem: PathBuf,
    #[arg(long, value_enum, default_value = "pfm")]
    solver: SolverKind,
    #[arg(long, default_value_t = 1)]
    batch_size: usize,
    #[arg(long)]
    without_replacement: bool,
    #[arg(long, default_value_t = 1.0)]
    delta: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iters: u64,
    #[arg(long)]
    residual_target: Option<f64>,
    /// Stop on exact coverage `EPS,GAMMA` (finite families).
    #[arg(long, value_parser = parse_pair)]
    coverage_target: Option<(f64, f64)>,
    /// confidentPFM tolerance Γ.
    #[arg(long, default_value_t = 0.1)]
    gamma: f64,
    /// confidentPFM confidence parameter α.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Write `trace.csv` / `trace.json` here instead of stdout.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    spec: PathBuf,
    /// Overrides the spec's base seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Overrides the spec's output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// What to print on stdout.
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long)]
    lipschitz: f64,
    #[arg(long)]
    dist: f64,
    /// One or more tolerances, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    eps: Vec<f64>,
    #[arg(long)]
    gamma: f64,
    /// One or more batch sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    batch_size: Vec<u64>,
    #[arg(long, requires_all = ["degree", "delta_mass"])]
    mu: Option<f64>,
    #[arg(long)]
    degree: Option<f64>,
    #[arg(long)]
    delta_mass: Option<f64>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args)]
struct GenArgs {
    #[command(subcommand)]
    kind: GenKind,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum GenKind {
    /// Affine constraints with unit normals and known distance.
    Linear {
        #[arg(long)]
        dimension: usize,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 1.0)]
        interior_radius: f64,
        #[arg(long, default_value_t = 0.0)]
        spread: f64,
        #[arg(long)]
        x0_distance: f64,
    },
    /// The interval `[lo, hi]` as two affine constraints.
    Interval {
        #[arg(long, allow_hyphen_values = true)]
        lo: f64,
        #[arg(long, allow_hyphen_values = true)]
        hi: f64,
        #[arg(long, allow_hyphen_values = true)]
        x0: f64,
    },
    /// Squared-distance ball constraints sharing an inner ball.
    Quadratic {
        #[arg(long)]
        dimension: usize,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 1.0)]
        inner_radius: f64,
        #[arg(long, default_value_t = 0.0)]
        center_spread: f64,
        #[arg(long)]
        x0_distance: f64,
    },
}

#[derive(Args)]
struct AuditArgs {
    problem: PathBuf,
    /// JSON array of certified pairs.
    pairs: PathBuf,
    #[arg(long)]
    gamma: f64,
    /// Monte-Carlo trials per pair; forces a Monte-Carlo audit.
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

fn parse_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected EPS,GAMMA")?;
    let a = a.trim().parse().map_err(|e| format!("{e}"))?;
    let b = b.trim().parse().map_err(|e| format!("{e}"))?;
    Ok((a, b))
}

fn emit(out_dir: Option<&Path>, name: &str, body: &str) -> Result<()> {
    match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let path = dir.join(name);
            fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
            eprintln!("wrote {}", path.display());
        }
        None => io::stdout().write_all(body.as_bytes())?,
    }
    Ok(())
}

fn solve(args: SolveArgs) -> Result<i32> {
    let file = ProblemFile::load(&args.problem).with_context(|| format!("loading {}", args.problem.display()))?;
    let family = file.family()?;
    let x0 = file.x0.clone().context("problem file has no x0")?;
    let mut stop = StopRule::max_iters(args.max_iters);
    if let Some(t) = args.residual_target {
        stop = stop.with_residual_target(t);
    }
    if let Some((eps, gamma)) = args.coverage_target {
        stop = stop.with_coverage_target(eps, gamma, 1);
    }
    let step = StepParams::new(args.delta)?;
    let out_dir = args.out_dir.as_deref();
    match args.solver {
        SolverKind::Pfm => {
            let mut config = RunConfig::new(args.batch_size, stop, args.seed);
            config.step = step;
            if args.without_replacement {
                config.mode = ReplacementMode::Without;
            }
            let trace = run_pfm(&family, &x0, &config)?;
            match args.format {
                Format::Csv => {
                    let mut buf = Vec::new();
                    trace.write_csv(&mut buf)?;
                    emit(out_dir, "trace.csv", &String::from_utf8(buf)?)?;
                }
                Format::Json => {
                    let body = serde_json::json!({
                        "iterations": trace.iterations,
                        "moves": trace.moves(),
                        "total_samples": trace.total_samples,
                        "stop_reason": trace.stop_reason.as_str(),
                        "final_x": trace.final_x,
                    });
                    emit(out_dir, "trace.json", &(serde_json::to_string_pretty(&body)? + "\n"))?;
                }
            }
        }
        SolverKind::Confident => {
            if args.without_replacement {
                bail!("confidentPFM always samples with replacement");
            }
            let mut config = ConfidentConfig::new(args.gamma, args.alpha, stop, args.seed);
            config.step = step;
            let run = run_confident(&family, &x0, &config)?;
            match args.format {
                Format::Csv => {
                    let mut buf = Vec::new();
                    run.write_pairs_csv(&mut buf)?;
                    emit(out_dir, "pairs.csv", &String::from_utf8(buf)?)?;
                }
                Format::Json => {
                    emit(out_dir, "pairs.json", &(serde_json::to_string_pretty(&run.pairs)? + "\n"))?;
                }
            }
        }
    }
    Ok(0)
}

fn experiment(args: ExperimentArgs) -> Result<i32> {
    let mut spec = match load_spec(&args.spec) {
        Ok(spec) => spec,
        Err(errors) => {
            for e in &errors {
                eprintln!("spec error: {e}");
            }
            return Ok(1);
        }
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let base_dir = args.spec.parent().map(Path::to_path_buf).unwrap_or_default();
    let report = run_experiment(
        &spec,
        &RunOptions {
            workers: args.workers,
            base_dir: base_dir.clone(),
        },
    )?;
    let out = args
        .out_dir
        .or_else(|| spec.output.as_ref().map(|o| base_dir.join(&o.dir)));
    if let Some(dir) = out {
        let prefix = spec.output.as_ref().map_or("experiment", |o| o.prefix.as_str());
        let (csv, json) = report.save(&dir, prefix)?;
        eprintln!("wrote {} and {}", csv.display(), json.display());
    }
    match args.format {
        Format::Json => println!("{}", report.to_json()?),
        Format::Csv => print!("{}", report.csv_string()?),
    }
    for f in report.flags.iter().filter(|f| !f.passed) {
        eprintln!("FAIL {}: {}", f.name, f.detail);
    }
    Ok(report.exit_code())
}

fn bounds(args: BoundsArgs) -> Result<i32> {
    let growth = match (args.mu, args.degree, args.delta_mass) {
        (Some(mu), Some(d), Some(dm)) => Some(GrowthProfile::new(mu, d, dm)?),
        _ => None,
    };
    let mut rows = Vec::new();
    for &eps in &args.eps {
        for &l in &args.batch_size {
            let inputs = BoundInputs::new(args.lipschitz, args.dist, eps, args.gamma, l)?;
            let confident = confident_iter_bounds(&inputs, growth.as_ref())?;
            rows.push(serde_json::json!({
                "eps": eps,
                "batch_size": l,
                "p": success_prob(args.gamma, l)?,
                "deterministic": inputs.deterministic_budget(),
                "expected_basic": expected_iters_basic(&inputs)?,
                "expected_growth": growth.as_ref().map(|g| expected_iters_growth(&inputs, g)).transpose()?,
                "confident_basic": confident.basic,
                "confident_growth": confident.growth,
            }));
        }
    }
    match args.format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&rows)?),
        Format::Csv => {
            let cols = [
                "eps",
                "batch_size",
                "p",
                "deterministic",
                "expected_basic",
                "expected_growth",
                "confident_basic",
                "confident_growth",
            ];
            println!("{}", cols.join(","));
            for r in &rows {
                let line: Vec<String> = cols
                    .iter()
                    .map(|c| match &r[*c] {
                        serde_json::Value::Null => String::new(),
                        v => v.to_string(),
                    })
                    .collect();
                println!("{}", line.join(","));
            }
        }
    }
    Ok(0)
}

fn gen(args: GenArgs) -> Result<i32> {
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let problem = match args.kind {
        GenKind::Linear {
            dimension,
            count,
            interior_radius,
            spread,
            x0_distance,
        } => gen_linear(
            &LinearParams {
                dimension,
                count,
                interior_radius,
                spread,
                x0_distance,
            },
            &mut rng,
        )?,
        GenKind::Interval { lo, hi, x0 } => gen_interval(lo, hi, x0)?,
        GenKind::Quadratic {
            dimension,
            count,
            inner_radius,
            center_spread,
            x0_distance,
        } => gen_quadratic(
            &QuadraticParams {
                dimension,
                count,
                inner_radius,
                center_spread,
                x0_distance,
            },
            &mut rng,
        )?,
    };
    let file = ProblemFile::from_generated(&problem);
    match args.out {
        Some(path) => {
            file.save(&path)?;
            eprintln!("wrote {}", path.display());
        }
        None => println!("{}", file.to_json()?),
    }
    Ok(0)
}

fn audit(args: AuditArgs) -> Result<i32> {
    let family = ProblemFile::load(&args.problem)?.family()?;
    let text = fs::read_to_string(&args.pairs).with_context(|| format!("reading {}", args.pairs.display()))?;
    let pairs: Vec<CertifiedPair> = serde_json::from_str(&text).context("parsing pairs")?;
    let report = match args.trials {
        None if family.is_finite() => error_audit(&pairs, &family, args.gamma)?,
        trials => {
            let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
            error_audit_mc(&pairs, &family, args.gamma, trials.unwrap_or(10_000), &mut rng)?
        }
    };
    match args.format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&report)?),
        Format::Csv => {
            println!("k,eps,coverage,error");
            for e in &report.entries {
                println!("{},{:?},{:?},{}", e.k, e.eps, e.coverage, e.error);
            }
        }
    }
    eprintln!("{} of {} pairs flagged", report.errors, report.pairs_checked);
    Ok(if report.error_free() { 0 } else { 2 })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(a) => solve(a),
        Command::Experiment(a) => experiment(a),
        Command::Bounds(a) => bounds(a),
        Command::Gen(a) => gen(a),
        Command::Audit(a) => audit(a),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
