//! Seed-replicated experiments.
//!
//! An [`ExperimentSpec`] names a problem (a problem file or a generator), a
//! solver configuration, a replication count and a list of targets. Running
//! it produces one CSV row per replication and target plus a JSON report
//! holding the config echo, aggregate statistics, bound-calculator outputs
//! and pass/fail flags.
//!
//! ```json
//! {
//!   "problem": {"kind": "interval", "lo": -1.0, "hi": 1.0, "x0": 5.0},
//!   "solver": {"kind": "pfm", "config": {"batch_size": 1,
//!              "stop": {"max_iters": 10000, "residual_target": 0.1}}},
//!   "replications": 1,
//!   "seed": 7
//! }
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{
    confident_iter_bounds, expected_iters_basic, expected_iters_growth, BoundInputs, ConfidentBounds,
};
use crate::confident::{error_audit, error_audit_mc, run_confident, ConfidentConfig};
use crate::error::{invalid, Error, Result};
use crate::problem_file::ProblemFile;
use crate::problem_gen::{gen_interval, gen_linear, gen_quadratic, GeneratedProblem, LinearParams, QuadraticParams};
use crate::solver::{format_f64, run_pfm, CoverageTarget, RunConfig, RunTrace, SolverRng};

/// Where the problem comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSource {
    /// A problem file with `x0` and `metadata`. Relative paths resolve
    /// against the spec file's directory.
    File { path: PathBuf },
    Linear {
        params: LinearParams,
        #[serde(default)]
        seed: u64,
    },
    Interval { lo: f64, hi: f64, x0: f64 },
    Quadratic {
        params: QuadraticParams,
        #[serde(default)]
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "config", rename_all = "snake_case")]
pub enum SolverSpec {
    Pfm(RunConfig),
    Confident(ConfidentConfig),
}

/// How a PolyakFM run decides it reached a target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetStop {
    /// Exact coverage `P(Ω(x, eps)) ≥ 1 − gamma`; finite families only.
    #[default]
    Coverage,
    /// `ε_{k−1} ≤ eps`.
    Residual,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Target {
    pub eps: f64,
    /// Required for PolyakFM; confidentPFM uses its own `gamma`.
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub stop: TargetStop,
    /// Attach the growth bound; needs growth metadata on the problem.
    #[serde(default)]
    pub use_growth: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: PathBuf,
    #[serde(default = "default_prefix")]
    pub prefix: String,
}

fn default_prefix() -> String {
    "experiment".into()
}

fn default_audit_trials() -> u64 {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub problem: ProblemSource,
    pub solver: SolverSpec,
    pub replications: u64,
    /// Replication `r` runs with seed `seed + r`; the solver config's own
    /// seed is ignored.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub targets: Vec<Target>,
    /// PolyakFM only: run every target once per batch size.
    #[serde(default)]
    pub batch_sizes: Option<Vec<usize>>,
    /// Monte-Carlo trials per pair when auditing a parametric family.
    #[serde(default = "default_audit_trials")]
    pub audit_trials: u64,
    #[serde(default)]
    pub output: Option<OutputSpec>,
}

/// A schema violation with the dotted path of the offending field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SpecError {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for SpecError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.path.is_empty() || self.path == "." {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

/// Parses and checks a spec, reporting every violation found.
pub fn validate_spec(raw: &str) -> std::result::Result<ExperimentSpec, Vec<SpecError>> {
    let de = &mut serde_json::Deserializer::from_str(raw);
    let spec: ExperimentSpec = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let message = match inner.classify() {
            serde_json::error::Category::Data => strip_position(&inner.to_string()),
            _ => inner.to_string(),
        };
        vec![SpecError { path, message }]
    })?;
    let errors = check_spec(&spec);
    if errors.is_empty() {
        Ok(spec)
    } else {
        Err(errors)
    }
}

fn strip_position(msg: &str) -> String {
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg.to_string(),
    }
}

fn unit_open(v: f64) -> bool {
    v > 0.0 && v < 1.0
}

fn check_spec(spec: &ExperimentSpec) -> Vec<SpecError> {
    let mut errors = Vec::new();
    let mut err = |path: &str, message: String| {
        errors.push(SpecError {
            path: path.to_string(),
            message,
        })
    };
    if spec.replications == 0 {
        err("replications", "must be at least 1".into());
    }
    if spec.audit_trials == 0 {
        err("audit_trials", "must be at least 1".into());
    }
    let (step, stop) = match &spec.solver {
        SolverSpec::Pfm(c) => {
            if c.batch_size == 0 {
                err("solver.config.batch_size", "must be at least 1".into());
            }
            (c.step, c.stop)
        }
        SolverSpec::Confident(c) => {
            if !unit_open(c.gamma) {
                err("solver.config.gamma", format!("{} is outside (0, 1)", c.gamma));
            }
            if !unit_open(c.alpha) {
                err("solver.config.alpha", format!("{} is outside (0, 1)", c.alpha));
            }
            (c.step, c.stop)
        }
    };
    if !(step.delta > 0.0 && step.delta < 2.0) {
        err("solver.config.step.delta", format!("{} is outside (0, 2)", step.delta));
    }
    if stop.max_iters == 0 {
        err("solver.config.stop.max_iters", "must be at least 1".into());
    }
    if let Some(t) = stop.residual_target {
        if t.is_nan() {
            err("solver.config.stop.residual_target", "must not be NaN".into());
        }
    }
    if let Some(c) = stop.coverage_target {
        if !unit_open(c.gamma) {
            err("solver.config.stop.coverage_target.gamma", format!("{} is outside (0, 1)", c.gamma));
        }
        if c.check_every == 0 {
            err("solver.config.stop.coverage_target.check_every", "must be at least 1".into());
        }
    }
    let is_pfm = matches!(spec.solver, SolverSpec::Pfm(_));
    for (i, t) in spec.targets.iter().enumerate() {
        if !t.eps.is_finite() {
            err(&format!("targets[{i}].eps"), "must be finite".into());
        }
        match (t.gamma, is_pfm) {
            (Some(g), _) if !unit_open(g) => {
                err(&format!("targets[{i}].gamma"), format!("{g} is outside (0, 1)"))
            }
            (None, true) if t.stop == TargetStop::Coverage || t.use_growth => {
                err(&format!("targets[{i}].gamma"), "missing field `gamma`".into())
            }
            _ => {}
        }
    }
    if let Some(sizes) = &spec.batch_sizes {
        if !is_pfm {
            err("batch_sizes", "only applies to the pfm solver".into());
        }
        if sizes.is_empty() {
            err("batch_sizes", "must not be empty".into());
        }
        for (i, &l) in sizes.iter().enumerate() {
            if l == 0 {
                err(&format!("batch_sizes[{i}]"), "must be at least 1".into());
            }
        }
    }
    if let ProblemSource::Interval { lo, hi, .. } = spec.problem {
        if !(lo <= hi) {
            err("problem.hi", format!("must be at least lo = {lo}"));
        }
    }
    errors
}

/// Builds the problem named by `source`.
pub fn load_problem(source: &ProblemSource, base_dir: &Path) -> Result<GeneratedProblem> {
    match source {
        ProblemSource::File { path } => {
            let path = if path.is_absolute() { path.clone() } else { base_dir.join(path) };
            ProblemFile::load(&path)?.generated()
        }
        ProblemSource::Linear { params, seed } => gen_linear(params, &mut SolverRng::seed_from_u64(*seed)),
        ProblemSource::Interval { lo, hi, x0 } => gen_interval(*lo, *hi, *x0),
        ProblemSource::Quadratic { params, seed } => gen_quadratic(params, &mut SolverRng::seed_from_u64(*seed)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReportBounds {
    pub lipschitz: f64,
    pub dist0: f64,
    pub ratio: f64,
    /// `N = ⌊(M·dist/ε)²⌋`.
    pub deterministic: u64,
    /// `E`, PolyakFM only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected_basic: Option<f64>,
    /// `E'`, PolyakFM with `use_growth` only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected_growth: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confident: Option<ConfidentBounds>,
}

/// Summary statistics; recomputable from the CSV rows of the group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub min: f64,
    pub q10: f64,
    pub median: f64,
    pub q90: f64,
    pub max: f64,
}

impl Summary {
    /// Linear-interpolation quantiles. `None` for an empty slice.
    pub fn of(values: &[f64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = if v.len() > 1 {
            v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let q = |p: f64| {
            let pos = p * (n - 1.0);
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
        };
        Some(Summary {
            count: v.len(),
            mean,
            std_dev: var.sqrt(),
            min: v[0],
            q10: q(0.1),
            median: q(0.5),
            q90: q(0.9),
            max: v[v.len() - 1],
        })
    }
}

/// One replication of one group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationRow {
    pub group: usize,
    pub replication: u64,
    pub seed: u64,
    /// PolyakFM batch size; `None` for the confident schedule.
    pub batch_size: Option<usize>,
    pub eps: Option<f64>,
    pub gamma: Option<f64>,
    pub iterations: u64,
    pub moves: usize,
    /// Moves taken at a residual above the group's `eps`.
    pub large_moves: usize,
    pub total_samples: u64,
    pub stop_reason: String,
    /// confidentPFM: first iteration with `ε_{k−1} ≤ eps`.
    pub reached: Option<u64>,
    /// confidentPFM: audited pairs flagged as errors.
    pub audit_errors: Option<usize>,
}

const CSV_HEADER: [&str; 13] = [
    "group",
    "replication",
    "seed",
    "batch_size",
    "eps",
    "gamma",
    "iterations",
    "moves",
    "large_moves",
    "total_samples",
    "stop_reason",
    "reached",
    "audit_errors",
];

impl ReplicationRow {
    fn record(&self) -> [String; 13] {
        let opt = |v: Option<String>| v.unwrap_or_default();
        [
            self.group.to_string(),
            self.replication.to_string(),
            self.seed.to_string(),
            opt(self.batch_size.map(|v| v.to_string())),
            opt(self.eps.map(format_f64)),
            opt(self.gamma.map(format_f64)),
            self.iterations.to_string(),
            self.moves.to_string(),
            self.large_moves.to_string(),
            self.total_samples.to_string(),
            self.stop_reason.clone(),
            opt(self.reached.map(|v| v.to_string())),
            opt(self.audit_errors.map(|v| v.to_string())),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupReport {
    pub index: usize,
    pub batch_size: Option<usize>,
    pub target: Option<Target>,
    pub bounds: Option<ReportBounds>,
    /// Iterations (PolyakFM) or iterations to reach `eps` (confidentPFM,
    /// reached runs only).
    pub iterations: Option<Summary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationFlag {
    pub name: String,
    pub group: Option<usize>,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProblemSummary {
    pub dimension: usize,
    pub finite_size: Option<usize>,
    pub lipschitz: Option<f64>,
    pub dist_upper: f64,
    pub dist_exact: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub spec: ExperimentSpec,
    pub problem: ProblemSummary,
    pub groups: Vec<GroupReport>,
    pub flags: Vec<ValidationFlag>,
    #[serde(skip)]
    pub rows: Vec<ReplicationRow>,
    pub metadata: serde_json::Value,
}

impl ExperimentReport {
    pub fn all_passed(&self) -> bool {
        self.flags.iter().all(|f| f.passed)
    }

    /// 0 when every flag passes, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.all_passed() {
            0
        } else {
            2
        }
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(CSV_HEADER)?;
        for row in &self.rows {
            out.write_record(row.record())?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes `<prefix>.csv` and `<prefix>.json` into `dir`.
    pub fn save(&self, dir: &Path, prefix: &str) -> Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir)?;
        let csv_path = dir.join(format!("{prefix}.csv"));
        let json_path = dir.join(format!("{prefix}.json"));
        self.write_csv(fs::File::create(&csv_path)?)?;
        fs::write(&json_path, self.to_json()? + "\n")?;
        Ok((csv_path, json_path))
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Thread cap for replications; `None` uses rayon's default.
    pub workers: Option<usize>,
    /// Directory for relative problem paths.
    pub base_dir: PathBuf,
}

struct Group {
    batch_size: Option<usize>,
    target: Option<Target>,
}

fn groups_for(spec: &ExperimentSpec) -> Vec<Group> {
    let targets: Vec<Option<Target>> = if spec.targets.is_empty() {
        vec![None]
    } else {
        spec.targets.iter().copied().map(Some).collect()
    };
    match &spec.solver {
        SolverSpec::Pfm(c) => {
            let sizes = spec.batch_sizes.clone().unwrap_or_else(|| vec![c.batch_size]);
            sizes
                .iter()
                .flat_map(|&l| {
                    targets.iter().map(move |&t| Group {
                        batch_size: Some(l),
                        target: t,
                    })
                })
                .collect()
        }
        SolverSpec::Confident(_) => targets
            .into_iter()
            .map(|t| Group {
                batch_size: None,
                target: t,
            })
            .collect(),
    }
}

/// The eps a group is judged against: the target's, or the stop rule's
/// residual target.
fn group_eps(spec: &ExperimentSpec, group: &Group) -> Option<f64> {
    group.target.map(|t| t.eps).or(match &spec.solver {
        SolverSpec::Pfm(c) => c.stop.residual_target,
        SolverSpec::Confident(c) => c.stop.residual_target,
    })
}

fn group_bounds(spec: &ExperimentSpec, problem: &GeneratedProblem, group: &Group) -> Result<Option<ReportBounds>> {
    let (Some(m), Some(eps)) = (problem.lipschitz(), group_eps(spec, group)) else {
        return Ok(None);
    };
    let use_growth = group.target.is_some_and(|t| t.use_growth);
    let growth = match (use_growth, &problem.growth) {
        (true, None) => {
            return Err(invalid(
                "targets.use_growth",
                "growth bound requested but the problem has no growth metadata",
            ))
        }
        (true, Some(g)) => Some(g),
        (false, _) => None,
    };
    let dist0 = problem.dist0();
    match &spec.solver {
        SolverSpec::Pfm(_) => {
            let gamma = group.target.and_then(|t| t.gamma);
            let l = group.batch_size.unwrap_or(1) as u64;
            // Γ only enters E; a residual-only group still gets N.
            let inputs = BoundInputs::new(m, dist0, eps, gamma.unwrap_or(0.5), l)?;
            let expected_basic = gamma.map(|_| expected_iters_basic(&inputs)).transpose()?;
            let expected_growth = growth.map(|g| expected_iters_growth(&inputs, g)).transpose()?;
            Ok(Some(ReportBounds {
                lipschitz: m,
                dist0,
                ratio: inputs.ratio(),
                deterministic: inputs.deterministic_budget(),
                expected_basic,
                expected_growth,
                confident: None,
            }))
        }
        SolverSpec::Confident(c) => {
            let inputs = BoundInputs::new(m, dist0, eps, c.gamma, 1)?;
            Ok(Some(ReportBounds {
                lipschitz: m,
                dist0,
                ratio: inputs.ratio(),
                deterministic: inputs.deterministic_budget(),
                expected_basic: None,
                expected_growth: None,
                confident: Some(confident_iter_bounds(&inputs, growth)?),
            }))
        }
    }
}

fn large_moves(trace: &RunTrace, eps: Option<f64>) -> usize {
    let eps = eps.unwrap_or(0.0);
    trace.records.iter().filter(|r| r.moved && r.residual > eps).count()
}

fn run_pfm_group(
    spec: &ExperimentSpec,
    base: &RunConfig,
    problem: &GeneratedProblem,
    group_index: usize,
    group: &Group,
    replication: u64,
) -> Result<ReplicationRow> {
    let seed = spec.seed.wrapping_add(replication);
    let mut config = base.clone();
    config.seed = seed;
    if let Some(l) = group.batch_size {
        config.batch_size = l;
    }
    if let Some(t) = group.target {
        match t.stop {
            TargetStop::Coverage => {
                config.stop.coverage_target = Some(CoverageTarget {
                    eps: t.eps,
                    gamma: t.gamma.ok_or_else(|| invalid("gamma", "coverage targets need gamma"))?,
                    check_every: 1,
                });
                config.stop.residual_target = None;
            }
            TargetStop::Residual => {
                config.stop.residual_target = Some(t.eps);
                config.stop.coverage_target = None;
            }
        }
    }
    let trace = run_pfm(&problem.family, &problem.x0, &config)?;
    let eps = group_eps(spec, group);
    Ok(ReplicationRow {
        group: group_index,
        replication,
        seed,
        batch_size: Some(config.batch_size),
        eps,
        gamma: group.target.and_then(|t| t.gamma),
        iterations: trace.iterations,
        moves: trace.moves(),
        large_moves: large_moves(&trace, eps),
        total_samples: trace.total_samples,
        stop_reason: trace.stop_reason.as_str().to_string(),
        reached: None,
        audit_errors: None,
    })
}

fn run_confident_replication(
    spec: &ExperimentSpec,
    base: &ConfidentConfig,
    problem: &GeneratedProblem,
    groups: &[Group],
    replication: u64,
) -> Result<Vec<ReplicationRow>> {
    let seed = spec.seed.wrapping_add(replication);
    let mut config = base.clone();
    config.seed = seed;
    let run = run_confident(&problem.family, &problem.x0, &config)?;
    let audit = if problem.family.is_finite() {
        error_audit(&run.pairs, &problem.family, config.gamma)?
    } else {
        // Offset so audit draws do not replay the solver's stream.
        let mut rng = SolverRng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        error_audit_mc(&run.pairs, &problem.family, config.gamma, spec.audit_trials, &mut rng)?
    };
    Ok(groups
        .iter()
        .enumerate()
        .map(|(gi, group)| {
            let eps = group_eps(spec, group);
            ReplicationRow {
                group: gi,
                replication,
                seed,
                batch_size: None,
                eps,
                gamma: Some(config.gamma),
                iterations: run.trace.iterations,
                moves: run.trace.moves(),
                large_moves: large_moves(&run.trace, eps),
                total_samples: run.trace.total_samples,
                stop_reason: run.trace.stop_reason.as_str().to_string(),
                reached: eps.and_then(|e| run.first_iteration_reaching(e)),
                audit_errors: Some(audit.errors),
            }
        })
        .collect())
}

fn in_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w.max(1))
                .build()
                .map_err(|e| invalid("workers", e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// Runs every replication of every group and assembles the report.
pub fn run_experiment(spec: &ExperimentSpec, options: &RunOptions) -> Result<ExperimentReport> {
    let problems = check_spec(spec);
    if let Some(e) = problems.first() {
        return Err(invalid("spec", e.to_string()));
    }
    let problem = load_problem(&spec.problem, &options.base_dir)?;
    let groups = groups_for(spec);
    let bounds = groups
        .iter()
        .map(|g| group_bounds(spec, &problem, g))
        .collect::<Result<Vec<_>>>()?;
    let reps: Vec<u64> = (0..spec.replications).collect();

    let mut rows: Vec<ReplicationRow> = match &spec.solver {
        SolverSpec::Pfm(base) => {
            base.validate(&problem.family)?;
            let jobs: Vec<(usize, u64)> = (0..groups.len())
                .flat_map(|g| reps.iter().map(move |&r| (g, r)))
                .collect();
            in_pool(options.workers, || {
                jobs.par_iter()
                    .map(|&(g, r)| run_pfm_group(spec, base, &problem, g, &groups[g], r))
                    .collect::<Result<Vec<_>>>()
            })??
        }
        SolverSpec::Confident(base) => {
            base.validate(&problem.family)?;
            let per_rep = in_pool(options.workers, || {
                reps.par_iter()
                    .map(|&r| run_confident_replication(spec, base, &problem, &groups, r))
                    .collect::<Result<Vec<_>>>()
            })??;
            per_rep.into_iter().flatten().collect()
        }
    };
    rows.sort_by_key(|r| (r.group, r.replication));

    let group_reports: Vec<GroupReport> = groups
        .iter()
        .enumerate()
        .map(|(gi, g)| {
            let values: Vec<f64> = rows
                .iter()
                .filter(|r| r.group == gi)
                .filter_map(|r| match spec.solver {
                    SolverSpec::Pfm(_) => Some(r.iterations as f64),
                    SolverSpec::Confident(_) => r.reached.map(|v| v as f64),
                })
                .collect();
            GroupReport {
                index: gi,
                batch_size: g.batch_size,
                target: g.target,
                bounds: bounds[gi],
                iterations: Summary::of(&values),
            }
        })
        .collect();

    let flags = validation_flags(spec, &group_reports, &rows);
    let generated_at = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    Ok(ExperimentReport {
        spec: spec.clone(),
        problem: ProblemSummary {
            dimension: problem.family.dimension(),
            finite_size: problem.family.finite_size(),
            lipschitz: problem.lipschitz(),
            dist_upper: problem.dist_upper,
            dist_exact: problem.dist_exact,
        },
        groups: group_reports,
        flags,
        rows,
        metadata: serde_json::json!({
            "generated_at_unix": generated_at,
            "crate_version": env!("CARGO_PKG_VERSION"),
            "workers": options.workers,
        }),
    })
}

fn validation_flags(spec: &ExperimentSpec, groups: &[GroupReport], rows: &[ReplicationRow]) -> Vec<ValidationFlag> {
    let mut flags = Vec::new();
    let step = match &spec.solver {
        SolverSpec::Pfm(c) => c.step,
        SolverSpec::Confident(c) => c.step,
    };
    let rows_of = |gi: usize| rows.iter().filter(move |r| r.group == gi);

    for g in groups {
        let Some(b) = g.bounds else { continue };
        // Each move at a residual above eps shrinks dist² by at least
        // δ(2−δ)(eps/M)², so their count is capped deterministically.
        let cap = (b.ratio * b.ratio / step.decrease_factor()).floor() as usize;
        let worst = rows_of(g.index).map(|r| r.large_moves).max().unwrap_or(0);
        flags.push(ValidationFlag {
            name: "move_budget".into(),
            group: Some(g.index),
            passed: worst <= cap,
            detail: format!("max large moves {worst}, budget {cap}"),
        });

        if let Some(s) = g.iterations {
            if let Some(e) = b.expected_basic {
                let coverage = g.target.is_some_and(|t| t.stop == TargetStop::Coverage);
                if coverage {
                    flags.push(ValidationFlag {
                        name: "expected_iterations".into(),
                        group: Some(g.index),
                        passed: s.mean <= e,
                        detail: format!("mean {} vs E {}", s.mean, e),
                    });
                }
            }
            if let Some(e) = b.expected_growth {
                flags.push(ValidationFlag {
                    name: "expected_iterations_growth".into(),
                    group: Some(g.index),
                    passed: s.mean <= e,
                    detail: format!("mean {} vs E' {}", s.mean, e),
                });
            }
        }

        if let Some(cb) = b.confident {
            let mut violations = 0;
            let mut checked = 0;
            for r in rows_of(g.index).filter(|r| r.audit_errors == Some(0)) {
                if let Some(k) = r.reached {
                    checked += 1;
                    let over_growth = cb.growth.is_some_and(|gb| k as f64 > gb);
                    if k > cb.basic || over_growth {
                        violations += 1;
                    }
                }
            }
            flags.push(ValidationFlag {
                name: "confident_iteration_bound".into(),
                group: Some(g.index),
                passed: violations == 0,
                detail: format!("{violations} of {checked} error-free runs exceed the bound {}", cb.basic),
            });
        }
    }

    if let SolverSpec::Confident(c) = &spec.solver {
        let runs: Vec<&ReplicationRow> = rows.iter().filter(|r| r.group == 0).collect();
        let n = runs.len() as f64;
        let bad = runs.iter().filter(|r| r.audit_errors.unwrap_or(0) > 0).count();
        let allowed = c.alpha * n + 3.0 * (n * c.alpha * (1.0 - c.alpha)).sqrt();
        flags.push(ValidationFlag {
            name: "confidence".into(),
            group: None,
            passed: bad as f64 <= allowed,
            detail: format!("{bad} of {} runs with audit errors, allowed {allowed:.2}", runs.len()),
        });
    }

    if let Some(sizes) = &spec.batch_sizes {
        scaling_flags(spec, sizes, groups, &mut flags);
    }
    flags
}

/// Mean-iteration ratio between the first batch size and each larger one
/// should sit within a factor of two of the size ratio, as long as the batch
/// stays at or below `1/Γ`.
fn scaling_flags(spec: &ExperimentSpec, sizes: &[usize], groups: &[GroupReport], flags: &mut Vec<ValidationFlag>) {
    let n_targets = spec.targets.len().max(1);
    for ti in 0..n_targets {
        let Some(t) = spec.targets.get(ti) else { continue };
        let (Some(gamma), TargetStop::Coverage) = (t.gamma, t.stop) else { continue };
        let base_group = &groups[ti];
        let Some(base) = base_group.iterations else { continue };
        for (si, &l) in sizes.iter().enumerate().skip(1) {
            if l as f64 > 1.0 / gamma {
                continue;
            }
            let g = &groups[si * n_targets + ti];
            let Some(s) = g.iterations else { continue };
            let k = l as f64 / sizes[0] as f64;
            let ratio = base.mean / s.mean;
            flags.push(ValidationFlag {
                name: "batch_scaling".into(),
                group: Some(g.index),
                passed: ratio >= k / 2.0 && ratio <= 2.0 * k,
                detail: format!("L={} vs L={l}: ratio {ratio:.3}, expected [{}, {}]", sizes[0], k / 2.0, 2.0 * k),
            });
        }
    }
}

/// Loads and validates a spec file; relative problem paths resolve against
/// its directory.
pub fn load_spec(path: &Path) -> std::result::Result<ExperimentSpec, Vec<SpecError>> {
    let text = fs::read_to_string(path).map_err(|e| {
        vec![SpecError {
            path: String::new(),
            message: format!("cannot read {}: {e}", path.display()),
        }]
    })?;
    validate_spec(&text)
}

impl From<Vec<SpecError>> for Error {
    fn from(errors: Vec<SpecError>) -> Self {
        let joined = errors.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; ");
        Error::InvalidParameter {
            name: "spec",
            detail: joined,
        }
    }
}
