//! PolyakFM: per iteration draw a minibatch, take the sample-maximum
//! residual, and make one Polyak step on the maximizing constraint.
//!
//! The algorithm itself never halts; [`StopRule`] is harness-level and only
//! decides when the driver stops calling [`pfm_iterate`].

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::certification::meets_coverage;
use crate::error::{invalid, Error, Result};
use crate::family::{ConstraintFamily, ReplacementMode, Sample};
use crate::polyak::{polyak_step_in_place, project_in_place, ProjectionRegion, StepParams};

/// Random stream used by every solver. Seeded per run.
pub type SolverRng = ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct SolverState {
    /// Current iterate `x_k`.
    pub x: Vec<f64>,
    /// `ε_{k−1}`, the sample maximum computed in the last iteration.
    pub last_residual: Option<f64>,
    pub k: u64,
    pub rng: SolverRng,
}

impl SolverState {
    pub fn new(x0: Vec<f64>, seed: u64) -> Self {
        SolverState {
            x: x0,
            last_residual: None,
            k: 0,
            rng: SolverRng::seed_from_u64(seed),
        }
    }
}

/// Stop once exact coverage `P(Ω(x_k, eps)) ≥ 1 − gamma`, checked every
/// `check_every` iterations (and at `x₀`). Finite families only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageTarget {
    pub eps: f64,
    pub gamma: f64,
    #[serde(default = "one")]
    pub check_every: u64,
}

fn one() -> u64 {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StopRule {
    pub max_iters: u64,
    /// Stop when `ε_{k−1} ≤ residual_target`.
    #[serde(default)]
    pub residual_target: Option<f64>,
    #[serde(default)]
    pub coverage_target: Option<CoverageTarget>,
}

impl StopRule {
    pub fn max_iters(max_iters: u64) -> Self {
        StopRule {
            max_iters,
            residual_target: None,
            coverage_target: None,
        }
    }

    pub fn with_residual_target(mut self, target: f64) -> Self {
        self.residual_target = Some(target);
        self
    }

    pub fn with_coverage_target(mut self, eps: f64, gamma: f64, check_every: u64) -> Self {
        self.coverage_target = Some(CoverageTarget {
            eps,
            gamma,
            check_every,
        });
        self
    }

    pub(crate) fn validate(&self, family: &ConstraintFamily) -> Result<()> {
        if self.max_iters == 0 {
            return Err(invalid("max_iters", "must be at least 1"));
        }
        if let Some(t) = self.residual_target {
            if t.is_nan() {
                return Err(invalid("residual_target", "must not be NaN"));
            }
        }
        if let Some(c) = &self.coverage_target {
            if !family.is_finite() {
                return Err(Error::NotFinite);
            }
            if !(c.gamma > 0.0 && c.gamma < 1.0) {
                return Err(invalid("gamma", format!("{} is outside (0, 1)", c.gamma)));
            }
            if c.check_every == 0 {
                return Err(invalid("check_every", "must be at least 1"));
            }
        }
        Ok(())
    }
}

/// Which iterates the trace keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SnapshotPolicy {
    EveryStep,
    Every { period: u64 },
    #[default]
    FinalOnly,
}

impl SnapshotPolicy {
    fn keeps(&self, k: u64) -> bool {
        match *self {
            SnapshotPolicy::EveryStep => true,
            SnapshotPolicy::Every { period } => period > 0 && k.is_multiple_of(period),
            SnapshotPolicy::FinalOnly => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub batch_size: usize,
    #[serde(default)]
    pub mode: ReplacementMode,
    #[serde(default)]
    pub step: StepParams,
    #[serde(default)]
    pub region: ProjectionRegion,
    pub stop: StopRule,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub snapshots: SnapshotPolicy,
}

impl RunConfig {
    pub fn new(batch_size: usize, stop: StopRule, seed: u64) -> Self {
        RunConfig {
            batch_size,
            mode: ReplacementMode::With,
            step: StepParams::default(),
            region: ProjectionRegion::None,
            stop,
            seed,
            snapshots: SnapshotPolicy::FinalOnly,
        }
    }

    pub fn validate(&self, family: &ConstraintFamily) -> Result<()> {
        if self.batch_size == 0 {
            return Err(invalid("batch_size", "must be at least 1"));
        }
        if self.mode == ReplacementMode::Without {
            match family.finite_size() {
                None => return Err(invalid("mode", "sampling without replacement needs a finite family")),
                Some(m) if self.batch_size > m => {
                    return Err(invalid("batch_size", format!("{} exceeds family size {m}", self.batch_size)))
                }
                _ => {}
            }
        }
        self.step.validate()?;
        self.region.validate(family.dimension())?;
        self.stop.validate(family)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIters,
    ResidualTarget,
    CoverageTarget,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::MaxIters => "max_iters",
            StopReason::ResidualTarget => "residual_target",
            StopReason::CoverageTarget => "coverage_target",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// Iteration number `k ≥ 1`; this iteration computed `ε_{k−1}` and `x_k`.
    pub k: u64,
    /// `ε_{k−1}`.
    pub residual: f64,
    /// Position `ℓ_k` of the maximizing sample within the batch.
    pub chosen: usize,
    /// Index of the maximizing constraint when `Ω` is finite.
    pub sample_index: Option<usize>,
    pub moved: bool,
    pub batch_size: usize,
    pub cumulative_samples: u64,
    /// `x_k`, kept according to the snapshot policy.
    pub x: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub x0: Vec<f64>,
    pub records: Vec<IterationRecord>,
    pub final_x: Vec<f64>,
    pub iterations: u64,
    pub stop_reason: StopReason,
    pub total_samples: u64,
}

impl RunTrace {
    pub fn moves(&self) -> usize {
        self.records.iter().filter(|r| r.moved).count()
    }

    /// CSV with columns `k,residual,moved,stop_reason`; the stop reason is
    /// written on the last row only.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["k", "residual", "moved", "stop_reason"])?;
        let last = self.records.len();
        for (i, r) in self.records.iter().enumerate() {
            let reason = if i + 1 == last { self.stop_reason.as_str() } else { "" };
            out.write_record([
                r.k.to_string(),
                format_f64(r.residual),
                r.moved.to_string(),
                reason.to_string(),
            ])?;
        }
        if last == 0 {
            out.write_record(["0", "", "false", self.stop_reason.as_str()])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Shortest round-trip representation, so CSV output is byte-stable.
pub(crate) fn format_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Outcome of one iteration on a drawn batch.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct StepOutcome {
    pub residual: f64,
    pub chosen: usize,
    pub sample_index: Option<usize>,
    pub moved: bool,
}

/// Draws `batch_size` samples at `state.x`, picks the maximizer (lowest batch
/// position on ties) and steps.
pub(crate) fn step_with_batch(
    state: &mut SolverState,
    family: &ConstraintFamily,
    batch_size: usize,
    mode: ReplacementMode,
    step: StepParams,
    region: &ProjectionRegion,
) -> Result<StepOutcome> {
    let batch = family.sample_batch(&mut state.rng, batch_size, mode)?;
    let mut best = f64::NEG_INFINITY;
    let mut chosen = 0;
    for (pos, s) in batch.samples.iter().enumerate() {
        let v = family.resolve(s)?.value(&state.x);
        if v > best || pos == 0 {
            best = v;
            chosen = pos;
        }
    }
    if best.is_nan() {
        return Err(invalid("residual", "constraint evaluated to NaN"));
    }
    let sample = &batch.samples[chosen];
    let mut moved = false;
    if best > 0.0 {
        let g = family.resolve(sample)?.subgradient(&state.x);
        moved = polyak_step_in_place(&mut state.x, best, &g, step)?;
    }
    if !matches!(region, ProjectionRegion::None) {
        let before = state.x.clone();
        project_in_place(region, &mut state.x);
        moved |= before != state.x;
    }
    state.last_residual = Some(best);
    state.k += 1;
    Ok(StepOutcome {
        residual: best,
        chosen,
        sample_index: match sample {
            Sample::Index(i) => Some(*i),
            Sample::Instance(_) => None,
        },
        moved,
    })
}

/// One PolyakFM iteration: advances `state` from `x_{k−1}` to `x_k`.
pub fn pfm_iterate(state: &mut SolverState, family: &ConstraintFamily, config: &RunConfig) -> Result<()> {
    if state.x.len() != family.dimension() {
        return Err(Error::DimensionMismatch {
            expected: family.dimension(),
            got: state.x.len(),
        });
    }
    step_with_batch(state, family, config.batch_size, config.mode, config.step, &config.region)?;
    Ok(())
}

/// Shared driver for PolyakFM and confidentPFM. `batch_for(k)` gives the
/// batch size of iteration `k`; `on_iter` sees `x_{k−1}` and the outcome.
pub(crate) struct Driver<'a> {
    pub family: &'a ConstraintFamily,
    pub mode: ReplacementMode,
    pub step: StepParams,
    pub region: &'a ProjectionRegion,
    pub stop: &'a StopRule,
    pub snapshots: SnapshotPolicy,
    pub seed: u64,
}

impl Driver<'_> {
    pub fn run(
        &self,
        x0: &[f64],
        batch_for: impl Fn(u64) -> Result<usize>,
        mut on_iter: impl FnMut(u64, &[f64], &StepOutcome, usize),
    ) -> Result<RunTrace> {
        if x0.len() != self.family.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.family.dimension(),
                got: x0.len(),
            });
        }
        let mut state = SolverState::new(x0.to_vec(), self.seed);
        let mut records = Vec::new();
        let mut total_samples = 0u64;

        if let Some(c) = &self.stop.coverage_target {
            if meets_coverage(self.family, &state.x, c.eps, c.gamma)? {
                return Ok(RunTrace {
                    x0: x0.to_vec(),
                    records,
                    final_x: state.x,
                    iterations: 0,
                    stop_reason: StopReason::CoverageTarget,
                    total_samples,
                });
            }
        }

        let mut stop_reason = StopReason::MaxIters;
        while state.k < self.stop.max_iters {
            let k = state.k + 1;
            let batch = batch_for(k)?;
            let x_prev = state.x.clone();
            let outcome = step_with_batch(&mut state, self.family, batch, self.mode, self.step, self.region)?;
            total_samples += batch as u64;
            on_iter(k, &x_prev, &outcome, batch);
            records.push(IterationRecord {
                k,
                residual: outcome.residual,
                chosen: outcome.chosen,
                sample_index: outcome.sample_index,
                moved: outcome.moved,
                batch_size: batch,
                cumulative_samples: total_samples,
                x: self.snapshots.keeps(k).then(|| state.x.clone()),
            });

            if let Some(t) = self.stop.residual_target {
                if outcome.residual <= t {
                    stop_reason = StopReason::ResidualTarget;
                    break;
                }
            }
            if let Some(c) = &self.stop.coverage_target {
                if k.is_multiple_of(c.check_every) && meets_coverage(self.family, &state.x, c.eps, c.gamma)? {
                    stop_reason = StopReason::CoverageTarget;
                    break;
                }
            }
        }
        Ok(RunTrace {
            x0: x0.to_vec(),
            iterations: records.len() as u64,
            records,
            final_x: state.x,
            stop_reason,
            total_samples,
        })
    }
}

/// Runs PolyakFM from `x0` until the stop rule fires.
pub fn run_pfm(family: &ConstraintFamily, x0: &[f64], config: &RunConfig) -> Result<RunTrace> {
    config.validate(family)?;
    let driver = Driver {
        family,
        mode: config.mode,
        step: config.step,
        region: &config.region,
        stop: &config.stop,
        snapshots: config.snapshots,
        seed: config.seed,
    };
    driver.run(x0, |_| Ok(config.batch_size), |_, _, _, _| {})
}
