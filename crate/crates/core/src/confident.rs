//! confidentPFM: PolyakFM with the growing batch schedule
//! `L_k = ⌈(1/Γ) ln(2k²/α)⌉`, which turns every computed pair `(x_k, ε_k)`
//! into a coverage certificate holding jointly with probability `1 − α`.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::certification::{coverage_mc, meets_coverage, residuals, CoverageQuery};
use crate::error::{invalid, Error, Result};
use crate::family::{ConstraintFamily, ReplacementMode};
use crate::polyak::{ProjectionRegion, StepParams};
use crate::solver::{format_f64, Driver, RunTrace, SnapshotPolicy, StopRule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfidentConfig {
    pub gamma: f64,
    pub alpha: f64,
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

impl ConfidentConfig {
    pub fn new(gamma: f64, alpha: f64, stop: StopRule, seed: u64) -> Self {
        ConfidentConfig {
            gamma,
            alpha,
            step: StepParams::default(),
            region: ProjectionRegion::None,
            stop,
            seed,
            snapshots: SnapshotPolicy::FinalOnly,
        }
    }

    pub fn validate(&self, family: &ConstraintFamily) -> Result<()> {
        check_gamma_alpha(self.gamma, self.alpha)?;
        self.step.validate()?;
        self.region.validate(family.dimension())?;
        self.stop.validate(family)
    }
}

fn check_gamma_alpha(gamma: f64, alpha: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(invalid("gamma", format!("{gamma} is outside (0, 1)")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid("alpha", format!("{alpha} is outside (0, 1)")));
    }
    Ok(())
}

/// `L_k = ⌈(1/Γ) ln(2k²/α)⌉`.
pub fn batch_size(gamma: f64, alpha: f64, k: u64) -> Result<usize> {
    check_gamma_alpha(gamma, alpha)?;
    if k == 0 {
        return Err(invalid("k", "iterations are numbered from 1"));
    }
    let k = k as f64;
    Ok(((2.0 * k * k / alpha).ln() / gamma).ceil() as usize)
}

/// Smallest `n` with `(1 − Γ)ⁿ ≤ α/(2k²)`. The schedule above never goes
/// below this.
pub fn minimal_batch_size(gamma: f64, alpha: f64, k: u64) -> Result<usize> {
    check_gamma_alpha(gamma, alpha)?;
    if k == 0 {
        return Err(invalid("k", "iterations are numbered from 1"));
    }
    let k = k as f64;
    let target = alpha / (2.0 * k * k);
    let mut n = ((2.0 * k * k / alpha).ln() / -(1.0 - gamma).ln()).ceil().max(1.0) as i32;
    // correct for rounding in the logarithms
    while n > 1 && (1.0 - gamma).powi(n - 1) <= target {
        n -= 1;
    }
    while (1.0 - gamma).powi(n) > target {
        n += 1;
    }
    Ok(n as usize)
}

/// `(x_k, ε_k)`: `eps` is the sample maximum of the batch drawn at `x` in
/// iteration `k + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifiedPair {
    pub x: Vec<f64>,
    pub eps: f64,
    pub k: u64,
    pub batch_size_used: usize,
    pub cumulative_samples: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidentRun {
    pub trace: RunTrace,
    pub pairs: Vec<CertifiedPair>,
}

impl ConfidentRun {
    /// Iteration at which `ε_{k−1} ≤ eps` was first computed.
    pub fn first_iteration_reaching(&self, eps: f64) -> Option<u64> {
        self.pairs.iter().find(|p| p.eps <= eps).map(|p| p.k + 1)
    }

    /// CSV with columns `k,eps,batch_size,cumulative_samples`.
    pub fn write_pairs_csv<W: Write>(&self, w: W) -> Result<()> {
        write_pairs_csv(&self.pairs, w)
    }
}

pub fn write_pairs_csv<W: Write>(pairs: &[CertifiedPair], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["k", "eps", "batch_size", "cumulative_samples"])?;
    for p in pairs {
        out.write_record([
            p.k.to_string(),
            format_f64(p.eps),
            p.batch_size_used.to_string(),
            p.cumulative_samples.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Runs confidentPFM from `x0` until the stop rule fires.
pub fn run_confident(family: &ConstraintFamily, x0: &[f64], config: &ConfidentConfig) -> Result<ConfidentRun> {
    config.validate(family)?;
    let driver = Driver {
        family,
        mode: ReplacementMode::With,
        step: config.step,
        region: &config.region,
        stop: &config.stop,
        snapshots: config.snapshots,
        seed: config.seed,
    };
    let mut pairs = Vec::new();
    let mut cumulative = 0u64;
    let trace = driver.run(
        x0,
        |k| batch_size(config.gamma, config.alpha, k),
        |k, x_prev, outcome, batch| {
            cumulative += batch as u64;
            pairs.push(CertifiedPair {
                x: x_prev.to_vec(),
                eps: outcome.residual,
                k: k - 1,
                batch_size_used: batch,
                cumulative_samples: cumulative,
            });
        },
    )?;
    Ok(ConfidentRun { trace, pairs })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub k: u64,
    pub eps: f64,
    pub coverage: f64,
    /// Wilson 95% interval, present for Monte-Carlo audits.
    pub interval: Option<(f64, f64)>,
    pub error: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub gamma: f64,
    pub exact: bool,
    pub pairs_checked: usize,
    pub errors: usize,
    pub first_error: Option<u64>,
    pub entries: Vec<AuditEntry>,
}

impl AuditReport {
    pub fn error_free(&self) -> bool {
        self.errors == 0
    }

    fn from_entries(gamma: f64, exact: bool, entries: Vec<AuditEntry>) -> Self {
        AuditReport {
            gamma,
            exact,
            pairs_checked: entries.len(),
            errors: entries.iter().filter(|e| e.error).count(),
            first_error: entries.iter().find(|e| e.error).map(|e| e.k),
            entries,
        }
    }
}

/// Exact audit on a finite family: a pair is an error when
/// `P(Ω(x, eps)) < 1 − Γ`.
pub fn error_audit(pairs: &[CertifiedPair], family: &ConstraintFamily, gamma: f64) -> Result<AuditReport> {
    if !family.is_finite() {
        return Err(Error::NotFinite);
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(invalid("gamma", format!("{gamma} is outside (0, 1)")));
    }
    let entries = pairs
        .iter()
        .map(|p| {
            let r = residuals(family, &p.x)?;
            let covered = r.iter().filter(|&&v| v <= p.eps).count();
            Ok(AuditEntry {
                k: p.k,
                eps: p.eps,
                coverage: covered as f64 / r.len() as f64,
                interval: None,
                error: !meets_coverage(family, &p.x, p.eps, gamma)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AuditReport::from_entries(gamma, true, entries))
}

/// Monte-Carlo audit for any family. A pair is flagged when the point
/// estimate falls below `1 − Γ`; the Wilson interval is reported alongside.
pub fn error_audit_mc<R: Rng + ?Sized>(
    pairs: &[CertifiedPair],
    family: &ConstraintFamily,
    gamma: f64,
    trials: u64,
    rng: &mut R,
) -> Result<AuditReport> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(invalid("gamma", format!("{gamma} is outside (0, 1)")));
    }
    let entries = pairs
        .iter()
        .map(|p| {
            let est = coverage_mc(family, &CoverageQuery::new(p.x.clone(), p.eps), trials, rng)?;
            Ok(AuditEntry {
                k: p.k,
                eps: p.eps,
                coverage: est.estimate,
                interval: Some((est.lower, est.upper)),
                error: !est.meets(gamma),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AuditReport::from_entries(gamma, false, entries))
}
