//! Coverage oracles for `P(Ω(x, ε))`, where `Ω(x, ε) = {ω : f_ω(x) ≤ ε}`.
//!
//! Coverage counts `f_ω(x) ≤ ε` inclusively.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::family::ConstraintFamily;

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageQuery {
    pub x: Vec<f64>,
    pub eps: f64,
    #[serde(default)]
    pub gamma: Option<f64>,
}

impl CoverageQuery {
    pub fn new(x: Vec<f64>, eps: f64) -> Self {
        CoverageQuery { x, eps, gamma: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageEstimate {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub trials: u64,
    pub hits: u64,
}

impl CoverageEstimate {
    /// Whether the point estimate reaches `1 − gamma`.
    pub fn meets(&self, gamma: f64) -> bool {
        self.estimate >= 1.0 - gamma
    }
}

/// Every residual `f_i(x)` of a finite family, in index order.
pub fn residuals(family: &ConstraintFamily, x: &[f64]) -> Result<Vec<f64>> {
    let cs = family.constraints().ok_or(Error::NotFinite)?;
    if x.len() != family.dimension() {
        return Err(Error::DimensionMismatch {
            expected: family.dimension(),
            got: x.len(),
        });
    }
    Ok(cs.iter().map(|c| c.value(x)).collect())
}

/// `max_ω f_ω(x)` over a finite family.
pub fn max_residual(family: &ConstraintFamily, x: &[f64]) -> Result<f64> {
    Ok(residuals(family, x)?.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

/// Exact `#{i : f_i(x) ≤ ε} / m` on a finite uniform family.
pub fn coverage_exact(family: &ConstraintFamily, query: &CoverageQuery) -> Result<f64> {
    let r = residuals(family, &query.x)?;
    let covered = r.iter().filter(|&&v| v <= query.eps).count();
    Ok(covered as f64 / r.len() as f64)
}

/// Monte-Carlo coverage from `trials` i.i.d. draws, with a Wilson-score 95%
/// interval.
pub fn coverage_mc<R: Rng + ?Sized>(
    family: &ConstraintFamily,
    query: &CoverageQuery,
    trials: u64,
    rng: &mut R,
) -> Result<CoverageEstimate> {
    if trials == 0 {
        return Err(invalid("trials", "must be at least 1"));
    }
    if query.x.len() != family.dimension() {
        return Err(Error::DimensionMismatch {
            expected: family.dimension(),
            got: query.x.len(),
        });
    }
    let mut hits = 0u64;
    for _ in 0..trials {
        let s = family.draw(rng);
        if family.resolve(&s)?.value(&query.x) <= query.eps {
            hits += 1;
        }
    }
    let (lower, upper) = wilson_interval(hits, trials, Z_95);
    Ok(CoverageEstimate {
        estimate: hits as f64 / trials as f64,
        lower,
        upper,
        trials,
        hits,
    })
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(hits: u64, trials: u64, z: f64) -> (f64, f64) {
    let n = trials as f64;
    let p = hits as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    // pin the endpoints exactly; rounding would otherwise exclude 0 or 1
    let lower = if hits == 0 { 0.0 } else { (center - half).max(0.0) };
    let upper = if hits == trials { 1.0 } else { (center + half).min(1.0) };
    (lower, upper)
}

/// Smallest `ε` with `P(Ω(x, ε)) ≥ 1 − Γ`: the `⌈(1 − Γ)m⌉`-th smallest
/// residual.
pub fn residual_quantile(family: &ConstraintFamily, x: &[f64], gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(invalid("gamma", format!("{gamma} is outside (0, 1)")));
    }
    let mut r = residuals(family, x)?;
    let m = r.len();
    let rank = required_count(m, gamma);
    r.sort_by(|a, b| a.total_cmp(b));
    Ok(r[rank - 1])
}

/// `⌈(1 − Γ)m⌉`, clamped to `[1, m]`.
///
/// The product is rounded before taking the ceiling so that e.g.
/// `(1 - 0.1) * 10` counts as exactly 9.
pub(crate) fn required_count(m: usize, gamma: f64) -> usize {
    let raw = (1.0 - gamma) * m as f64;
    let snapped = if (raw - raw.round()).abs() < 1e-9 { raw.round() } else { raw };
    (snapped.ceil() as usize).clamp(1, m)
}

/// Whether the exact coverage at `(x, eps)` reaches `1 − Γ`, without the
/// floating-point pitfalls of comparing a ratio against `1 − Γ`.
pub fn meets_coverage(family: &ConstraintFamily, x: &[f64], eps: f64, gamma: f64) -> Result<bool> {
    let r = residuals(family, x)?;
    let covered = r.iter().filter(|&&v| v <= eps).count();
    Ok(covered >= required_count(r.len(), gamma))
}
