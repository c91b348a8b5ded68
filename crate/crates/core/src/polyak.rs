//! The single Polyak step, its extrapolated variant, and projection onto a
//! simple closed convex region.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::vector::{axpy, dist_sq, norm_sq};

/// Slack used by [`check_decrease`].
pub const DECREASE_SLACK: f64 = 1e-9;

/// Extrapolation factor `δ ∈ (0, 2)` applied to the Polyak step length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepParams {
    #[serde(default = "default_delta")]
    pub delta: f64,
}

fn default_delta() -> f64 {
    1.0
}

impl Default for StepParams {
    fn default() -> Self {
        StepParams { delta: 1.0 }
    }
}

impl StepParams {
    pub fn new(delta: f64) -> Result<Self> {
        let p = StepParams { delta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.delta > 0.0 && self.delta < 2.0 {
            Ok(())
        } else {
            Err(invalid("delta", format!("{} is outside (0, 2)", self.delta)))
        }
    }

    /// `δ(2 − δ)`, the fraction of the exact-step decrease retained.
    pub fn decrease_factor(&self) -> f64 {
        self.delta * (2.0 - self.delta)
    }
}

/// Region `Y` the iterates are projected onto after each step.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProjectionRegion {
    #[default]
    None,
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

impl ProjectionRegion {
    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            ProjectionRegion::None => Ok(()),
            ProjectionRegion::Box { lo, hi } => {
                if lo.len() != n || hi.len() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        got: if lo.len() != n { lo.len() } else { hi.len() },
                    });
                }
                if lo.iter().zip(hi).any(|(l, h)| !(l <= h)) {
                    return Err(invalid("region", "box needs lo <= hi in every coordinate"));
                }
                Ok(())
            }
            ProjectionRegion::Ball { center, radius } => {
                if center.len() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        got: center.len(),
                    });
                }
                if !(radius.is_finite() && *radius >= 0.0) {
                    return Err(invalid("region", "ball radius must be finite and nonnegative"));
                }
                Ok(())
            }
        }
    }
}

/// One Polyak step on `h` at `x`, given `value = h(x)` and `g ∈ ∂h(x)`.
///
/// Returns `x` unchanged when `value <= 0`. A positive value with a zero
/// subgradient means `h` has a positive minimum, which is reported as
/// [`Error::InfeasibleConstraint`].
pub fn polyak_step(x: &[f64], value: f64, g: &[f64], params: StepParams) -> Result<Vec<f64>> {
    let mut out = x.to_vec();
    polyak_step_in_place(&mut out, value, g, params)?;
    Ok(out)
}

/// In-place form of [`polyak_step`]. Returns whether the point moved.
pub fn polyak_step_in_place(x: &mut [f64], value: f64, g: &[f64], params: StepParams) -> Result<bool> {
    if g.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: g.len(),
        });
    }
    if value <= 0.0 {
        return Ok(false);
    }
    let gg = norm_sq(g);
    if gg == 0.0 {
        return Err(Error::InfeasibleConstraint { value });
    }
    axpy(-params.delta * value / gg, g, x);
    Ok(true)
}

/// Test oracle for the per-step decrease inequality
/// `||x₊ − z||² ≤ ||x − z||² − δ(2−δ)(value/||g||)²`, with slack
/// [`DECREASE_SLACK`].
pub fn check_decrease(x: &[f64], x_plus: &[f64], z: &[f64], value: f64, g: &[f64], delta: f64) -> bool {
    let ratio_sq = value * value / norm_sq(g);
    dist_sq(x_plus, z) <= dist_sq(x, z) - delta * (2.0 - delta) * ratio_sq + DECREASE_SLACK
}

/// Euclidean projection onto `region`.
pub fn project(region: &ProjectionRegion, x: &[f64]) -> Vec<f64> {
    let mut out = x.to_vec();
    project_in_place(region, &mut out);
    out
}

pub fn project_in_place(region: &ProjectionRegion, x: &mut [f64]) {
    match region {
        ProjectionRegion::None => {}
        ProjectionRegion::Box { lo, hi } => {
            for ((xi, l), h) in x.iter_mut().zip(lo).zip(hi) {
                *xi = xi.clamp(*l, *h);
            }
        }
        ProjectionRegion::Ball { center, radius } => {
            let d = dist_sq(x, center).sqrt();
            if d > *radius {
                let s = radius / d;
                for (xi, ci) in x.iter_mut().zip(center) {
                    *xi = ci + s * (*xi - ci);
                }
            }
        }
    }
}
