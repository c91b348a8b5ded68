//! JSON problem files.
//!
//! ```json
//! {
//!   "dimension": 2,
//!   "type": "finite",
//!   "constraints": [{"kind": "affine", "a": [1.0, 0.0], "b": -1.0}],
//!   "lipschitz_bound": 1.0,
//!   "x0": [5.0, 0.0],
//!   "metadata": {"feasible_witness": [0.0, 0.0], "dist_upper": 5.0}
//! }
//! ```
//!
//! Parametric files carry `"type": "parametric"` and a `template` instead of
//! `constraints`. The full schema is described in the repository README.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bounds::GrowthProfile;
use crate::constraint::Constraint;
use crate::error::{invalid, Error, Result};
use crate::family::{Ball, ConstraintFamily, SampleSpace, Template};
use crate::problem_gen::{FeasibleShape, GeneratedProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceKind {
    Finite,
    Parametric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemMetadata {
    pub feasible_witness: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interior_radius: Option<f64>,
    pub dist_upper: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dist_exact: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub growth: Option<GrowthProfile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<FeasibleShape>,
    /// Free-form notes, e.g. generator parameters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub dimension: usize,
    #[serde(rename = "type")]
    pub kind: SpaceKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraints: Option<Vec<Constraint>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<Template>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz_bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub working_ball: Option<Ball>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<ProblemMetadata>,
}

impl ProblemFile {
    pub fn from_family(family: &ConstraintFamily) -> Self {
        let (kind, constraints, template) = match family.space() {
            SampleSpace::FiniteUniform(cs) => (SpaceKind::Finite, Some(cs.clone()), None),
            SampleSpace::Parametric(t) => (SpaceKind::Parametric, None, Some(t.clone())),
        };
        ProblemFile {
            dimension: family.dimension(),
            kind,
            constraints,
            template,
            lipschitz_bound: family.lipschitz_bound(),
            working_ball: family.working_ball().cloned(),
            x0: None,
            metadata: None,
        }
    }

    pub fn from_generated(problem: &GeneratedProblem) -> Self {
        let mut file = ProblemFile::from_family(&problem.family);
        file.x0 = Some(problem.x0.clone());
        file.metadata = Some(ProblemMetadata {
            feasible_witness: problem.feasible_witness.clone(),
            interior_radius: Some(problem.interior_radius),
            dist_upper: problem.dist_upper,
            dist_exact: problem.dist_exact,
            growth: problem.growth,
            shape: problem.shape.clone(),
            notes: None,
        });
        file
    }

    /// Builds and validates the family.
    pub fn family(&self) -> Result<ConstraintFamily> {
        let family = match (self.kind, &self.constraints, &self.template) {
            (SpaceKind::Finite, Some(cs), None) => ConstraintFamily::finite(self.dimension, cs.clone())?,
            (SpaceKind::Parametric, None, Some(t)) => {
                let f = ConstraintFamily::parametric(t.clone())?;
                if f.dimension() != self.dimension {
                    return Err(Error::DimensionMismatch {
                        expected: self.dimension,
                        got: f.dimension(),
                    });
                }
                f
            }
            (SpaceKind::Finite, _, _) => {
                return Err(invalid("constraints", "finite problems need `constraints` and no `template`"))
            }
            (SpaceKind::Parametric, _, _) => {
                return Err(invalid("template", "parametric problems need `template` and no `constraints`"))
            }
        };
        match self.lipschitz_bound {
            Some(m) => family.with_lipschitz(m, self.working_ball.clone()),
            None if self.working_ball.is_some() => {
                Err(invalid("working_ball", "only meaningful together with lipschitz_bound"))
            }
            None => Ok(family),
        }
    }

    /// Rebuilds a [`GeneratedProblem`]; needs `x0` and `metadata`.
    pub fn generated(&self) -> Result<GeneratedProblem> {
        let family = self.family()?;
        let x0 = self.x0.clone().ok_or_else(|| invalid("x0", "missing"))?;
        let meta = self.metadata.clone().ok_or_else(|| invalid("metadata", "missing"))?;
        for v in [&x0, &meta.feasible_witness] {
            if v.len() != family.dimension() {
                return Err(Error::DimensionMismatch {
                    expected: family.dimension(),
                    got: v.len(),
                });
            }
        }
        if let (Some(e), u) = (meta.dist_exact, meta.dist_upper) {
            if e > u + 1e-12 {
                return Err(invalid("metadata.dist_exact", "exceeds dist_upper"));
            }
        }
        if let Some(g) = &meta.growth {
            g.validate()?;
        }
        Ok(GeneratedProblem {
            family,
            x0,
            feasible_witness: meta.feasible_witness,
            interior_radius: meta.interior_radius.unwrap_or(0.0),
            dist_upper: meta.dist_upper,
            dist_exact: meta.dist_exact,
            growth: meta.growth,
            shape: meta.shape,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }
}
