//! Constraint families `{f_ω : ω ∈ Ω}` together with the measure `P` on `Ω`.
//!
//! Two sample spaces are supported: a finite list of descriptors with the
//! uniform measure, and a parametric template whose coefficients are drawn
//! from a declared distribution (an infinite `Ω`). Families are immutable
//! after construction; random streams are always owned by the caller.

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::constraint::Constraint;
use crate::error::{invalid, Error, Result};
use crate::vector::{dot, norm};

/// Closed Euclidean ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

/// Noise applied coordinate-wise to the coefficients of a template.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoefficientDistribution {
    /// Uniform on `[-half_width, half_width]`.
    UniformBox { half_width: f64 },
    /// Centered normal with standard deviation `std`.
    Gaussian { std: f64 },
}

impl CoefficientDistribution {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            CoefficientDistribution::UniformBox { half_width } => {
                if half_width == 0.0 {
                    0.0
                } else {
                    rng.random_range(-half_width..=half_width)
                }
            }
            CoefficientDistribution::Gaussian { std } => {
                let z: f64 = StandardNormal.sample(rng);
                std * z
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            CoefficientDistribution::UniformBox { half_width } => {
                half_width.is_finite() && half_width >= 0.0
            }
            CoefficientDistribution::Gaussian { std } => std.is_finite() && std >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(invalid("distribution", "width must be finite and nonnegative"))
        }
    }
}

/// Template for an infinite sample space. Each draw instantiates one
/// catalog constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Template {
    /// `u . (x - center) - radius` with `u` uniform on the unit sphere. The
    /// feasible set of the whole family is exactly the ball.
    TangentHalfspace { center: Vec<f64>, radius: f64 },
    /// `(a + ξ) . x + (b + ξ')`, optionally rescaled so the normal has unit
    /// length.
    PerturbedAffine {
        a: Vec<f64>,
        b: f64,
        noise: CoefficientDistribution,
        #[serde(default)]
        normalize: bool,
    },
    /// `||x - (center + ξ)|| - radius`.
    PerturbedBall {
        center: Vec<f64>,
        radius: f64,
        noise: CoefficientDistribution,
    },
}

impl Template {
    fn dimension(&self) -> usize {
        match self {
            Template::TangentHalfspace { center, .. } => center.len(),
            Template::PerturbedAffine { a, .. } => a.len(),
            Template::PerturbedBall { center, .. } => center.len(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Template::TangentHalfspace { center, radius } => {
                if !radius.is_finite() || *radius < 0.0 || !center.iter().all(|v| v.is_finite()) {
                    return Err(invalid("template", "tangent halfspace needs a finite center and radius >= 0"));
                }
            }
            Template::PerturbedAffine { a, b, noise, normalize } => {
                noise.validate()?;
                if !b.is_finite() || !a.iter().all(|v| v.is_finite()) {
                    return Err(invalid("template", "non-finite affine coefficient"));
                }
                if *normalize && matches!(noise, CoefficientDistribution::UniformBox { .. }) && norm(a) == 0.0 {
                    return Err(invalid("template", "cannot normalize an affine template with zero base normal"));
                }
            }
            Template::PerturbedBall { center, radius, noise } => {
                noise.validate()?;
                if !radius.is_finite() || !center.iter().all(|v| v.is_finite()) {
                    return Err(invalid("template", "non-finite ball parameter"));
                }
            }
        }
        Ok(())
    }

    /// Draws one constraint instance.
    pub fn instantiate<R: Rng + ?Sized>(&self, rng: &mut R) -> Constraint {
        match self {
            Template::TangentHalfspace { center, radius } => {
                let u = random_unit_vector(center.len(), rng);
                let b = -dot(&u, center) - radius;
                Constraint::Affine { a: u, b }
            }
            Template::PerturbedAffine { a, b, noise, normalize } => {
                let mut a: Vec<f64> = a.iter().map(|v| v + noise.draw(rng)).collect();
                let mut b = b + noise.draw(rng);
                if *normalize {
                    let s = norm(&a);
                    if s > 0.0 {
                        a.iter_mut().for_each(|v| *v /= s);
                        b /= s;
                    }
                }
                Constraint::Affine { a, b }
            }
            Template::PerturbedBall { center, radius, noise } => Constraint::BallDistance {
                center: center.iter().map(|v| v + noise.draw(rng)).collect(),
                radius: *radius,
            },
        }
    }
}

/// Uniform direction on the unit sphere in `R^n`.
pub fn random_unit_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let s = norm(&v);
        if s > 1e-12 {
            return v.into_iter().map(|x| x / s).collect();
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SampleSpace {
    /// `Ω = {0, …, m-1}` with `P(i) = 1/m`.
    FiniteUniform(Vec<Constraint>),
    Parametric(Template),
}

/// One element `ω` of the sample space.
#[derive(Debug, Clone, PartialEq)]
pub enum Sample {
    Index(usize),
    Instance(Constraint),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplacementMode {
    #[default]
    With,
    Without,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub samples: Vec<Sample>,
    pub mode: ReplacementMode,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintFamily {
    dimension: usize,
    space: SampleSpace,
    lipschitz_bound: Option<f64>,
    working_ball: Option<Ball>,
}

impl ConstraintFamily {
    pub fn finite(dimension: usize, constraints: Vec<Constraint>) -> Result<Self> {
        if dimension == 0 {
            return Err(invalid("dimension", "must be positive"));
        }
        if constraints.is_empty() {
            return Err(invalid("constraints", "finite family needs at least one constraint"));
        }
        for c in &constraints {
            c.validate(dimension)?;
        }
        Ok(ConstraintFamily {
            dimension,
            space: SampleSpace::FiniteUniform(constraints),
            lipschitz_bound: None,
            working_ball: None,
        })
    }

    pub fn parametric(template: Template) -> Result<Self> {
        let dimension = template.dimension();
        if dimension == 0 {
            return Err(invalid("dimension", "must be positive"));
        }
        template.validate()?;
        Ok(ConstraintFamily {
            dimension,
            space: SampleSpace::Parametric(template),
            lipschitz_bound: None,
            working_ball: None,
        })
    }

    /// Declares `M`, valid on the given working ball (or globally when
    /// `ball` is `None`).
    pub fn with_lipschitz(mut self, bound: f64, ball: Option<Ball>) -> Result<Self> {
        if !(bound.is_finite() && bound > 0.0) {
            return Err(invalid("lipschitz_bound", "must be positive and finite"));
        }
        if let Some(b) = &ball {
            if b.center.len() != self.dimension {
                return Err(Error::DimensionMismatch {
                    expected: self.dimension,
                    got: b.center.len(),
                });
            }
            if !(b.radius.is_finite() && b.radius >= 0.0) {
                return Err(invalid("working_ball", "radius must be finite and nonnegative"));
            }
        }
        self.lipschitz_bound = Some(bound);
        self.working_ball = ball;
        Ok(self)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn space(&self) -> &SampleSpace {
        &self.space
    }

    pub fn lipschitz_bound(&self) -> Option<f64> {
        self.lipschitz_bound
    }

    pub fn working_ball(&self) -> Option<&Ball> {
        self.working_ball.as_ref()
    }

    /// The constraint list when `Ω` is finite.
    pub fn constraints(&self) -> Option<&[Constraint]> {
        match &self.space {
            SampleSpace::FiniteUniform(cs) => Some(cs),
            SampleSpace::Parametric(_) => None,
        }
    }

    pub fn finite_size(&self) -> Option<usize> {
        self.constraints().map(|c| c.len())
    }

    pub fn is_finite(&self) -> bool {
        self.constraints().is_some()
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Resolves `ω` to its constraint, checking membership.
    pub fn resolve<'a>(&'a self, sample: &'a Sample) -> Result<&'a Constraint> {
        match (&self.space, sample) {
            (SampleSpace::FiniteUniform(cs), Sample::Index(i)) => cs.get(*i).ok_or(Error::SampleOutOfRange {
                index: *i,
                size: cs.len(),
            }),
            (SampleSpace::Parametric(_), Sample::Instance(c)) => {
                c.validate(self.dimension)?;
                Ok(c)
            }
            _ => Err(Error::ForeignSample),
        }
    }

    /// `f_ω(x)`.
    pub fn evaluate(&self, sample: &Sample, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        Ok(self.resolve(sample)?.value(x))
    }

    /// The deterministic subgradient selection `g_ω(x)`.
    pub fn subgradient(&self, sample: &Sample, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        Ok(self.resolve(sample)?.subgradient(x))
    }

    /// Draws one `ω` from `P`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Sample {
        match &self.space {
            SampleSpace::FiniteUniform(cs) => Sample::Index(rng.random_range(0..cs.len())),
            SampleSpace::Parametric(t) => Sample::Instance(t.instantiate(rng)),
        }
    }

    /// Draws a minibatch of `size` samples.
    pub fn sample_batch<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        size: usize,
        mode: ReplacementMode,
    ) -> Result<SampleBatch> {
        if size == 0 {
            return Err(invalid("batch_size", "must be at least 1"));
        }
        let samples = match mode {
            ReplacementMode::With => (0..size).map(|_| self.draw(rng)).collect(),
            ReplacementMode::Without => {
                let m = self.finite_size().ok_or_else(|| {
                    invalid("mode", "sampling without replacement needs a finite family")
                })?;
                if size > m {
                    return Err(invalid(
                        "batch_size",
                        format!("{size} exceeds family size {m} for sampling without replacement"),
                    ));
                }
                index::sample(rng, m, size).into_iter().map(Sample::Index).collect()
            }
        };
        Ok(SampleBatch { samples, mode })
    }
}
