//! Generators for feasibility problems with known ground truth: a strictly
//! feasible witness, the distance from `x₀` to the feasible set (exact when
//! the construction pins it down, otherwise an upper bound), and declared
//! growth profiles where they are provable.
//!
//! Every generated problem has a feasible ball of positive radius around the
//! witness. The solvers do not need this; the metadata does.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::GrowthProfile;
use crate::certification::max_residual;
use crate::constraint::Constraint;
use crate::error::{invalid, Error, Result};
use crate::family::{random_unit_vector, Ball, ConstraintFamily};
use crate::vector::{dist, dot, norm};

/// Feasible-set shapes with a closed-form or enumerable distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FeasibleShape {
    Ball { center: Vec<f64>, radius: f64 },
    /// The intersection of the family's affine halfspaces, in one or two
    /// dimensions, where projection is done by enumeration.
    Polyhedron,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedProblem {
    pub family: ConstraintFamily,
    pub x0: Vec<f64>,
    /// `z*` with `f_ω(z*) ≤ 0` for every `ω`.
    pub feasible_witness: Vec<f64>,
    /// Radius of a ball around the witness contained in `X_Ω`.
    pub interior_radius: f64,
    /// `‖x₀ − z*‖` or a tighter certified bound on `dist(x₀, X_Ω)`.
    pub dist_upper: f64,
    pub dist_exact: Option<f64>,
    pub growth: Option<GrowthProfile>,
    pub shape: Option<FeasibleShape>,
}

impl GeneratedProblem {
    /// The best known value of `dist(x₀, X_Ω)`.
    pub fn dist0(&self) -> f64 {
        self.dist_exact.unwrap_or(self.dist_upper)
    }

    pub fn lipschitz(&self) -> Option<f64> {
        self.family.lipschitz_bound()
    }

    /// Checks the witness against every constraint of a finite family.
    pub fn verify_witness(&self) -> Result<bool> {
        Ok(max_residual(&self.family, &self.feasible_witness)? <= 0.0)
    }

    /// `dist(x, X_Ω)`: exact when the shape allows it, otherwise the upper
    /// bound `max(0, ‖x − z*‖ − r)` from the interior ball.
    pub fn distance_to_feasible(&self, x: &[f64]) -> f64 {
        self.exact_distance(x).unwrap_or_else(|| {
            (dist(x, &self.feasible_witness) - self.interior_radius).max(0.0)
        })
    }

    pub fn exact_distance(&self, x: &[f64]) -> Option<f64> {
        match self.shape.as_ref()? {
            FeasibleShape::Ball { center, radius } => Some((dist(x, center) - radius).max(0.0)),
            FeasibleShape::Polyhedron => polyhedron_distance(self.family.constraints()?, x),
        }
    }
}

/// Distance to `{x : a_i·x + b_i ≤ 0}` in one or two dimensions by
/// enumerating candidate nearest points (facet projections and vertices).
pub fn polyhedron_distance(constraints: &[Constraint], x: &[f64]) -> Option<f64> {
    let mut rows = Vec::with_capacity(constraints.len());
    for c in constraints {
        match c {
            Constraint::Affine { a, b } => rows.push((a.as_slice(), *b)),
            _ => return None,
        }
    }
    let n = x.len();
    if n == 0 || n > 2 {
        return None;
    }
    let tol = 1e-9;
    let feasible = |p: &[f64]| rows.iter().all(|(a, b)| dot(a, p) + b <= tol * (1.0 + norm(a)));
    if feasible(x) {
        return Some(0.0);
    }
    let mut best = f64::INFINITY;
    let mut consider = |p: Vec<f64>| {
        let d = dist(&p, x);
        if d < best && feasible(&p) {
            best = d;
        }
    };
    for (a, b) in &rows {
        let aa = dot(a, a);
        if aa == 0.0 {
            continue;
        }
        let t = (dot(a, x) + b) / aa;
        consider(x.iter().zip(a.iter()).map(|(xi, ai)| xi - t * ai).collect());
    }
    if n == 2 {
        for i in 0..rows.len() {
            for j in (i + 1)..rows.len() {
                let (a1, b1) = rows[i];
                let (a2, b2) = rows[j];
                let det = a1[0] * a2[1] - a1[1] * a2[0];
                if det.abs() < 1e-14 {
                    continue;
                }
                let px = (-b1 * a2[1] + b2 * a1[1]) / det;
                let py = (-a1[0] * b2 + a2[0] * b1) / det;
                consider(vec![px, py]);
            }
        }
    }
    best.is_finite().then_some(best)
}

/// Parameters for [`gen_linear`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearParams {
    pub dimension: usize,
    pub count: usize,
    /// Radius of the ball around the origin on which every constraint holds.
    #[serde(default = "default_interior")]
    pub interior_radius: f64,
    /// Extra offsets drawn from `[0, spread]` push facets away from the
    /// interior ball. Zero makes every facet tangent to it; larger values
    /// weaken growth near the feasible set.
    #[serde(default)]
    pub spread: f64,
    /// Exact `dist(x₀, X_Ω)`.
    pub x0_distance: f64,
}

fn default_interior() -> f64 {
    1.0
}

/// `m` affine constraints `a_i·x + b_i ≤ 0` with unit normals (so `M = 1`),
/// all holding on the ball of radius `interior_radius` around the origin.
///
/// The first constraint is tangent to that ball at `p = r·a₀` and `x₀` is
/// placed at `p + t·a₀`. Since `p` is feasible and `x₀ − p` is normal to a
/// facet active at `p`, `dist(x₀, X_Ω) = t` exactly.
pub fn gen_linear<R: Rng + ?Sized>(params: &LinearParams, rng: &mut R) -> Result<GeneratedProblem> {
    let LinearParams {
        dimension: n,
        count: m,
        interior_radius: r,
        spread,
        x0_distance: t,
    } = *params;
    if n == 0 {
        return Err(invalid("dimension", "must be at least 1"));
    }
    if m == 0 {
        return Err(invalid("count", "must be at least 1"));
    }
    if !(r.is_finite() && r >= 0.0) {
        return Err(invalid("interior_radius", "must be finite and nonnegative"));
    }
    if !(spread.is_finite() && spread >= 0.0) {
        return Err(invalid("spread", "must be finite and nonnegative"));
    }
    if !(t.is_finite() && t >= 0.0) {
        return Err(invalid("x0_distance", "must be finite and nonnegative"));
    }
    let mut constraints = Vec::with_capacity(m);
    let mut anchor = Vec::new();
    for i in 0..m {
        let a = random_unit_vector(n, rng);
        let offset = if i == 0 || spread == 0.0 { 0.0 } else { rng.random_range(0.0..=spread) };
        if i == 0 {
            anchor = a.clone();
        }
        constraints.push(Constraint::affine(a, -r - offset));
    }
    let x0: Vec<f64> = anchor.iter().map(|a| (r + t) * a).collect();
    let witness = vec![0.0; n];
    let family = ConstraintFamily::finite(n, constraints)?.with_lipschitz(1.0, None)?;
    let shape = (n <= 2).then_some(FeasibleShape::Polyhedron);
    Ok(GeneratedProblem {
        family,
        x0,
        feasible_witness: witness,
        interior_radius: r,
        dist_upper: r + t,
        dist_exact: Some(t),
        growth: None,
        shape,
    })
}

/// The interval `[lo, hi]` as `{x − hi ≤ 0, lo − x ≤ 0}`.
pub fn gen_interval(lo: f64, hi: f64, x0: f64) -> Result<GeneratedProblem> {
    if !(lo < hi) {
        return Err(invalid("interval", "needs lo < hi"));
    }
    let family = ConstraintFamily::finite(
        1,
        vec![Constraint::affine(vec![1.0], -hi), Constraint::affine(vec![-1.0], lo)],
    )?
    .with_lipschitz(1.0, None)?;
    let mid = 0.5 * (lo + hi);
    let d = if x0 > hi { x0 - hi } else if x0 < lo { lo - x0 } else { 0.0 };
    Ok(GeneratedProblem {
        family,
        x0: vec![x0],
        feasible_witness: vec![mid],
        interior_radius: 0.5 * (hi - lo),
        dist_upper: (x0 - mid).abs(),
        dist_exact: Some(d),
        // at an exterior point exactly one of the two residuals equals dist
        growth: Some(GrowthProfile {
            mu: 1.0,
            degree: 1.0,
            delta_mass: 0.5,
        }),
        shape: Some(FeasibleShape::Polyhedron),
    })
}

/// Parameters for [`gen_quadratic`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticParams {
    pub dimension: usize,
    pub count: usize,
    /// Radius of the ball around the origin common to every constraint.
    #[serde(default = "default_interior")]
    pub inner_radius: f64,
    /// Centers are drawn uniformly from the ball of this radius around the
    /// origin. Zero gives identical balls.
    #[serde(default)]
    pub center_spread: f64,
    /// Distance from `x₀` to the inner ball.
    pub x0_distance: f64,
}

/// `m` constraints `‖x − c_i‖² − r_i² ≤ 0` with `r_i = ‖c_i‖ + ρ`, so every
/// ball contains the ball of radius `ρ` around the origin.
///
/// When all centers coincide with the origin the feasible set is that inner
/// ball, the distance is exact and the family has quadratic growth with
/// `μ = 1, d = 2, Δ = 1`: at distance `t` the residual is
/// `(ρ + t)² − ρ² ≥ t²`.
pub fn gen_quadratic<R: Rng + ?Sized>(params: &QuadraticParams, rng: &mut R) -> Result<GeneratedProblem> {
    let QuadraticParams {
        dimension: n,
        count: m,
        inner_radius: rho,
        center_spread: spread,
        x0_distance: t,
    } = *params;
    if n == 0 {
        return Err(invalid("dimension", "must be at least 1"));
    }
    if m == 0 {
        return Err(invalid("count", "must be at least 1"));
    }
    if !(rho.is_finite() && rho > 0.0) {
        return Err(invalid("inner_radius", "must be positive"));
    }
    if !(spread.is_finite() && spread >= 0.0) {
        return Err(invalid("center_spread", "must be finite and nonnegative"));
    }
    if !(t.is_finite() && t >= 0.0) {
        return Err(invalid("x0_distance", "must be finite and nonnegative"));
    }
    let mut constraints = Vec::with_capacity(m);
    let mut max_center = 0.0f64;
    for _ in 0..m {
        let c: Vec<f64> = if spread == 0.0 {
            vec![0.0; n]
        } else {
            // uniform in the ball: radius spread · U^{1/n}
            let u: f64 = rng.random();
            let s = spread * u.powf(1.0 / n as f64);
            random_unit_vector(n, rng).into_iter().map(|v| s * v).collect()
        };
        let c_norm = norm(&c);
        max_center = max_center.max(c_norm);
        constraints.push(Constraint::squared_ball(&c, c_norm + rho));
    }
    let dir = random_unit_vector(n, rng);
    let x0: Vec<f64> = dir.iter().map(|d| (rho + t) * d).collect();
    let witness = vec![0.0; n];
    // iterates stay within ‖x₀ − z*‖ of the witness; ‖∇‖ = 2‖x − c_i‖ there
    let working_radius = rho + t;
    let lipschitz = 2.0 * (working_radius + max_center);
    let family = ConstraintFamily::finite(n, constraints)?.with_lipschitz(
        lipschitz,
        Some(Ball {
            center: witness.clone(),
            radius: working_radius,
        }),
    )?;
    let concentric = spread == 0.0;
    Ok(GeneratedProblem {
        family,
        x0,
        feasible_witness: witness.clone(),
        interior_radius: rho,
        dist_upper: t,
        dist_exact: concentric.then_some(t),
        growth: concentric.then_some(GrowthProfile {
            mu: 1.0,
            degree: 2.0,
            delta_mass: 1.0,
        }),
        shape: concentric.then_some(FeasibleShape::Ball {
            center: witness,
            radius: rho,
        }),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthCandidate {
    pub mu: f64,
    pub degree: f64,
    /// Smallest fraction of constraints with `f_i(x) ≥ μ dist(x, X_Ω)^d` over
    /// the sampled exterior points.
    pub delta_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthEstimate {
    pub points: usize,
    pub exact_distance: bool,
    pub table: Vec<GrowthCandidate>,
}

impl GrowthEstimate {
    /// Largest `μ` of the given degree whose `Δ̂` reaches `min_delta`.
    pub fn profile_for(&self, degree: f64, min_delta: f64) -> Option<GrowthProfile> {
        self.table
            .iter()
            .filter(|c| c.degree == degree && c.delta_hat >= min_delta && c.delta_hat > 0.0)
            .max_by(|a, b| a.mu.total_cmp(&b.mu))
            .map(|c| GrowthProfile {
                mu: c.mu,
                degree: c.degree,
                delta_mass: c.delta_hat,
            })
    }

    pub fn candidate(&self, mu: f64, degree: f64) -> Option<&GrowthCandidate> {
        self.table.iter().find(|c| c.mu == mu && c.degree == degree)
    }
}

/// Default `μ` grid: `2^{j/4}` for `j = −40..=16`.
pub fn default_mu_grid() -> Vec<f64> {
    (-40..=16).map(|j| 2f64.powf(j as f64 / 4.0)).collect()
}

/// Brute-force growth estimate: samples `grid_size` exterior points in the
/// working ball `‖x − z*‖ ≤ ‖x₀ − z*‖` and, for each `(μ, d)` on the grid,
/// records the smallest mass of constraints meeting the growth inequality.
///
/// Sampling can refute a profile or suggest one; it cannot prove one.
pub fn estimate_growth<R: Rng + ?Sized>(
    problem: &GeneratedProblem,
    grid_size: usize,
    mu_grid: &[f64],
    degrees: &[f64],
    rng: &mut R,
) -> Result<GrowthEstimate> {
    if grid_size == 0 {
        return Err(invalid("grid_size", "must be at least 1"));
    }
    let constraints = problem.family.constraints().ok_or(Error::NotFinite)?;
    let n = problem.family.dimension();
    let center = &problem.feasible_witness;
    let radius = dist(&problem.x0, center);
    let max_attempts = grid_size.saturating_mul(1000).max(10_000);
    let mut points = Vec::with_capacity(grid_size);
    let mut attempts = 0;
    while points.len() < grid_size && attempts < max_attempts {
        attempts += 1;
        let u: f64 = rng.random();
        let s = radius * u.powf(1.0 / n as f64);
        let x: Vec<f64> = random_unit_vector(n, rng)
            .into_iter()
            .zip(center)
            .map(|(d, c)| c + s * d)
            .collect();
        let d = problem.distance_to_feasible(&x);
        if d > 0.0 && max_residual(&problem.family, &x)? > 0.0 {
            points.push((x, d));
        }
    }
    if points.is_empty() {
        return Err(Error::NoExteriorPoints { attempts });
    }
    let residuals: Vec<Vec<f64>> = points
        .iter()
        .map(|(x, _)| constraints.iter().map(|c| c.value(x)).collect())
        .collect();
    let m = constraints.len() as f64;
    let mut table = Vec::with_capacity(mu_grid.len() * degrees.len());
    for &degree in degrees {
        for &mu in mu_grid {
            let delta_hat = points
                .iter()
                .zip(&residuals)
                .map(|((_, d), r)| {
                    let floor = mu * d.powf(degree);
                    r.iter().filter(|&&v| v >= floor).count() as f64 / m
                })
                .fold(1.0, f64::min);
            table.push(GrowthCandidate { mu, degree, delta_hat });
        }
    }
    Ok(GrowthEstimate {
        points: points.len(),
        exact_distance: problem.shape.is_some(),
        table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn interval_metadata() {
        let p = gen_interval(-1.0, 1.0, 5.0).unwrap();
        assert_eq!(p.dist_exact, Some(4.0));
        assert!(p.verify_witness().unwrap());
        assert_eq!(p.exact_distance(&[5.0]), Some(4.0));
        assert_eq!(p.exact_distance(&[-3.0]), Some(2.0));
        assert_eq!(p.exact_distance(&[0.3]), Some(0.0));
    }

    #[test]
    fn linear_witness_on_thousand_constraints() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = gen_linear(
            &LinearParams {
                dimension: 2,
                count: 1000,
                interior_radius: 0.5,
                spread: 0.2,
                x0_distance: 9.5,
            },
            &mut rng,
        )
        .unwrap();
        assert!(p.verify_witness().unwrap());
        assert!((norm(&p.x0) - 10.0).abs() < 1e-12);
        for c in p.family.constraints().unwrap() {
            assert!(c.value(&p.feasible_witness) <= -0.5 + 1e-12);
        }
    }

    #[test]
    fn linear_radius_zero_is_a_cone() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut params = LinearParams {
            dimension: 2,
            count: 3,
            interior_radius: 0.0,
            spread: 0.0,
            x0_distance: 1.0,
        };
        let p = gen_linear(&params, &mut rng).unwrap();
        assert!(p.verify_witness().unwrap());
        assert_eq!(p.dist_exact, Some(1.0));
        assert!((dist(&p.x0, &p.feasible_witness) - 1.0).abs() < 1e-12);
        params.interior_radius = -0.5;
        assert!(gen_linear(&params, &mut rng).is_err());
    }

    #[test]
    fn quadratic_single_ball_profile() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = gen_quadratic(
            &QuadraticParams {
                dimension: 3,
                count: 1,
                inner_radius: 1.0,
                center_spread: 0.0,
                x0_distance: 4.0,
            },
            &mut rng,
        )
        .unwrap();
        let c = &p.family.constraints().unwrap()[0];
        // along any ray, residual at distance t is (1 + t)² − 1 ≥ t²
        let dir = random_unit_vector(3, &mut rng);
        for i in 1..=50 {
            let t = i as f64 * 0.1;
            let x: Vec<f64> = dir.iter().map(|d| (1.0 + t) * d).collect();
            assert!((p.distance_to_feasible(&x) - t).abs() < 1e-12);
            assert!(c.value(&x) >= t * t);
        }
        assert_eq!(p.growth.unwrap().degree, 2.0);
    }

    #[test]
    fn quadratic_random_balls_share_the_witness() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = gen_quadratic(
            &QuadraticParams {
                dimension: 2,
                count: 50,
                inner_radius: 0.5,
                center_spread: 2.0,
                x0_distance: 5.0,
            },
            &mut rng,
        )
        .unwrap();
        assert!(p.verify_witness().unwrap());
        assert!(p.dist_exact.is_none() && p.growth.is_none());
        let ball = p.family.working_ball().unwrap();
        let m = p.lipschitz().unwrap();
        for _ in 0..2000 {
            let u: f64 = rng.random();
            let s = ball.radius * u.sqrt();
            let x: Vec<f64> = random_unit_vector(2, &mut rng).iter().map(|d| s * d).collect();
            for c in p.family.constraints().unwrap() {
                assert!(norm(&c.subgradient(&x)) <= m + 1e-9);
            }
        }
    }

    #[test]
    fn growth_of_single_ball() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = gen_quadratic(
            &QuadraticParams {
                dimension: 2,
                count: 1,
                inner_radius: 1.0,
                center_spread: 0.0,
                x0_distance: 3.0,
            },
            &mut rng,
        )
        .unwrap();
        let est = estimate_growth(&p, 200, &default_mu_grid(), &[1.0, 2.0], &mut rng).unwrap();
        assert_eq!(est.candidate(1.0, 2.0).unwrap().delta_hat, 1.0);
        let prof = est.profile_for(2.0, 1.0).unwrap();
        assert!(prof.mu >= 1.0);
    }

    #[test]
    fn growth_of_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = gen_interval(-1.0, 1.0, 5.0).unwrap();
        let est = estimate_growth(&p, 100, &default_mu_grid(), &[1.0], &mut rng).unwrap();
        assert_eq!(est.candidate(1.0, 1.0).unwrap().delta_hat, 0.5);
        let prof = est.profile_for(1.0, 0.5).unwrap();
        assert_eq!(prof.mu, 1.0);
        assert_eq!(prof.delta_mass, 0.5);
    }

    #[test]
    fn growth_needs_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = gen_interval(-1.0, 1.0, 0.0).unwrap();
        assert!(estimate_growth(&p, 0, &[1.0], &[1.0], &mut rng).is_err());
        assert!(matches!(
            estimate_growth(&p, 10, &[1.0], &[1.0], &mut rng),
            Err(Error::NoExteriorPoints { .. })
        ));
    }
}
