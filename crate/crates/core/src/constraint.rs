//! The closed catalog of convex constraint functions.
//!
//! Every descriptor is convex by construction, so a family built from them
//! never relies on the caller's promise of convexity. Quadratics are checked
//! for symmetry and positive semidefiniteness when validated.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vector::{dot, norm};

const SYMMETRY_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;

/// A convex function `f: R^n -> R` whose feasible side is `f(x) <= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Constraint {
    /// `a . x + b`
    Affine { a: Vec<f64>, b: f64 },
    /// `||x - center|| - radius`
    BallDistance { center: Vec<f64>, radius: f64 },
    /// `x . Q x + a . x + b` with `Q` symmetric positive semidefinite.
    Quadratic { q: Vec<Vec<f64>>, a: Vec<f64>, b: f64 },
    /// Pointwise maximum of the pieces.
    Max { pieces: Vec<Constraint> },
}

impl Constraint {
    pub fn affine(a: Vec<f64>, b: f64) -> Self {
        Constraint::Affine { a, b }
    }

    pub fn ball_distance(center: Vec<f64>, radius: f64) -> Self {
        Constraint::BallDistance { center, radius }
    }

    /// `||x - center||^2 - radius^2`, written as a quadratic with `Q = I`.
    pub fn squared_ball(center: &[f64], radius: f64) -> Self {
        let n = center.len();
        let mut q = vec![vec![0.0; n]; n];
        for (i, row) in q.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        Constraint::Quadratic {
            q,
            a: center.iter().map(|c| -2.0 * c).collect(),
            b: dot(center, center) - radius * radius,
        }
    }

    /// Checks the descriptor against dimension `n` and the catalog rules.
    pub fn validate(&self, n: usize) -> Result<()> {
        let check_len = |len: usize| {
            if len == n {
                Ok(())
            } else {
                Err(Error::DimensionMismatch {
                    expected: n,
                    got: len,
                })
            }
        };
        match self {
            Constraint::Affine { a, b } => {
                check_len(a.len())?;
                if !a.iter().all(|v| v.is_finite()) || !b.is_finite() {
                    return Err(Error::InvalidConstraint("non-finite affine coefficient".into()));
                }
            }
            Constraint::BallDistance { center, radius } => {
                check_len(center.len())?;
                if !center.iter().all(|v| v.is_finite()) || !radius.is_finite() {
                    return Err(Error::InvalidConstraint("non-finite ball parameter".into()));
                }
            }
            Constraint::Quadratic { q, a, b } => {
                check_len(a.len())?;
                check_len(q.len())?;
                for row in q {
                    check_len(row.len())?;
                }
                if !b.is_finite()
                    || !a.iter().all(|v| v.is_finite())
                    || !q.iter().flatten().all(|v| v.is_finite())
                {
                    return Err(Error::InvalidConstraint("non-finite quadratic coefficient".into()));
                }
                check_psd(q)?;
            }
            Constraint::Max { pieces } => {
                if pieces.is_empty() {
                    return Err(Error::InvalidConstraint("max of zero pieces".into()));
                }
                for p in pieces {
                    p.validate(n)?;
                }
            }
        }
        Ok(())
    }

    /// Evaluates `f(x)`. Assumes the descriptor was validated for `x.len()`.
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Constraint::Affine { a, b } => dot(a, x) + b,
            Constraint::BallDistance { center, radius } => {
                crate::vector::dist(x, center) - radius
            }
            Constraint::Quadratic { q, a, b } => {
                let quad: f64 = q.iter().zip(x).map(|(row, xi)| xi * dot(row, x)).sum();
                quad + dot(a, x) + b
            }
            Constraint::Max { pieces } => pieces
                .iter()
                .map(|p| p.value(x))
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Deterministic subgradient selection at `x`.
    pub fn subgradient(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Constraint::Affine { a, .. } => a.clone(),
            Constraint::BallDistance { center, .. } => {
                let mut g: Vec<f64> = x.iter().zip(center).map(|(xi, ci)| xi - ci).collect();
                let r = norm(&g);
                if r == 0.0 {
                    g.iter_mut().for_each(|v| *v = 0.0);
                } else {
                    g.iter_mut().for_each(|v| *v /= r);
                }
                g
            }
            Constraint::Quadratic { q, a, .. } => {
                let mut g = a.clone();
                for (gi, row) in g.iter_mut().zip(q) {
                    // (Q + Q^T) x = 2 Q x for symmetric Q
                    *gi += 2.0 * dot(row, x);
                }
                g
            }
            Constraint::Max { pieces } => {
                let (idx, _) = pieces
                    .iter()
                    .map(|p| p.value(x))
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (i, v)| {
                        if v > best.1 {
                            (i, v)
                        } else {
                            best
                        }
                    });
                pieces[idx].subgradient(x)
            }
        }
    }

    pub fn value_and_subgradient(&self, x: &[f64]) -> (f64, Vec<f64>) {
        (self.value(x), self.subgradient(x))
    }

    /// An upper bound on `||g||` for subgradients taken anywhere in the
    /// closed ball `(center, radius)`.
    pub fn lipschitz_on_ball(&self, center: &[f64], radius: f64) -> f64 {
        match self {
            Constraint::Affine { a, .. } => norm(a),
            Constraint::BallDistance { .. } => 1.0,
            Constraint::Quadratic { q, a, .. } => {
                // ||2 Q x + a|| <= 2 ||Q|| (||c|| + r) + ||a||, spectral norm of
                // a PSD matrix is its largest eigenvalue.
                let lambda_max = max_eigenvalue(q);
                2.0 * lambda_max * (norm(center) + radius) + norm(a)
            }
            Constraint::Max { pieces } => pieces
                .iter()
                .map(|p| p.lipschitz_on_ball(center, radius))
                .fold(0.0, f64::max),
        }
    }
}

fn to_matrix(q: &[Vec<f64>]) -> DMatrix<f64> {
    let n = q.len();
    DMatrix::from_fn(n, n, |i, j| q[i][j])
}

fn max_eigenvalue(q: &[Vec<f64>]) -> f64 {
    if q.is_empty() {
        return 0.0;
    }
    SymmetricEigen::new(to_matrix(q))
        .eigenvalues
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

fn check_psd(q: &[Vec<f64>]) -> Result<()> {
    let n = q.len();
    let scale = q.iter().flatten().fold(1.0_f64, |m, v| m.max(v.abs()));
    for i in 0..n {
        for j in (i + 1)..n {
            if (q[i][j] - q[j][i]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::InvalidConstraint(format!(
                    "quadratic matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    if n == 0 {
        return Ok(());
    }
    let min_eig = SymmetricEigen::new(to_matrix(q))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if min_eig < -PSD_TOL * scale {
        return Err(Error::InvalidConstraint(format!(
            "quadratic matrix is not positive semidefinite (min eigenvalue {min_eig})"
        )));
    }
    Ok(())
}
