#![allow(dead_code)]

use polyak_feasibility::Constraint;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn gaussian_vec<R: Rng + ?Sized>(n: usize, scale: f64, rng: &mut R) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let v: f64 = StandardNormal.sample(rng);
            scale * v
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A random catalog constraint of the given kind (0..4) together with a
/// point `z` satisfying it.
pub fn constraint_with_feasible_point<R: Rng + ?Sized>(kind: usize, n: usize, rng: &mut R) -> (Constraint, Vec<f64>) {
    let z = gaussian_vec(n, 2.0, rng);
    let c = build(kind, n, &z, rng);
    (c, z)
}

fn build<R: Rng + ?Sized>(kind: usize, n: usize, z: &[f64], rng: &mut R) -> Constraint {
    let slack = rng.random_range(0.0..1.0);
    match kind {
        0 => {
            let a = gaussian_vec(n, 1.0, rng);
            let b = -dot(&a, z) - slack;
            Constraint::affine(a, b)
        }
        1 => {
            let offset = gaussian_vec(n, 1.0, rng);
            let center: Vec<f64> = z.iter().zip(&offset).map(|(zi, o)| zi + o).collect();
            let radius = dot(&offset, &offset).sqrt() + slack;
            Constraint::ball_distance(center, radius)
        }
        2 => {
            // Q = B Bᵀ is positive semidefinite
            let b: Vec<Vec<f64>> = (0..n).map(|_| gaussian_vec(n, 0.7, rng)).collect();
            let q: Vec<Vec<f64>> = (0..n)
                .map(|i| (0..n).map(|j| dot(&b[i], &b[j])).collect())
                .collect();
            let a = gaussian_vec(n, 1.0, rng);
            let qz: f64 = (0..n).map(|i| z[i] * dot(&q[i], z)).sum();
            let c = -(qz + dot(&a, z)) - slack;
            Constraint::Quadratic { q, a, b: c }
        }
        _ => {
            let count = rng.random_range(2..=4);
            let pieces = (0..count).map(|_| build(rng.random_range(0..3), n, z, rng)).collect();
            Constraint::Max { pieces }
        }
    }
}
