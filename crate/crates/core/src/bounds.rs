//! Closed-form iteration bounds for PolyakFM and confidentPFM, and a
//! simulator for the compound Bernoulli hitting time behind them.
//!
//! Notation: `M` is the Lipschitz bound, `dist0 = dist(x₀, X_Ω)`, `ε` the
//! residual target, `Γ` the ignorable mass and `L` the batch size, with
//! success probability `p = 1 − (1 − Γ)^L` per iteration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub lipschitz: f64,
    pub dist0: f64,
    pub eps: f64,
    pub gamma: f64,
    pub batch_size: u64,
}

impl BoundInputs {
    pub fn new(lipschitz: f64, dist0: f64, eps: f64, gamma: f64, batch_size: u64) -> Result<Self> {
        let b = BoundInputs {
            lipschitz,
            dist0,
            eps,
            gamma,
            batch_size,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lipschitz.is_finite() && self.lipschitz > 0.0) {
            return Err(invalid("lipschitz", "must be positive and finite"));
        }
        if !(self.dist0.is_finite() && self.dist0 >= 0.0) {
            return Err(invalid("dist0", "must be finite and nonnegative"));
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(invalid("eps", "must be positive and finite"));
        }
        let budget = self.lipschitz * self.dist0;
        if self.eps >= budget {
            return Err(Error::AlreadyAchieved { eps: self.eps, budget });
        }
        check_gamma(self.gamma)?;
        if self.batch_size == 0 {
            return Err(invalid("batch_size", "must be at least 1"));
        }
        Ok(())
    }

    /// `M · dist0 / ε`, greater than 1 for valid inputs.
    pub fn ratio(&self) -> f64 {
        self.lipschitz * self.dist0 / self.eps
    }

    pub fn p(&self) -> f64 {
        success_probability(self.gamma, self.batch_size)
    }

    /// `N = ⌊(M · dist0 / ε)²⌋`, the most iterations that can have
    /// `ε_{k−1} ≥ ε`.
    pub fn deterministic_budget(&self) -> u64 {
        let r = self.ratio();
        (r * r).floor() as u64
    }
}

/// Hölderian growth constants `(μ, d, Δ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrowthProfile {
    pub mu: f64,
    pub degree: f64,
    pub delta_mass: f64,
}

impl GrowthProfile {
    pub fn new(mu: f64, degree: f64, delta_mass: f64) -> Result<Self> {
        let g = GrowthProfile { mu, degree, delta_mass };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu.is_finite() && self.mu > 0.0) {
            return Err(invalid("mu", "must be positive and finite"));
        }
        if !(self.degree >= 1.0) || !self.degree.is_finite() {
            return Err(invalid("degree", "must be at least 1"));
        }
        if !(self.delta_mass > 0.0 && self.delta_mass <= 1.0) {
            return Err(invalid("delta_mass", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma < 1.0 {
        Ok(())
    } else {
        Err(invalid("gamma", format!("{gamma} is outside (0, 1)")))
    }
}

fn success_probability(gamma: f64, batch: u64) -> f64 {
    // 1 - (1 - Γ)^L without cancellation for small Γ
    -((batch as f64) * (-gamma).ln_1p()).exp_m1()
}

/// `p = 1 − (1 − Γ)^L`.
pub fn success_prob(gamma: f64, batch_size: u64) -> Result<f64> {
    check_gamma(gamma)?;
    if batch_size == 0 {
        return Err(invalid("batch_size", "must be at least 1"));
    }
    Ok(success_probability(gamma, batch_size))
}

/// Expected-iteration bound `E = (1/p)(M · dist0 / ε)²`.
pub fn expected_iters_basic(inputs: &BoundInputs) -> Result<f64> {
    inputs.validate()?;
    let r = inputs.ratio();
    Ok(r * r / inputs.p())
}

/// `½ (1 / (1 + ½ p/(1−p)))^{k − ⌈2E⌉}` for a given expectation bound `E`.
pub fn tail_bound(expected: f64, p: f64, k: u64) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(invalid("p", format!("{p} is outside (0, 1]")));
    }
    let start = (2.0 * expected).ceil();
    if (k as f64) < start {
        return Err(invalid("k", format!("{k} is below 2E = {}", 2.0 * expected)));
    }
    let exponent = k as f64 - start;
    if exponent == 0.0 {
        return Ok(0.5);
    }
    if p == 1.0 {
        return Ok(0.0);
    }
    let base = 1.0 / (1.0 + 0.5 * p / (1.0 - p));
    Ok(0.5 * base.powf(exponent))
}

/// Bound on the probability that `x_k` is the first iterate reaching the
/// coverage target, valid for `k ≥ 2E`.
pub fn concentration_tail(inputs: &BoundInputs, k: u64) -> Result<f64> {
    let e = expected_iters_basic(inputs)?;
    tail_bound(e, inputs.p(), k)
}

/// `1 + (M / (μ^{1/d} ε^{1−1/d}))² · min{1/(4^{1−1/d} − 1), log₂(M · dist0 / ε)}`.
///
/// For `d = 1` the first branch of the minimum is infinite.
pub fn growth_factor(inputs: &BoundInputs, growth: &GrowthProfile) -> Result<f64> {
    inputs.validate()?;
    growth.validate()?;
    if inputs.gamma >= growth.delta_mass {
        return Err(invalid(
            "gamma",
            format!("growth bounds need gamma < delta ({} >= {})", inputs.gamma, growth.delta_mass),
        ));
    }
    let d = growth.degree;
    let scale = inputs.lipschitz / (growth.mu.powf(1.0 / d) * inputs.eps.powf(1.0 - 1.0 / d));
    let geometric = 4f64.powf(1.0 - 1.0 / d) - 1.0;
    let constant_branch = if geometric > 0.0 { 1.0 / geometric } else { f64::INFINITY };
    let log_branch = inputs.ratio().log2();
    Ok(1.0 + scale * scale * constant_branch.min(log_branch))
}

/// `E' = (4/p) · growth_factor`.
pub fn expected_iters_growth(inputs: &BoundInputs, growth: &GrowthProfile) -> Result<f64> {
    Ok(4.0 / inputs.p() * growth_factor(inputs, growth)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidentBounds {
    /// `1 + ⌊(M · dist0 / ε)²⌋`.
    pub basic: u64,
    /// `5 + 4 (M / (μ^{1/d} ε^{1−1/d}))² · min{…}`, when a growth profile is given.
    pub growth: Option<f64>,
}

/// Deterministic iteration bounds for confidentPFM to compute `ε_k ≤ ε`.
pub fn confident_iter_bounds(inputs: &BoundInputs, growth: Option<&GrowthProfile>) -> Result<ConfidentBounds> {
    inputs.validate()?;
    let growth = match growth {
        Some(g) => Some(1.0 + 4.0 * growth_factor(inputs, g)?),
        None => None,
    };
    Ok(ConfidentBounds {
        basic: 1 + inputs.deterministic_budget(),
        growth,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HittingTimeStats {
    pub trials: u64,
    pub mean: f64,
    /// Unbiased sample variance (zero for a single trial).
    pub variance: f64,
    /// `histogram[k]` counts trials absorbed at step `k`.
    pub histogram: Vec<u64>,
}

impl HittingTimeStats {
    /// Empirical `Prob(hit at step k)`.
    pub fn frequency(&self, k: usize) -> f64 {
        self.histogram.get(k).copied().unwrap_or(0) as f64 / self.trials as f64
    }
}

const SHARDS: u64 = 64;

/// Simulates `Y₀ = 0, Y_k = Y_{k−1} + Bernoulli(p)` until `Y_k = N`, over
/// `trials` independent runs.
///
/// Trials are split over a fixed number of shards, each with its own stream
/// seeded from `rng`, so results do not depend on the thread count.
pub fn simulate_hitting_time<R: Rng + ?Sized>(n: u64, p: f64, trials: u64, rng: &mut R) -> Result<HittingTimeStats> {
    if n == 0 {
        return Err(invalid("n", "target must be at least 1"));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(invalid("p", format!("{p} is outside (0, 1]")));
    }
    if trials == 0 {
        return Err(invalid("trials", "must be at least 1"));
    }
    let gaps = Geometric::new(p).map_err(|e| invalid("p", e.to_string()))?;
    let seeds: Vec<u64> = (0..SHARDS).map(|_| rng.next_u64()).collect();
    let per_shard = trials / SHARDS;
    let extra = trials % SHARDS;

    let shards: Vec<(u128, u128, Vec<u64>)> = seeds
        .par_iter()
        .enumerate()
        .map(|(i, &seed)| {
            let count = per_shard + u64::from((i as u64) < extra);
            let mut local = ChaCha8Rng::seed_from_u64(seed);
            let mut sum = 0u128;
            let mut sum_sq = 0u128;
            let mut hist = Vec::new();
            for _ in 0..count {
                // each success takes one step plus a geometric number of failures
                let t = n + (0..n).map(|_| gaps.sample(&mut local)).sum::<u64>();
                sum += t as u128;
                sum_sq += (t as u128) * (t as u128);
                let t = t as usize;
                if hist.len() <= t {
                    hist.resize(t + 1, 0);
                }
                hist[t] += 1;
            }
            (sum, sum_sq, hist)
        })
        .collect();

    let mut sum = 0u128;
    let mut sum_sq = 0u128;
    let mut histogram: Vec<u64> = Vec::new();
    for (s, sq, h) in shards {
        sum += s;
        sum_sq += sq;
        if histogram.len() < h.len() {
            histogram.resize(h.len(), 0);
        }
        for (acc, v) in histogram.iter_mut().zip(h) {
            *acc += v;
        }
    }
    let t = trials as u128;
    let mean = sum as f64 / trials as f64;
    let variance = if trials > 1 {
        // n Σt² − (Σt)² is exact in integers
        (t * sum_sq - sum * sum) as f64 / (trials as f64 * (trials - 1) as f64)
    } else {
        0.0
    };
    Ok(HittingTimeStats {
        trials,
        mean,
        variance,
        histogram,
    })
}
