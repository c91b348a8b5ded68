//! Minibatch Polyak-step solvers for the stochastic convex feasibility
//! problem: find `x` with `P{ω : f_ω(x) ≤ ε} ≥ 1 − Γ` for a family of convex
//! constraints `f_ω`.
//!
//! - [`solver`]: PolyakFM, one Polyak step per iteration on the most violated
//!   constraint of a random minibatch.
//! - [`confident`]: confidentPFM, the same loop with a growing batch schedule
//!   that certifies each `(x_k, ε_k)` pair jointly with confidence `1 − α`.
//! - [`certification`]: exact and Monte-Carlo coverage oracles.
//! - [`bounds`]: closed-form iteration bounds and a hitting-time simulator.
//! - [`problem_gen`]: problems with known feasible witness, distance and growth.
//! - [`experiment`]: seed-replicated experiment specs and reports.

pub mod bounds;
pub mod certification;
pub mod confident;
pub mod constraint;
pub mod error;
pub mod experiment;
pub mod family;
pub mod polyak;
pub mod problem_file;
pub mod problem_gen;
pub mod solver;
pub mod vector;

pub use bounds::{BoundInputs, GrowthProfile};
pub use certification::{coverage_exact, coverage_mc, residual_quantile, CoverageEstimate, CoverageQuery};
pub use confident::{batch_size, error_audit, run_confident, AuditReport, CertifiedPair, ConfidentConfig, ConfidentRun};
pub use constraint::Constraint;
pub use error::{Error, Result};
pub use family::{ConstraintFamily, ReplacementMode, Sample, SampleBatch, Template};
pub use polyak::{check_decrease, polyak_step, project, ProjectionRegion, StepParams};
pub use problem_file::ProblemFile;
pub use problem_gen::GeneratedProblem;
pub use solver::{pfm_iterate, run_pfm, RunConfig, RunTrace, SolverRng, SolverState, StopReason, StopRule};
