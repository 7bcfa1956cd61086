//! Primal-dual gradient dynamics for linearly-constrained convex minimization,
//! with vanishing Tikhonov regularization.
//!
//! The library simulates the coupled flow
//!
//! ```text
//! x' + grad f(x) + Aᵀλ + ε(t) x = 0
//! λ' + b - A x       + ε(t) λ = 0
//! ```
//!
//! for a convex objective `f`, linear constraints `A x = b`, and a positive
//! regularization function `ε(t)` tending to zero. Alongside the flow itself
//! it computes the viscosity curve (the path of zeros of the regularized
//! operator), certifies regularization schedules against the decisive sign
//! conditions on `σ = ε² + ε'`, and measures empirical decay rates of the
//! primal-dual gap, velocity, and distance metrics against the envelope
//! `e^(-2ρ(t)) + ε²(t)` with `ρ(t) = ∫ ε`.
//!
//! Modules follow the pipeline:
//!
//! * [`problem`] — the constrained program, its Lagrangian and saddle operator;
//! * [`schedule`] — regularization functions `ε(t)` and their certificates;
//! * [`dynamics`] — ODE integration of the regularized flow;
//! * [`viscosity`] — the curve of zeros of the regularized operator;
//! * [`metrics`] — decay metrics, rate fitting, and envelope checks.

pub mod dynamics;
pub mod error;
pub mod metrics;
pub mod problem;
pub mod schedule;
pub mod viscosity;

pub use error::{Error, Result};
pub use problem::{GradientOracle, Objective, PrimalDualPoint, Problem, SaddleSolution};
pub use schedule::{EpsilonSchedule, ScheduleCertificate, TriState};
