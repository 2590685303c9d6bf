//! Numerical library for a continuous-time principal-agent contract problem
//! with linear output dynamics and quadratic costs.
//!
//! The output process follows `dx = (a·x + b·e) dt + σ dW` on `[0, T]` with
//! `x(0) = 0`. The agent controls the effort `e` against a cash-flow rate `s`
//! offered by the principal, paying the running cost `(s − e)²/2` and
//! collecting a terminal bonus `α·x(T)²/2`; the principal pays `s²/2` running
//! and collects `β·x(T)²/2`. Both functionals are treated as **costs to be
//! minimized**, and the agent accepts the contract only if their expected
//! cost stays below a participation threshold `W0 < 0`.
//!
//! The stationarity conditions of the two Hamiltonians ([`model`]) reduce the
//! coupled optimality system to a four-dimensional terminal-value Riccati ODE
//! for feedback coefficients `(C1, C2, D1, D2)` ([`riccati`], integrated by
//! [`ode`]), under which the optimal controls are linear state feedback:
//!
//! ```text
//! e̅ = b·p + s̅,   s̅ = (b/λ_P)·P,   p = C1·x + C2·R,   P = D1·x + D2·R,
//! ```
//!
//! where `(λ_A, λ_P)` is a Lagrange-multiplier pair on the unit circle and
//! `R` is an auxiliary adjoint state driven by the output path. The crate
//! then provides
//!
//! * seeded Euler–Maruyama simulation of the closed loop with
//!   counter-based per-path random substreams ([`simulate`]),
//! * Monte-Carlo cost estimation, a multiplier sweep with common random
//!   numbers, participation-constraint calibration by bisection, and a
//!   "win-win" comparison report ([`contract`]),
//! * an independent finite-difference cross-check of the feedback ansatz
//!   against the underlying semilinear PDE system ([`riccati::solve_feedback_pde`]),
//! * a standalone effort solver for the strong-formulation agent problem,
//!   where the optimal effort solves a forced Burgers equation and is
//!   evaluated through a heat-kernel quadrature and a finite-difference heat
//!   solver ([`burgers`]).
//!
//! All numerics are plain `f64`; every stochastic routine is reproducible
//! bit-for-bit from `(seed, path index)` regardless of thread count.

pub mod burgers;
pub mod contract;
pub mod model;
pub mod ode;
pub mod riccati;
pub mod simulate;

pub use burgers::{CashFlowField, FieldTable, QuadratureConfig};
pub use contract::{CostEstimate, SweepResult, WinWinReport};
pub use model::{AdjointState, ModelParams, Multipliers};
pub use ode::{OdeSolution, TimeGrid};
pub use riccati::RiccatiTable;
pub use simulate::PathEnsemble;
