//! Problem data for the linear-quadratic contract model: parameters, the
//! Lagrange-multiplier pair on the unit circle, adjoint state, and the two
//! Hamiltonians with their first-order conditions.
//!
//! Sign convention: both functionals are **costs to be minimized**. The
//! agent's Hamiltonian is concave in the effort `e` (second derivative −1)
//! and the principal's is concave in the cash flow `s` (second derivative
//! −λ_P), so the stationary points below are the unique maximizers.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on the multiplier circle constraint λ_A² + λ_P² = 1.
pub const CIRCLE_TOL: f64 = 1e-12;

/// Default floor on λ_P. The cash-flow feedback `s̅ = (b/λ_P)·P` is singular
/// at λ_P = 0; multiplier pairs are kept away from that point.
pub const DEFAULT_LAMBDA_MIN: f64 = 0.05;

/// Errors from constructing or using model data.
#[derive(Debug, Error)]
pub enum ModelError {
    /// A parameter failed validation; the message names the field and rule.
    #[error("invalid model parameter: {0}")]
    InvalidParams(String),
    /// λ_P fell below the configured floor (near-singular contract).
    #[error("multiplier floor violated: lambda_P = {lambda_p:.6e} < floor {floor:.6e}")]
    MultiplierFloor { lambda_p: f64, floor: f64 },
    /// The pair (λ_A, λ_P) is off the unit circle by more than [`CIRCLE_TOL`].
    #[error("multiplier pair off the unit circle: lambda_A^2 + lambda_P^2 - 1 = {defect:.3e}")]
    OffCircle { defect: f64 },
}

/// Constants of the linear-quadratic contract model.
///
/// Output dynamics `dx = (a·x + b·e) dt + sigma dW` on `[0, horizon]` with
/// `x(0) = 0`. Agent cost `E[∫ (s−e)²/2 dt − alpha·x(T)²/2]`, principal cost
/// `E[∫ s²/2 dt − beta·x(T)²/2]`. The agent accepts iff the agent cost is
/// ≤ `w0`.
///
/// `sigma = 0` is accepted as a deterministic edge case; operations that
/// mathematically require noise (the heat-kernel quadrature and the
/// log-derivative heat route in [`crate::burgers`]) reject it with a typed
/// error instead.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Drift coefficient of the output process (1/time).
    #[serde(default = "default_a")]
    pub a: f64,
    /// Effort gain in the output drift (dimensionless).
    #[serde(default = "default_b")]
    pub b: f64,
    /// Output volatility (≥ 0; 0 selects the deterministic edge case).
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// Agent's terminal bonus factor (> 0).
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Principal's terminal bonus factor (> 0).
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// Horizon (> 0).
    #[serde(rename = "T", default = "default_horizon")]
    pub horizon: f64,
    /// Participation threshold (< 0): the agent accepts iff J_A ≤ W0.
    #[serde(rename = "W0", default = "default_w0")]
    pub w0: f64,
    /// Smallest admissible λ_P (in (0, 1]); see [`DEFAULT_LAMBDA_MIN`].
    #[serde(default = "default_lambda_min")]
    pub lambda_min: f64,
}

fn default_a() -> f64 {
    1.0
}
fn default_b() -> f64 {
    1.0
}
fn default_sigma() -> f64 {
    1.0
}
fn default_alpha() -> f64 {
    0.2
}
fn default_beta() -> f64 {
    1.0
}
fn default_horizon() -> f64 {
    0.35
}
fn default_w0() -> f64 {
    -0.1
}
fn default_lambda_min() -> f64 {
    DEFAULT_LAMBDA_MIN
}

impl Default for ModelParams {
    /// The crate's reference demonstration parameter set.
    fn default() -> Self {
        ModelParams {
            a: default_a(),
            b: default_b(),
            sigma: default_sigma(),
            alpha: default_alpha(),
            beta: default_beta(),
            horizon: default_horizon(),
            w0: default_w0(),
            lambda_min: default_lambda_min(),
        }
    }
}

impl ModelParams {
    /// Validates every field; returns `self` unchanged on success.
    pub fn validated(self) -> Result<Self, ModelError> {
        let all = [
            self.a,
            self.b,
            self.sigma,
            self.alpha,
            self.beta,
            self.horizon,
            self.w0,
            self.lambda_min,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::InvalidParams(
                "all parameters must be finite".into(),
            ));
        }
        if self.sigma < 0.0 {
            return Err(ModelError::InvalidParams(format!(
                "sigma must be >= 0, got {}",
                self.sigma
            )));
        }
        if self.alpha <= 0.0 {
            return Err(ModelError::InvalidParams(format!(
                "alpha must be > 0, got {}",
                self.alpha
            )));
        }
        if self.beta <= 0.0 {
            return Err(ModelError::InvalidParams(format!(
                "beta must be > 0, got {}",
                self.beta
            )));
        }
        if self.horizon <= 0.0 {
            return Err(ModelError::InvalidParams(format!(
                "T must be > 0, got {}",
                self.horizon
            )));
        }
        if self.w0 >= 0.0 {
            return Err(ModelError::InvalidParams(format!(
                "W0 must be < 0, got {}",
                self.w0
            )));
        }
        if !(self.lambda_min > 0.0 && self.lambda_min <= 1.0) {
            return Err(ModelError::InvalidParams(format!(
                "lambda_min must lie in (0, 1], got {}",
                self.lambda_min
            )));
        }
        Ok(self)
    }
}

/// Lagrange-multiplier pair on the unit circle, with λ_P bounded away
/// from zero by a configured floor.
///
/// Fields are private; both constructors enforce the invariants
/// λ_A ∈ (−1, 1), λ_P ≥ floor and λ_A² + λ_P² = 1 (to [`CIRCLE_TOL`]).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Multipliers {
    lambda_a: f64,
    lambda_p: f64,
}

impl Multipliers {
    /// Builds the pair from λ_A alone on the positive-λ_P branch:
    /// λ_P = +√(1 − λ_A²).
    pub fn from_lambda_a(lambda_a: f64, lambda_min: f64) -> Result<Self, ModelError> {
        if !lambda_a.is_finite() || lambda_a.abs() >= 1.0 {
            return Err(ModelError::InvalidParams(format!(
                "lambda_A must lie in (-1, 1), got {lambda_a}"
            )));
        }
        let lambda_p = (1.0 - lambda_a * lambda_a).sqrt();
        if lambda_p < lambda_min {
            return Err(ModelError::MultiplierFloor {
                lambda_p,
                floor: lambda_min,
            });
        }
        Ok(Multipliers { lambda_a, lambda_p })
    }

    /// Builds the pair from both components, checking the circle constraint.
    pub fn new(lambda_a: f64, lambda_p: f64, lambda_min: f64) -> Result<Self, ModelError> {
        if !lambda_a.is_finite() || !lambda_p.is_finite() {
            return Err(ModelError::InvalidParams(
                "multipliers must be finite".into(),
            ));
        }
        if lambda_p < lambda_min {
            return Err(ModelError::MultiplierFloor {
                lambda_p,
                floor: lambda_min,
            });
        }
        let defect = lambda_a * lambda_a + lambda_p * lambda_p - 1.0;
        if defect.abs() > CIRCLE_TOL {
            return Err(ModelError::OffCircle { defect });
        }
        Ok(Multipliers { lambda_a, lambda_p })
    }

    pub fn lambda_a(&self) -> f64 {
        self.lambda_a
    }

    pub fn lambda_p(&self) -> f64 {
        self.lambda_p
    }
}

/// Adjoint (costate) values at one point of the state space.
///
/// `p`, `q` belong to the agent's backward equation; `R`, `P`, `Q` to the
/// principal's. In feedback form they satisfy `p = C1·x + C2·R`,
/// `P = D1·x + D2·R`, `q = σ·C1`, `Q = σ·D1` (identities verified in
/// [`crate::riccati`]).
#[allow(non_snake_case)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdjointState {
    /// Agent costate.
    pub p: f64,
    /// Agent diffusion costate.
    pub q: f64,
    /// Principal's auxiliary forward adjoint.
    pub R: f64,
    /// Principal costate.
    pub P: f64,
    /// Principal diffusion costate.
    pub Q: f64,
}

/// Agent Hamiltonian `p·(a·x + b·e) + q·σ − (s − e)²/2`.
pub fn agent_hamiltonian(x: f64, e: f64, p: f64, q: f64, s: f64, params: &ModelParams) -> f64 {
    let d = s - e;
    p * (params.a * x + params.b * e) + q * params.sigma - 0.5 * d * d
}

/// The agent's optimal effort `e̅ = b·p + s`, the unique maximizer of
/// [`agent_hamiltonian`] in `e`.
pub fn agent_optimal_effort(p: f64, s: f64, params: &ModelParams) -> f64 {
    params.b * p + s
}

/// Principal Hamiltonian
/// `P·(a·x + b²·p + b·s) − R·a·p + Q·σ − λ_A·b²·p²/2 − λ_P·s²/2`,
/// with the agent's best response `e̅ = b·p + s` already substituted into the
/// output drift. The agent's diffusion costate `adj.q` does not enter the
/// expression.
pub fn principal_hamiltonian(
    x: f64,
    s: f64,
    adj: &AdjointState,
    mult: &Multipliers,
    params: &ModelParams,
) -> f64 {
    let b2 = params.b * params.b;
    adj.P * (params.a * x + b2 * adj.p + params.b * s) - adj.R * params.a * adj.p
        + adj.Q * params.sigma
        - 0.5 * mult.lambda_a() * b2 * adj.p * adj.p
        - 0.5 * mult.lambda_p() * s * s
}

/// The principal's optimal cash flow `s̅ = (b/λ_P)·P`, the unique stationary
/// point of [`principal_hamiltonian`] in `s` (second derivative −λ_P < 0).
///
/// Errors with [`ModelError::MultiplierFloor`] if λ_P sits below
/// `params.lambda_min` (near-singular contract).
#[allow(non_snake_case)]
pub fn principal_optimal_cashflow(
    P: f64,
    mult: &Multipliers,
    params: &ModelParams,
) -> Result<f64, ModelError> {
    if mult.lambda_p() < params.lambda_min {
        return Err(ModelError::MultiplierFloor {
            lambda_p: mult.lambda_p(),
            floor: params.lambda_min,
        });
    }
    Ok(params.b / mult.lambda_p() * P)
}
