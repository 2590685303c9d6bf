//! Fixed-step classical Runge–Kutta (RK4) integration of initial- and
//! terminal-value ODE systems on a uniform grid, with blow-up detection.
//!
//! Terminal-value problems are marched with a negative step from the final
//! node to the first; the solution is stored on the forward grid either way.
//! Fixed steps (rather than adaptive control) keep grids reproducible and
//! node-aligned across the crate; trajectories that escape in finite time
//! are reported as [`OdeError::BlowUp`] instead of being chased.

use thiserror::Error;

/// Any state component beyond this magnitude is treated as a finite-time
/// escape. Generous relative to the O(1)–O(10) coefficient scales the
/// crate's feedback systems produce on feasible inputs.
pub const BLOW_UP_LIMIT: f64 = 1e8;

/// Errors from grid construction or integration.
#[derive(Debug, Error)]
pub enum OdeError {
    /// Grid endpoints or step count failed validation.
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
    /// A state component exceeded [`BLOW_UP_LIMIT`] at time `t`.
    #[error("solution blow-up at t = {t:.6}: max |component| = {max_abs:.3e}")]
    BlowUp { t: f64, max_abs: f64 },
    /// A state component became NaN or infinite at time `t`.
    #[error("non-finite state at t = {t:.6}")]
    NonFinite { t: f64 },
}

/// Uniform time grid on `[t0, t_end]` with `n_steps` steps
/// (`n_steps + 1` nodes).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t0: f64,
    t_end: f64,
    n_steps: usize,
}

impl TimeGrid {
    /// Builds a grid; requires finite endpoints, `t_end > t0`, `n_steps ≥ 2`.
    pub fn new(t0: f64, t_end: f64, n_steps: usize) -> Result<Self, OdeError> {
        if !t0.is_finite() || !t_end.is_finite() {
            return Err(OdeError::InvalidGrid(format!(
                "endpoints must be finite, got [{t0}, {t_end}]"
            )));
        }
        if t_end <= t0 {
            return Err(OdeError::InvalidGrid(format!(
                "need t_end > t0, got [{t0}, {t_end}]"
            )));
        }
        if n_steps < 2 {
            return Err(OdeError::InvalidGrid(format!(
                "need n_steps >= 2, got {n_steps}"
            )));
        }
        Ok(TimeGrid { t0, t_end, n_steps })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Number of nodes, `n_steps + 1`.
    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }

    pub fn dt(&self) -> f64 {
        (self.t_end - self.t0) / self.n_steps as f64
    }

    /// Time of node `i`; the endpoints are returned exactly.
    pub fn node(&self, i: usize) -> f64 {
        debug_assert!(i <= self.n_steps);
        if i == 0 {
            self.t0
        } else if i == self.n_steps {
            self.t_end
        } else {
            self.t0 + i as f64 * self.dt()
        }
    }
}

/// An ODE solution sampled at every node of a [`TimeGrid`], earliest node
/// first regardless of the march direction used to produce it.
#[derive(Debug, Clone)]
pub struct OdeSolution<const D: usize> {
    grid: TimeGrid,
    values: Vec<[f64; D]>,
}

impl<const D: usize> OdeSolution<D> {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// One state vector per node, `values()[i]` at time `grid().node(i)`.
    pub fn values(&self) -> &[[f64; D]] {
        &self.values
    }

    pub fn value(&self, i: usize) -> [f64; D] {
        self.values[i]
    }
}

fn check_state<const D: usize>(t: f64, y: &[f64; D]) -> Result<(), OdeError> {
    let mut max_abs = 0.0f64;
    for &c in y.iter() {
        if !c.is_finite() {
            return Err(OdeError::NonFinite { t });
        }
        max_abs = max_abs.max(c.abs());
    }
    if max_abs > BLOW_UP_LIMIT {
        return Err(OdeError::BlowUp { t, max_abs });
    }
    Ok(())
}

/// One classical RK4 step of size `h` (sign encodes direction) from `(t, y)`.
fn rk4_step<const D: usize, F>(rhs: &F, t: f64, y: &[f64; D], h: f64) -> [f64; D]
where
    F: Fn(f64, &[f64; D]) -> [f64; D],
{
    let k1 = rhs(t, y);
    let mut y2 = *y;
    for j in 0..D {
        y2[j] = y[j] + 0.5 * h * k1[j];
    }
    let k2 = rhs(t + 0.5 * h, &y2);
    let mut y3 = *y;
    for j in 0..D {
        y3[j] = y[j] + 0.5 * h * k2[j];
    }
    let k3 = rhs(t + 0.5 * h, &y3);
    let mut y4 = *y;
    for j in 0..D {
        y4[j] = y[j] + h * k3[j];
    }
    let k4 = rhs(t + h, &y4);
    let mut out = *y;
    for j in 0..D {
        out[j] = y[j] + h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
    }
    out
}

/// Solves `y' = rhs(t, y)` with `y(t_end) = terminal_value`, marching the
/// grid backward with step `−dt` (classical RK4, local order 4). The
/// terminal node is assigned `terminal_value` exactly.
///
/// # Errors
/// [`OdeError::BlowUp`] / [`OdeError::NonFinite`] as soon as a computed
/// node violates the state checks; `terminal_value` itself is checked first.
pub fn integrate_terminal<const D: usize, F>(
    rhs: F,
    terminal_value: [f64; D],
    grid: TimeGrid,
) -> Result<OdeSolution<D>, OdeError>
where
    F: Fn(f64, &[f64; D]) -> [f64; D],
{
    let n = grid.n_steps();
    check_state(grid.t_end(), &terminal_value)?;
    let mut values = vec![[0.0; D]; n + 1];
    values[n] = terminal_value;
    let h = -grid.dt();
    for i in (0..n).rev() {
        let t_from = grid.node(i + 1);
        let next = rk4_step(&rhs, t_from, &values[i + 1], h);
        check_state(grid.node(i), &next)?;
        values[i] = next;
    }
    Ok(OdeSolution { grid, values })
}

/// Solves `y' = rhs(t, y)` with `y(t0) = initial_value`, marching forward
/// with step `+dt` (classical RK4, local order 4).
///
/// # Errors
/// As [`integrate_terminal`].
pub fn integrate_initial<const D: usize, F>(
    rhs: F,
    initial_value: [f64; D],
    grid: TimeGrid,
) -> Result<OdeSolution<D>, OdeError>
where
    F: Fn(f64, &[f64; D]) -> [f64; D],
{
    let n = grid.n_steps();
    check_state(grid.t0(), &initial_value)?;
    let mut values = vec![[0.0; D]; n + 1];
    values[0] = initial_value;
    let h = grid.dt();
    for i in 0..n {
        let t_from = grid.node(i);
        let next = rk4_step(&rhs, t_from, &values[i], h);
        check_state(grid.node(i + 1), &next)?;
        values[i + 1] = next;
    }
    Ok(OdeSolution { grid, values })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_err<const D: usize>(
        sol: &OdeSolution<D>,
        exact: impl Fn(f64) -> [f64; D],
    ) -> f64 {
        let mut worst = 0.0f64;
        for (i, v) in sol.values().iter().enumerate() {
            let e = exact(sol.grid().node(i));
            for j in 0..D {
                worst = worst.max((v[j] - e[j]).abs());
            }
        }
        worst
    }

    #[test]
    fn grid_validation_and_nodes() {
        assert!(TimeGrid::new(0.0, 1.0, 1).is_err());
        assert!(TimeGrid::new(1.0, 1.0, 10).is_err());
        assert!(TimeGrid::new(0.0, f64::INFINITY, 10).is_err());
        let g = TimeGrid::new(0.0, 0.35, 7).unwrap();
        assert_eq!(g.n_nodes(), 8);
        assert_eq!(g.node(0), 0.0);
        assert_eq!(g.node(7), 0.35); // endpoint exact, not 7 * dt
        assert!((g.dt() - 0.05).abs() < 1e-16);
        for i in 0..7 {
            assert!(g.node(i + 1) > g.node(i));
        }
    }

    #[test]
    fn zero_rhs_is_constant_both_directions() {
        let g = TimeGrid::new(0.0, 1.0, 16).unwrap();
        let rhs = |_t: f64, _y: &[f64; 2]| [0.0, 0.0];
        let term = integrate_terminal(rhs, [3.5, -1.25], g).unwrap();
        let init = integrate_initial(rhs, [3.5, -1.25], g).unwrap();
        for i in 0..g.n_nodes() {
            assert_eq!(term.value(i), [3.5, -1.25]);
            assert_eq!(init.value(i), [3.5, -1.25]);
        }
    }

    #[test]
    fn terminal_linear_scalar_matches_exponential() {
        // y' = 2ay, y(T) = alpha  =>  y(t) = alpha * exp(2a(t - T)).
        let (a, alpha, t_end) = (1.0, 0.2, 0.35);
        let g = TimeGrid::new(0.0, t_end, 1000).unwrap();
        let sol = integrate_terminal(|_t, y: &[f64; 1]| [2.0 * a * y[0]], [alpha], g).unwrap();
        let y0 = sol.value(0)[0];
        assert!((y0 - alpha * (-2.0 * a * t_end).exp()).abs() < 1e-10);
        assert!((y0 - 0.099_317_06).abs() < 1e-6);
        assert_eq!(sol.value(1000)[0], alpha);
    }

    #[test]
    fn terminal_scalar_riccati_matches_reciprocal_closed_form() {
        // y' = 2ay + ky², y(T) = v. Substituting u = 1/y turns it into the
        // linear equation u' = −2au − k, so
        //   u(t) = (1/v + k/(2a)) e^{2a(T−t)} − k/(2a),  y = 1/u.
        let (a, k, v, t_end) = (1.0, 2.0, 0.5, 0.35);
        let g = TimeGrid::new(0.0, t_end, 1000).unwrap();
        let sol =
            integrate_terminal(|_t, y: &[f64; 1]| [2.0 * a * y[0] + k * y[0] * y[0]], [v], g)
                .unwrap();
        let exact = |t: f64| {
            let u = (1.0 / v + k / (2.0 * a)) * (2.0 * a * (t_end - t)).exp() - k / (2.0 * a);
            [1.0 / u]
        };
        assert!(max_err(&sol, exact) < 1e-8);
    }

    #[test]
    fn initial_linear_scalar_matches_exponential() {
        let g = TimeGrid::new(0.0, 1.0, 1000).unwrap();
        let sol = integrate_initial(|_t, y: &[f64; 1]| [y[0]], [1.0], g).unwrap();
        assert!((sol.value(1000)[0] - std::f64::consts::E).abs() < 1e-10);
    }

    #[test]
    fn initial_forced_linear_matches_integrating_factor() {
        // y' + c·y = sin t, y(0) = y0. Integrating factor e^{ct}:
        //   y(t) = e^{−ct}·y0 + (c·sin t − cos t + e^{−ct})/(1 + c²).
        let (c, y0) = (0.7, 1.3);
        let g = TimeGrid::new(0.0, 2.0, 1000).unwrap();
        let sol = integrate_initial(|t: f64, y: &[f64; 1]| [t.sin() - c * y[0]], [y0], g).unwrap();
        let exact = |t: f64| {
            let decay = (-c * t).exp();
            [decay * y0 + (c * t.sin() - t.cos() + decay) / (1.0 + c * c)]
        };
        assert!(max_err(&sol, exact) < 1e-8);
    }

    #[test]
    fn rk4_error_shrinks_sixteenfold_when_dt_halves() {
        let (a, alpha, t_end) = (1.0f64, 0.2, 0.35);
        let exact0 = alpha * (-2.0 * a * t_end).exp();
        let run = |n: usize| {
            let g = TimeGrid::new(0.0, t_end, n).unwrap();
            let sol =
                integrate_terminal(|_t, y: &[f64; 1]| [2.0 * a * y[0]], [alpha], g).unwrap();
            (sol.value(0)[0] - exact0).abs()
        };
        let ratio = run(10) / run(20);
        assert!(
            (ratio - 16.0).abs() <= 0.2 * 16.0,
            "order-4 ratio out of band: {ratio}"
        );
    }

    #[test]
    fn terminal_then_forward_round_trip() {
        // A genuinely nonlinear 2-component field keeps the round trip honest.
        let rhs = |t: f64, y: &[f64; 2]| [y[1] - 0.3 * y[0] * y[0], -y[0] + 0.1 * t];
        let g = TimeGrid::new(0.0, 1.5, 2000).unwrap();
        let term = integrate_terminal(rhs, [0.4, -0.2], g).unwrap();
        let back = integrate_initial(rhs, term.value(0), g).unwrap();
        let end = back.value(g.n_steps());
        assert!((end[0] - 0.4).abs() < 1e-8 && (end[1] + 0.2).abs() < 1e-8);
    }

    #[test]
    fn quadratic_escape_reports_blow_up() {
        // y' = y², y(0) = 1 escapes at t = 1; the march must fail, not wrap.
        let g = TimeGrid::new(0.0, 2.0, 4000).unwrap();
        match integrate_initial(|_t, y: &[f64; 1]| [y[0] * y[0]], [1.0], g) {
            Err(OdeError::BlowUp { t, max_abs }) => {
                assert!(t <= 1.05, "escape detected too late: t = {t}");
                assert!(max_abs > BLOW_UP_LIMIT);
            }
            other => panic!("expected BlowUp, got {other:?}"),
        }
    }

    #[test]
    fn nan_rhs_reports_non_finite() {
        let g = TimeGrid::new(0.0, 1.0, 10).unwrap();
        let res = integrate_initial(
            |t: f64, _y: &[f64; 1]| if t > 0.45 { [f64::NAN] } else { [0.0] },
            [1.0],
            g,
        );
        assert!(matches!(res, Err(OdeError::NonFinite { .. })));
    }

    #[test]
    fn bad_seed_values_rejected_before_marching() {
        let g = TimeGrid::new(0.0, 1.0, 10).unwrap();
        assert!(matches!(
            integrate_initial(|_t, _y: &[f64; 1]| [0.0], [f64::INFINITY], g),
            Err(OdeError::NonFinite { .. })
        ));
        assert!(matches!(
            integrate_terminal(|_t, _y: &[f64; 1]| [0.0], [5e9], g),
            Err(OdeError::BlowUp { .. })
        ));
    }
}
