//! Seeded Euler–Maruyama simulation of the closed-loop contract dynamics,
//! with per-path counter-based random substreams, a streaming per-path cost
//! kernel, and an integrating-factor quadrature cross-check for the
//! auxiliary adjoint path.
//!
//! The closed loop under the linear feedback ansatz is
//!
//! ```text
//! dx = (a·x + b²·p + b·s̅) dt + σ dW,   x(0) = 0,
//! dR = (a·R + λ_A·b²·p − b²·P) dt,      R(0) = 0,
//! p = C1(t)·x + C2(t)·R,   P = D1(t)·x + D2(t)·R,   s̅ = (b/λ_P)·P,
//! ```
//!
//! discretized explicitly with Gaussian increments `√dt·N(0,1)` and controls
//! evaluated at the left endpoint of each step.
//!
//! # Reproducibility
//! Each path draws from `ChaCha8` seeded by the master seed with the path
//! index as the stream number, so path `i` consumes the same random numbers
//! no matter how paths are batched across threads, and every result is
//! bitwise reproducible at any thread count. For step-size studies,
//! [`simulate_cost_samples_with_substeps`] draws `m` normals per step and
//! aggregates them as `ΔW = √(dt/m)·Σz`, so runs at `dt` with `m` substeps
//! and at `dt/m` with one substep share the same Brownian path (common
//! random numbers across resolutions).
//!
//! # Cost accounting
//! Both cost functionals are accumulated per path by the trapezoid rule over
//! the running costs `(s−e)²/2` and `s²/2`, plus the terminal terms
//! `−α·x(T)²/2` and `−β·x(T)²/2`. The streaming kernel
//! ([`simulate_cost_samples`]) and the stored-ensemble route
//! ([`path_costs`] over a [`PathEnsemble`]) execute the identical arithmetic
//! sequence, so their results agree bit-for-bit — a unit test enforces this.

use crate::ode::TimeGrid;
use crate::riccati::{RiccatiError, RiccatiTable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use std::path::Path;
use thiserror::Error;

/// Errors from closed-loop simulation.
#[derive(Debug, Error)]
pub enum SimulateError {
    #[error(transparent)]
    Riccati(#[from] RiccatiError),
    /// The simulation grid leaves the span of the coefficient table.
    #[error("simulation grid outside the coefficient table's span: {0}")]
    SpanMismatch(String),
    /// A path state became NaN or infinite (pathological coefficients).
    #[error("path {path} diverged to a non-finite state at t = {t:.6}")]
    NonFinite { path: usize, t: f64 },
    /// A size or count argument was unusable.
    #[error("invalid simulation input: {0}")]
    InvalidInput(String),
    #[error("CSV I/O failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV encoding failed: {0}")]
    Csv(#[from] csv::Error),
}

/// A simulated ensemble with full per-node storage: states `x`, `R` and the
/// recorded controls `e`, `s` at every grid node of every path (row-major,
/// one row of `grid.n_nodes()` values per path).
///
/// Storage is `4 × n_paths × (n_steps+1)` doubles — intended for
/// diagnostics, dumps, and moderate path counts. Production-scale cost
/// estimation streams per-path results instead ([`simulate_cost_samples`])
/// and never materializes paths.
#[derive(Debug, Clone)]
pub struct PathEnsemble {
    seed: u64,
    grid: TimeGrid,
    n_paths: usize,
    x: Vec<f64>,
    r: Vec<f64>,
    e: Vec<f64>,
    s: Vec<f64>,
}

impl PathEnsemble {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    fn row<'a>(&self, field: &'a [f64], path: usize) -> &'a [f64] {
        let n = self.grid.n_nodes();
        &field[path * n..(path + 1) * n]
    }

    /// Output states of one path, one value per grid node.
    pub fn x_path(&self, path: usize) -> &[f64] {
        self.row(&self.x, path)
    }

    /// Auxiliary adjoint states of one path.
    pub fn r_path(&self, path: usize) -> &[f64] {
        self.row(&self.r, path)
    }

    /// Recorded efforts of one path.
    pub fn e_path(&self, path: usize) -> &[f64] {
        self.row(&self.e, path)
    }

    /// Recorded cash flows of one path.
    pub fn s_path(&self, path: usize) -> &[f64] {
        self.row(&self.s, path)
    }

    /// Dumps up to `max_paths` paths as CSV with columns
    /// `t,path_id,x,R,e,s`, 17-significant-digit formatting.
    pub fn write_paths_csv<P: AsRef<Path>>(
        &self,
        path: P,
        max_paths: usize,
    ) -> Result<(), SimulateError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "path_id", "x", "R", "e", "s"])?;
        let limit = self.n_paths.min(max_paths);
        for p in 0..limit {
            let (xr, rr, er, sr) = (
                self.x_path(p),
                self.r_path(p),
                self.e_path(p),
                self.s_path(p),
            );
            for i in 0..self.grid.n_nodes() {
                w.write_record([
                    format!("{:.16e}", self.grid.node(i)),
                    format!("{p}"),
                    format!("{:.16e}", xr[i]),
                    format!("{:.16e}", rr[i]),
                    format!("{:.16e}", er[i]),
                    format!("{:.16e}", sr[i]),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Per-path Monte-Carlo samples from the streaming kernel: both cost
/// functionals and the terminal state of every path, but no stored paths.
#[derive(Debug, Clone)]
pub struct CostSamples {
    /// Agent cost sample per path.
    pub ja: Vec<f64>,
    /// Principal cost sample per path.
    pub jp: Vec<f64>,
    /// Terminal output state per path.
    pub x_terminal: Vec<f64>,
}

impl CostSamples {
    pub fn n_paths(&self) -> usize {
        self.ja.len()
    }
}

/// Constants of the step kernel, precomputed once per simulation.
struct Kinetics {
    a: f64,
    b: f64,
    b2: f64,
    /// `λ_A·b²`, the coupling of the agent costate into the adjoint drift.
    m_gain: f64,
    /// `b/λ_P`, the cash-flow feedback gain on the principal costate.
    gbp: f64,
    sigma: f64,
    alpha: f64,
    beta: f64,
    dt: f64,
    half_dt: f64,
    /// `√(dt/m)` for the substep noise aggregation.
    sqrt_dt_sub: f64,
    noise_substeps: usize,
    n_steps: usize,
}

/// Feedback coefficients sampled at every node of the simulation grid.
struct NodeCoefs {
    c1: Vec<f64>,
    c2: Vec<f64>,
    d1: Vec<f64>,
    d2: Vec<f64>,
}

fn prepare(
    table: &RiccatiTable,
    grid: &TimeGrid,
    n_paths: usize,
    noise_substeps: usize,
) -> Result<(Kinetics, NodeCoefs), SimulateError> {
    if n_paths == 0 {
        return Err(SimulateError::InvalidInput("n_paths must be ≥ 1".into()));
    }
    if noise_substeps == 0 {
        return Err(SimulateError::InvalidInput(
            "noise_substeps must be ≥ 1".into(),
        ));
    }
    let (t0, t1) = (table.grid().t0(), table.grid().t_end());
    if grid.t0() < t0 - 1e-12 || grid.t_end() > t1 + 1e-12 {
        return Err(SimulateError::SpanMismatch(format!(
            "grid [{}, {}] vs table [{t0}, {t1}]",
            grid.t0(),
            grid.t_end()
        )));
    }
    let params = table.params();
    let mult = table.multipliers();
    let dt = grid.dt();
    let kin = Kinetics {
        a: params.a,
        b: params.b,
        b2: params.b * params.b,
        m_gain: mult.lambda_a() * params.b * params.b,
        gbp: params.b / mult.lambda_p(),
        sigma: params.sigma,
        alpha: params.alpha,
        beta: params.beta,
        dt,
        half_dt: 0.5 * dt,
        sqrt_dt_sub: (dt / noise_substeps as f64).sqrt(),
        noise_substeps,
        n_steps: grid.n_steps(),
    };
    let n = grid.n_nodes();
    let mut coefs = NodeCoefs {
        c1: Vec::with_capacity(n),
        c2: Vec::with_capacity(n),
        d1: Vec::with_capacity(n),
        d2: Vec::with_capacity(n),
    };
    let aligned = grid == table.grid();
    for i in 0..n {
        let c = if aligned {
            [table.c1()[i], table.c2()[i], table.d1()[i], table.d2()[i]]
        } else {
            table.coefficients_at(grid.node(i))?
        };
        coefs.c1.push(c[0]);
        coefs.c2.push(c[1]);
        coefs.d1.push(c[2]);
        coefs.d2.push(c[3]);
    }
    Ok((kin, coefs))
}

/// Mutable per-node output rows for one recorded path.
struct PathRows<'a> {
    x: &'a mut [f64],
    r: &'a mut [f64],
    e: &'a mut [f64],
    s: &'a mut [f64],
}

/// Advances one path through the full grid and returns
/// `(agent cost, principal cost, terminal x)`.
///
/// This is the single arithmetic sequence both simulation routes share;
/// [`path_costs`] mirrors its accumulation over stored rows and must stay
/// textually in lockstep with it (a unit test pins the bitwise agreement).
/// On a non-finite state, returns the offending node index.
#[inline]
fn run_one_path(
    kin: &Kinetics,
    coefs: &NodeCoefs,
    seed: u64,
    path_index: u64,
    mut record: Option<PathRows<'_>>,
) -> Result<(f64, f64, f64), usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_index);

    let mut x = 0.0f64;
    let mut r = 0.0f64;
    let mut p = coefs.c1[0] * x + coefs.c2[0] * r;
    let mut cap = coefs.d1[0] * x + coefs.d2[0] * r;
    let mut s = kin.gbp * cap;
    let mut e = kin.b * p + s;
    let mut fa_prev = 0.5 * (s - e) * (s - e);
    let mut fp_prev = 0.5 * s * s;
    let mut acc_a = 0.0f64;
    let mut acc_p = 0.0f64;
    if let Some(rows) = record.as_mut() {
        rows.x[0] = x;
        rows.r[0] = r;
        rows.e[0] = e;
        rows.s[0] = s;
    }

    for i in 1..=kin.n_steps {
        let mut zsum = 0.0f64;
        for _ in 0..kin.noise_substeps {
            let z: f64 = rng.sample(StandardNormal);
            zsum += z;
        }
        let dw = kin.sqrt_dt_sub * zsum;
        x += (kin.a * x + kin.b2 * p + kin.b * s) * kin.dt + kin.sigma * dw;
        r += (kin.a * r + kin.m_gain * p - kin.b2 * cap) * kin.dt;
        p = coefs.c1[i] * x + coefs.c2[i] * r;
        cap = coefs.d1[i] * x + coefs.d2[i] * r;
        s = kin.gbp * cap;
        e = kin.b * p + s;
        // Guard states and derived controls: `p`/`cap` can overflow even
        // while `x`/`r` are still finite, and `e` inherits from both.
        if !(x.is_finite() && r.is_finite() && e.is_finite() && s.is_finite()) {
            return Err(i);
        }
        let fa = 0.5 * (s - e) * (s - e);
        let fp = 0.5 * s * s;
        acc_a += kin.half_dt * (fa_prev + fa);
        acc_p += kin.half_dt * (fp_prev + fp);
        fa_prev = fa;
        fp_prev = fp;
        if let Some(rows) = record.as_mut() {
            rows.x[i] = x;
            rows.r[i] = r;
            rows.e[i] = e;
            rows.s[i] = s;
        }
    }
    let ja = acc_a - 0.5 * kin.alpha * x * x;
    let jp = acc_p - 0.5 * kin.beta * x * x;
    Ok((ja, jp, x))
}

/// Recomputes `(agent cost, principal cost)` of one stored path from its
/// recorded control rows and terminal state.
///
/// Mirrors the accumulation inside [`run_one_path`] operation for operation
/// (same trapezoid order, same `(s−e)` form), so a stored ensemble and the
/// streaming kernel produce bitwise-identical cost samples.
pub(crate) fn path_costs(
    s_row: &[f64],
    e_row: &[f64],
    x_terminal: f64,
    half_dt: f64,
    alpha: f64,
    beta: f64,
) -> (f64, f64) {
    let mut fa_prev = 0.5 * (s_row[0] - e_row[0]) * (s_row[0] - e_row[0]);
    let mut fp_prev = 0.5 * s_row[0] * s_row[0];
    let mut acc_a = 0.0f64;
    let mut acc_p = 0.0f64;
    for i in 1..s_row.len() {
        let fa = 0.5 * (s_row[i] - e_row[i]) * (s_row[i] - e_row[i]);
        let fp = 0.5 * s_row[i] * s_row[i];
        acc_a += half_dt * (fa_prev + fa);
        acc_p += half_dt * (fp_prev + fp);
        fa_prev = fa;
        fp_prev = fp;
    }
    (
        acc_a - 0.5 * alpha * x_terminal * x_terminal,
        acc_p - 0.5 * beta * x_terminal * x_terminal,
    )
}

/// Simulates `n_paths` closed-loop paths on `grid`, storing states and
/// controls at every node.
///
/// # Errors
/// [`SimulateError::SpanMismatch`] if the grid leaves the table's span;
/// [`SimulateError::NonFinite`] if any path diverges.
pub fn simulate_closed_loop(
    table: &RiccatiTable,
    n_paths: usize,
    seed: u64,
    grid: TimeGrid,
) -> Result<PathEnsemble, SimulateError> {
    let (kin, coefs) = prepare(table, &grid, n_paths, 1)?;
    let n_nodes = grid.n_nodes();
    let mut x = vec![0.0; n_paths * n_nodes];
    let mut r = vec![0.0; n_paths * n_nodes];
    let mut e = vec![0.0; n_paths * n_nodes];
    let mut s = vec![0.0; n_paths * n_nodes];
    x.par_chunks_mut(n_nodes)
        .zip(r.par_chunks_mut(n_nodes))
        .zip(e.par_chunks_mut(n_nodes))
        .zip(s.par_chunks_mut(n_nodes))
        .enumerate()
        .try_for_each(|(pi, (((xr, rr), er), sr))| {
            let rows = PathRows {
                x: xr,
                r: rr,
                e: er,
                s: sr,
            };
            run_one_path(&kin, &coefs, seed, pi as u64, Some(rows))
                .map(|_| ())
                .map_err(|i| SimulateError::NonFinite {
                    path: pi,
                    t: grid.node(i),
                })
        })?;
    Ok(PathEnsemble {
        seed,
        grid,
        n_paths,
        x,
        r,
        e,
        s,
    })
}

/// Streams `n_paths` closed-loop paths, keeping only per-path costs and
/// terminal states (constant memory in the number of time steps).
/// Bitwise-identical to simulating a full ensemble and recomputing costs
/// from the stored controls.
pub fn simulate_cost_samples(
    table: &RiccatiTable,
    n_paths: usize,
    seed: u64,
    grid: TimeGrid,
) -> Result<CostSamples, SimulateError> {
    simulate_cost_samples_with_substeps(table, n_paths, seed, grid, 1)
}

/// [`simulate_cost_samples`] with `noise_substeps` normal draws aggregated
/// per step (`ΔW = √(dt/m)·Σz`). A run on an `n`-step grid with `m`
/// substeps and a run on an `n·m`-step grid with one substep consume the
/// same underlying Brownian path per path index, enabling common-random-
/// number comparisons across step sizes. With `noise_substeps = 1` this is
/// bitwise-identical to [`simulate_cost_samples`].
pub fn simulate_cost_samples_with_substeps(
    table: &RiccatiTable,
    n_paths: usize,
    seed: u64,
    grid: TimeGrid,
    noise_substeps: usize,
) -> Result<CostSamples, SimulateError> {
    let (kin, coefs) = prepare(table, &grid, n_paths, noise_substeps)?;
    let mut ja = vec![0.0; n_paths];
    let mut jp = vec![0.0; n_paths];
    let mut x_terminal = vec![0.0; n_paths];
    ja.par_iter_mut()
        .zip(jp.par_iter_mut())
        .zip(x_terminal.par_iter_mut())
        .enumerate()
        .try_for_each(|(pi, ((ja_slot, jp_slot), xt_slot))| {
            match run_one_path(&kin, &coefs, seed, pi as u64, None) {
                Ok((a, p, xt)) => {
                    *ja_slot = a;
                    *jp_slot = p;
                    *xt_slot = xt;
                    Ok(())
                }
                Err(i) => Err(SimulateError::NonFinite {
                    path: pi,
                    t: grid.node(i),
                }),
            }
        })?;
    Ok(CostSamples {
        ja,
        jp,
        x_terminal,
    })
}

/// Cross-checks the Euler adjoint paths against an independent
/// integrating-factor quadrature, reusing each path's simulated `x` values.
///
/// Along a fixed output path, `R` solves the linear ODE
/// `R' = κ(t)·R + χ(t)·x(t)` with `κ = a + λ_A·b²·C2 − b²·D2` and
/// `χ = λ_A·b²·C1 − b²·D1`, so with `μ(t) = exp(−∫₀ᵗ κ)`,
/// `R(t) = (∫₀ᵗ μ·χ·x ds) / μ(t)`. Both integrals are discretized by the
/// cumulative trapezoid rule on the ensemble grid. Returns the maximum of
/// `|R_quadrature − R_euler| / (1 + |R_euler|)` over all paths and nodes —
/// two independent first-order discretizations of the same ODE, so the
/// deviation shrinks linearly with `dt`.
pub fn check_r_quadrature(
    ensemble: &PathEnsemble,
    table: &RiccatiTable,
) -> Result<f64, SimulateError> {
    let grid = ensemble.grid();
    let (kin, coefs) = prepare(table, grid, ensemble.n_paths(), 1)?;
    let n = grid.n_nodes();
    let dt = grid.dt();
    // κ and χ per node, then μ by cumulative trapezoid of κ.
    let mut kappa = Vec::with_capacity(n);
    let mut chi = Vec::with_capacity(n);
    for i in 0..n {
        kappa.push(kin.a + kin.m_gain * coefs.c2[i] - kin.b2 * coefs.d2[i]);
        chi.push(kin.m_gain * coefs.c1[i] - kin.b2 * coefs.d1[i]);
    }
    let mut mu = Vec::with_capacity(n);
    let mut acc = 0.0f64;
    mu.push(1.0);
    for i in 1..n {
        acc += 0.5 * dt * (kappa[i - 1] + kappa[i]);
        mu.push((-acc).exp());
    }

    let deviations: Vec<f64> = (0..ensemble.n_paths())
        .into_par_iter()
        .map(|pth| {
            let xr = ensemble.x_path(pth);
            let rr = ensemble.r_path(pth);
            let mut integral = 0.0f64;
            let mut worst = 0.0f64;
            for i in 1..n {
                let f_prev = mu[i - 1] * chi[i - 1] * xr[i - 1];
                let f_cur = mu[i] * chi[i] * xr[i];
                integral += 0.5 * dt * (f_prev + f_cur);
                let r_quad = integral / mu[i];
                let dev = (r_quad - rr[i]).abs() / (1.0 + rr[i].abs());
                worst = worst.max(dev);
            }
            worst
        })
        .collect();
    Ok(deviations.into_iter().fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelParams, Multipliers};
    use crate::riccati::solve_riccati;

    fn reference_table(n_steps: usize) -> RiccatiTable {
        let params = ModelParams::default();
        let mult = Multipliers::new(0.75f64.sqrt(), 0.5, 0.05).unwrap();
        let grid = TimeGrid::new(0.0, params.horizon, n_steps).unwrap();
        solve_riccati(&params, &mult, grid).unwrap()
    }

    fn b_zero_table(sigma: f64, n_steps: usize) -> RiccatiTable {
        let params = ModelParams {
            b: 0.0,
            sigma,
            ..ModelParams::default()
        };
        let mult = Multipliers::from_lambda_a(0.0, 0.05).unwrap();
        let grid = TimeGrid::new(0.0, params.horizon, n_steps).unwrap();
        solve_riccati(&params, &mult, grid).unwrap()
    }

    #[test]
    fn ensembles_are_bitwise_reproducible_and_batch_independent() {
        let table = reference_table(400);
        let grid = *table.grid();
        let one = simulate_closed_loop(&table, 64, 42, grid).unwrap();
        let two = simulate_closed_loop(&table, 64, 42, grid).unwrap();
        for p in 0..64 {
            assert_eq!(one.x_path(p), two.x_path(p));
            assert_eq!(one.r_path(p), two.r_path(p));
            assert_eq!(one.e_path(p), two.e_path(p));
            assert_eq!(one.s_path(p), two.s_path(p));
        }
        // Paths are keyed by (seed, index): a bigger batch reproduces the
        // smaller batch's paths exactly, and a different seed does not.
        let wide = simulate_closed_loop(&table, 128, 42, grid).unwrap();
        for p in 0..64 {
            assert_eq!(one.x_path(p), wide.x_path(p));
        }
        let other = simulate_closed_loop(&table, 64, 43, grid).unwrap();
        assert_ne!(one.x_path(0), other.x_path(0));
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let table = reference_table(300);
        let grid = *table.grid();
        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| simulate_cost_samples(&table, 200, 7, grid).unwrap());
        let multi = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| simulate_cost_samples(&table, 200, 7, grid).unwrap());
        assert_eq!(single.ja, multi.ja);
        assert_eq!(single.jp, multi.jp);
        assert_eq!(single.x_terminal, multi.x_terminal);
    }

    #[test]
    fn no_noise_no_coupling_paths_stay_at_zero() {
        let table = b_zero_table(0.0, 200);
        let ens = simulate_closed_loop(&table, 10, 5, *table.grid()).unwrap();
        for p in 0..10 {
            assert!(ens.x_path(p).iter().all(|&v| v == 0.0));
            assert!(ens.r_path(p).iter().all(|&v| v == 0.0));
            assert!(ens.e_path(p).iter().all(|&v| v == 0.0));
            assert!(ens.s_path(p).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn initial_conditions_are_exact() {
        let table = reference_table(300);
        let ens = simulate_closed_loop(&table, 25, 11, *table.grid()).unwrap();
        for p in 0..25 {
            assert_eq!(ens.x_path(p)[0], 0.0);
            assert_eq!(ens.r_path(p)[0], 0.0);
        }
    }

    #[test]
    fn decoupled_linear_sde_matches_closed_form_moments() {
        // With b = 0 the output is dx = a·x dt + σ dW: E[x(T)] = 0 and
        // Var[x(T)] = σ²(e^{2aT} − 1)/(2a).
        let table = b_zero_table(1.0, 500);
        let n: usize = 100_000;
        let samples =
            simulate_cost_samples(&table, n, 2024, *table.grid()).unwrap();
        let params = table.params();
        let var_exact =
            params.sigma * params.sigma * ((2.0 * params.a * params.horizon).exp() - 1.0)
                / (2.0 * params.a);
        let mean: f64 = samples.x_terminal.iter().sum::<f64>() / n as f64;
        let var: f64 = samples
            .x_terminal
            .iter()
            .map(|x| (x - mean) * (x - mean))
            .sum::<f64>()
            / (n - 1) as f64;
        let se_mean = (var / n as f64).sqrt();
        assert!(
            mean.abs() < 3.0 * se_mean,
            "mean {mean:.4e} vs 3·se {:.4e}",
            3.0 * se_mean
        );
        // Gaussian sample variance has stderr ≈ Var·√(2/(n−1)).
        let se_var = var_exact * (2.0 / (n - 1) as f64).sqrt();
        assert!(
            (var - var_exact).abs() < 3.0 * se_var,
            "var {var:.5} vs exact {var_exact:.5} (3·se {:.2e})",
            3.0 * se_var
        );
    }

    #[test]
    fn recorded_controls_compose_the_feedback_laws() {
        let table = reference_table(250);
        let ens = simulate_closed_loop(&table, 5, 99, *table.grid()).unwrap();
        let params = table.params();
        let gbp = params.b / table.multipliers().lambda_p();
        for p in 0..5 {
            let (xr, rr, er, sr) = (
                ens.x_path(p),
                ens.r_path(p),
                ens.e_path(p),
                ens.s_path(p),
            );
            for i in 0..ens.grid().n_nodes() {
                let pc = table.c1()[i] * xr[i] + table.c2()[i] * rr[i];
                let cap = table.d1()[i] * xr[i] + table.d2()[i] * rr[i];
                assert_eq!(sr[i], gbp * cap);
                assert_eq!(er[i], params.b * pc + sr[i]);
            }
        }
    }

    #[test]
    fn streaming_and_stored_routes_agree_bitwise() {
        let table = reference_table(300);
        let grid = *table.grid();
        let streamed = simulate_cost_samples(&table, 500, 31, grid).unwrap();
        let ens = simulate_closed_loop(&table, 500, 31, grid).unwrap();
        let params = table.params();
        let half_dt = 0.5 * grid.dt();
        for p in 0..500 {
            let xt = *ens.x_path(p).last().unwrap();
            let (ja, jp) = path_costs(
                ens.s_path(p),
                ens.e_path(p),
                xt,
                half_dt,
                params.alpha,
                params.beta,
            );
            assert_eq!(ja, streamed.ja[p], "agent cost differs on path {p}");
            assert_eq!(jp, streamed.jp[p], "principal cost differs on path {p}");
            assert_eq!(xt, streamed.x_terminal[p]);
        }
    }

    #[test]
    fn single_substep_variant_is_bitwise_identical() {
        let table = reference_table(300);
        let grid = *table.grid();
        let plain = simulate_cost_samples(&table, 100, 8, grid).unwrap();
        let sub = simulate_cost_samples_with_substeps(&table, 100, 8, grid, 1).unwrap();
        assert_eq!(plain.ja, sub.ja);
        assert_eq!(plain.x_terminal, sub.x_terminal);
    }

    #[test]
    fn substep_aggregation_shares_the_brownian_path() {
        // m substeps on an n-step grid vs one substep on an n·m-step grid:
        // the same Brownian increments drive both, so terminal states match
        // to the strong (pathwise) Euler error, far below statistical noise.
        let table = reference_table(2000);
        let params = table.params();
        let coarse_grid = TimeGrid::new(0.0, params.horizon, 500).unwrap();
        let fine_grid = TimeGrid::new(0.0, params.horizon, 1000).unwrap();
        let coarse =
            simulate_cost_samples_with_substeps(&table, 50, 4, coarse_grid, 2).unwrap();
        let fine =
            simulate_cost_samples_with_substeps(&table, 50, 4, fine_grid, 1).unwrap();
        for p in 0..50 {
            let d = (coarse.x_terminal[p] - fine.x_terminal[p]).abs();
            assert!(
                d < 0.05,
                "path {p}: coarse/fine terminal states differ by {d:.3e}"
            );
        }
        // And the pathwise differences shrink at strong order ~1 (additive
        // noise): quartering dt should shrink them by roughly 4.
        let finer_grid = TimeGrid::new(0.0, params.horizon, 2000).unwrap();
        let coarse4 =
            simulate_cost_samples_with_substeps(&table, 50, 4, coarse_grid, 4).unwrap();
        let finer =
            simulate_cost_samples_with_substeps(&table, 50, 4, finer_grid, 1).unwrap();
        let mean_d1: f64 = (0..50)
            .map(|p| (coarse.x_terminal[p] - fine.x_terminal[p]).abs())
            .sum::<f64>()
            / 50.0;
        let mean_d2: f64 = (0..50)
            .map(|p| (coarse4.x_terminal[p] - finer.x_terminal[p]).abs())
            .sum::<f64>()
            / 50.0;
        // Both compare the same coarse dt against grids 2× and 4× finer; the
        // limits differ, but d2 ≥ d1 − small and both stay O(dt).
        assert!(mean_d1 < 0.02 && mean_d2 < 0.03);
    }

    #[test]
    fn weak_error_halves_when_dt_halves() {
        let table = reference_table(4000);
        let params = table.params();
        let n_paths = 20_000;
        let mean_sq = |n_steps: usize, m: usize| {
            let grid = TimeGrid::new(0.0, params.horizon, n_steps).unwrap();
            let cs =
                simulate_cost_samples_with_substeps(&table, n_paths, 123, grid, m).unwrap();
            cs.x_terminal.iter().map(|x| x * x).sum::<f64>() / n_paths as f64
        };
        // Common Brownian paths across all three resolutions.
        let coarse = mean_sq(250, 4);
        let mid = mean_sq(500, 2);
        let fine = mean_sq(1000, 1);
        let ratio = (coarse - mid).abs() / (mid - fine).abs();
        assert!(
            (1.4..=2.8).contains(&ratio),
            "weak-order ratio {ratio:.2} outside band (diffs {:.3e}, {:.3e})",
            coarse - mid,
            mid - fine
        );
    }

    #[test]
    fn r_quadrature_matches_euler_adjoint() {
        let table = reference_table(2000);
        let ens = simulate_closed_loop(&table, 100, 77, *table.grid()).unwrap();
        let dev = check_r_quadrature(&ens, &table).unwrap();
        assert!(dev < 5e-3, "max relative deviation {dev:.3e}");

        // First order in dt: halving the step roughly halves the deviation.
        let coarse_table = reference_table(500);
        let fine_table = reference_table(1000);
        let ens_c = simulate_closed_loop(&coarse_table, 100, 77, *coarse_table.grid()).unwrap();
        let ens_f = simulate_closed_loop(&fine_table, 100, 77, *fine_table.grid()).unwrap();
        let dev_c = check_r_quadrature(&ens_c, &coarse_table).unwrap();
        let dev_f = check_r_quadrature(&ens_f, &fine_table).unwrap();
        let ratio = dev_c / dev_f;
        assert!(
            (1.3..=3.0).contains(&ratio),
            "deviation ratio {ratio:.2} (coarse {dev_c:.3e}, fine {dev_f:.3e})"
        );
    }

    #[test]
    fn r_quadrature_is_exact_without_coupling() {
        let table = b_zero_table(1.0, 300);
        let ens = simulate_closed_loop(&table, 20, 3, *table.grid()).unwrap();
        assert_eq!(check_r_quadrature(&ens, &table).unwrap(), 0.0);
        for p in 0..20 {
            assert!(ens.r_path(p).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn pathological_coefficients_are_reported_not_propagated() {
        // A synthetic table with absurd magnitudes drives the explicit step
        // to overflow; the simulator must fail loudly.
        let params = ModelParams::default();
        let mult = Multipliers::new(0.75f64.sqrt(), 0.5, 0.05).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("huge.csv");
        std::fs::write(
            &path,
            "t,C1,C2,D1,D2\n0.0,1e300,0,1e300,0\n0.175,1e300,0,1e300,0\n0.35,1e300,0,1e300,0\n",
        )
        .unwrap();
        let table = RiccatiTable::read_csv(&path, &params, &mult).unwrap();
        match simulate_closed_loop(&table, 4, 1, *table.grid()) {
            Err(SimulateError::NonFinite { .. }) => {}
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn grid_outside_table_span_is_rejected() {
        let table = reference_table(200);
        let grid = TimeGrid::new(0.0, 0.5, 100).unwrap();
        assert!(matches!(
            simulate_closed_loop(&table, 5, 1, grid),
            Err(SimulateError::SpanMismatch(_))
        ));
        assert!(matches!(
            simulate_closed_loop(&table, 0, 1, *table.grid()),
            Err(SimulateError::InvalidInput(_))
        ));
    }

    #[test]
    fn csv_dump_has_expected_shape() {
        let table = reference_table(50);
        let ens = simulate_closed_loop(&table, 10, 21, *table.grid()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("paths.csv");
        ens.write_paths_csv(&path, 3).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,path_id,x,R,e,s");
        assert_eq!(text.lines().count(), 1 + 3 * 51);
        // Spot-check a stored value round-trips.
        let row: Vec<&str> = text.lines().nth(2).unwrap().split(',').collect();
        assert_eq!(row[1], "0");
        assert_eq!(row[2].parse::<f64>().unwrap(), ens.x_path(0)[1]);
    }
}
