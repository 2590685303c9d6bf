//! Monte-Carlo estimation of both cost functionals, the multiplier sweep
//! with common random numbers, participation-threshold calibration by
//! bisection, and the "win-win" comparison report.
//!
//! ```text
//! JA = E[ ∫₀ᵀ (s−e)²/2 dt − α·x(T)²/2 ]      (agent)
//! JP = E[ ∫₀ᵀ s²/2 dt     − β·x(T)²/2 ]      (principal)
//! ```
//!
//! Every routine here evaluates cost pairs through the same seeded
//! streaming kernel, so two evaluations at identical multipliers agree
//! bit-for-bit (common random numbers): sweeps compare rows, and the
//! calibration bisects, on a single fixed noise realization rather than on
//! resampled noise. The participation threshold `W0` enters through
//! [`ModelParams::w0`]: calibration finds the multiplier `λ_A⁰` whose agent
//! cost equals `W0`, and the win-win report compares both parties' costs at
//! `λ_A = 0` against that calibrated contract.

use crate::model::{ModelError, ModelParams, Multipliers};
use crate::ode::{OdeError, TimeGrid};
use crate::riccati::{solve_riccati, RiccatiError};
use crate::simulate::{
    path_costs, simulate_cost_samples, CostSamples, PathEnsemble, SimulateError,
};
use serde::Serialize;
use std::path::Path;
use thiserror::Error;

/// Largest |λ_A| probed by bracketing and calibration. Beyond this the pair
/// approaches the degenerate corner of the multiplier circle where the
/// cash-flow gain `b/λ_P` stiffens the coefficient ODEs for no practical
/// gain in threshold coverage.
const LAMBDA_BRACKET_CAP: f64 = 0.95;

/// Hard iteration cap for the calibration bisection; with the
/// stderr-floored stopping rule it terminates far earlier in practice.
const MAX_BISECTIONS: usize = 60;

/// Errors from estimation, sweeping, and calibration.
#[derive(Debug, Error)]
pub enum ContractError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Riccati(#[from] RiccatiError),
    #[error(transparent)]
    Simulate(#[from] SimulateError),
    /// The multiplier grid failed validation (order, range, finiteness).
    #[error("invalid multiplier grid: {0}")]
    InvalidGrid(String),
    /// A point required by calibration is infeasible (coefficient blow-up).
    #[error("coefficient solve infeasible at lambda_A = {lambda_a}")]
    Infeasible { lambda_a: f64 },
    /// The participation threshold lies outside the achievable cost range.
    #[error(
        "threshold W0 = {w0} not bracketed: agent cost spans [{ja_hi}, {ja_lo}] \
         over the multiplier range"
    )]
    NotBracketed { w0: f64, ja_lo: f64, ja_hi: f64 },
    /// Bisection hit the iteration cap without meeting the tolerance.
    #[error(
        "calibration did not converge in {iterations} bisections \
         (best lambda_A = {best_lambda}, agent cost {best_ja})"
    )]
    NotConverged {
        iterations: usize,
        best_lambda: f64,
        best_ja: f64,
    },
    /// The threshold is at or below the agent cost of the λ_A = 0 contract,
    /// so no feasible contract can match it from above.
    #[error("threshold W0 = {w0} is not above the baseline agent cost W_c = {w_c}")]
    ThresholdBelowWc { w0: f64, w_c: f64 },
    #[error("CSV I/O failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV encoding failed: {0}")]
    Csv(#[from] csv::Error),
}

/// A Monte-Carlo estimate: sample mean, its standard error, and the sample
/// size behind it.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CostEstimate {
    pub mean: f64,
    /// Sample standard deviation (n−1 normalization) divided by √n_paths.
    pub stderr: f64,
    pub n_paths: usize,
}

impl CostEstimate {
    /// Mean and standard error of a sample vector (stderr 0 for n < 2).
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let var = samples
                .iter()
                .map(|x| (x - mean) * (x - mean))
                .sum::<f64>()
                / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        CostEstimate {
            mean,
            stderr,
            n_paths: n,
        }
    }
}

/// One multiplier pair of a sweep with its cost estimates; estimates are
/// absent when the coefficient solve or the simulation diverged for this
/// pair (the row is infeasible but the sweep continues).
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub lambda_a: f64,
    pub lambda_p: f64,
    pub ja: Option<CostEstimate>,
    pub jp: Option<CostEstimate>,
}

/// Cost estimates over a strictly increasing λ_A grid, all rows sharing one
/// noise realization (common random numbers).
#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    rows: Vec<SweepRow>,
    n_paths: usize,
    seed: u64,
}

impl SweepResult {
    pub fn rows(&self) -> &[SweepRow] {
        &self.rows
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Writes the sweep as CSV with columns
    /// `lambda_A,lambda_P,JA_mean,JA_se,JP_mean,JP_se`; infeasible rows
    /// leave the four estimate cells empty.
    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<(), ContractError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["lambda_A", "lambda_P", "JA_mean", "JA_se", "JP_mean", "JP_se"])?;
        for row in &self.rows {
            let fmt = |e: Option<&CostEstimate>, f: fn(&CostEstimate) -> f64| {
                e.map_or(String::new(), |e| format!("{:.16e}", f(e)))
            };
            w.write_record([
                format!("{:.16e}", row.lambda_a),
                format!("{:.16e}", row.lambda_p),
                fmt(row.ja.as_ref(), |e| e.mean),
                fmt(row.ja.as_ref(), |e| e.stderr),
                fmt(row.jp.as_ref(), |e| e.mean),
                fmt(row.jp.as_ref(), |e| e.stderr),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Result of the participation calibration: the multiplier whose agent cost
/// meets the threshold, the estimate at that root, and the bisection count.
#[derive(Debug, Clone, Serialize)]
pub struct Calibration {
    pub lambda_a0: f64,
    pub ja: CostEstimate,
    pub iterations: usize,
}

/// The calibrated comparison point of a win-win report.
#[derive(Debug, Clone, Serialize)]
pub struct CalibratedPoint {
    pub lambda_a0: f64,
    pub ja: CostEstimate,
    pub jp: CostEstimate,
}

/// Costs of the λ_A = 0 contract versus the threshold-calibrated contract.
///
/// The report asserts the two win-win inequalities at the two-standard-
/// error level: the agent's cost at λ_A = 0 lies below the threshold `W0`
/// (`agent_prefers_zero`), and the principal's cost at λ_A = 0 lies below
/// their cost under the calibrated contract (`principal_prefers_zero`).
/// When the agent cost barely varies over the whole multiplier range
/// (e.g. `b = 0` decouples the contract), calibration is skipped and the
/// report is flagged `non_informative`.
#[derive(Debug, Clone, Serialize)]
pub struct WinWinReport {
    pub w0: f64,
    /// Baseline agent cost `W_c` = mean agent cost at λ_A = 0.
    pub w_c: f64,
    pub ja_at_zero: CostEstimate,
    pub jp_at_zero: CostEstimate,
    pub calibration: Option<CalibratedPoint>,
    pub non_informative: bool,
    pub agent_prefers_zero: bool,
    pub principal_prefers_zero: Option<bool>,
}

/// Mean and stderr of both cost functionals from streamed per-path samples.
pub fn estimate_costs_from_samples(samples: &CostSamples) -> (CostEstimate, CostEstimate) {
    (
        CostEstimate::from_samples(&samples.ja),
        CostEstimate::from_samples(&samples.jp),
    )
}

/// Estimates both cost functionals from a stored ensemble: per path, the
/// trapezoid-rule integral of the running costs plus the terminal term,
/// then mean and stderr across paths.
///
/// Recomputes through the same arithmetic as the streaming kernel, so this
/// agrees bit-for-bit with [`estimate_costs_from_samples`] over
/// [`simulate_cost_samples`] at equal `(seed, grid, n_paths)`.
pub fn estimate_costs(
    ensemble: &PathEnsemble,
    params: &ModelParams,
) -> (CostEstimate, CostEstimate) {
    let half_dt = 0.5 * ensemble.grid().dt();
    let n = ensemble.n_paths();
    let mut ja = Vec::with_capacity(n);
    let mut jp = Vec::with_capacity(n);
    for p in 0..n {
        let x_terminal = *ensemble.x_path(p).last().expect("non-empty path");
        let (a, b) = path_costs(
            ensemble.s_path(p),
            ensemble.e_path(p),
            x_terminal,
            half_dt,
            params.alpha,
            params.beta,
        );
        ja.push(a);
        jp.push(b);
    }
    (
        CostEstimate::from_samples(&ja),
        CostEstimate::from_samples(&jp),
    )
}

/// Outcome of one multiplier evaluation: estimates, or infeasibility of the
/// coefficient solve / simulation at that multiplier.
enum PointOutcome {
    Feasible(CostEstimate, CostEstimate),
    Infeasible,
}

/// Solves the coefficients and streams the cost estimates for one λ_A,
/// classifying blow-ups as infeasibility rather than hard errors.
fn eval_point(
    params: &ModelParams,
    lambda_a: f64,
    n_paths: usize,
    seed: u64,
    grid: TimeGrid,
) -> Result<PointOutcome, ContractError> {
    let mult = Multipliers::from_lambda_a(lambda_a, params.lambda_min)?;
    let table = match solve_riccati(params, &mult, grid) {
        Ok(t) => t,
        Err(RiccatiError::Ode(OdeError::BlowUp { .. }))
        | Err(RiccatiError::Ode(OdeError::NonFinite { .. })) => {
            return Ok(PointOutcome::Infeasible)
        }
        Err(e) => return Err(e.into()),
    };
    match simulate_cost_samples(&table, n_paths, seed, grid) {
        Ok(samples) => {
            let (ja, jp) = estimate_costs_from_samples(&samples);
            Ok(PointOutcome::Feasible(ja, jp))
        }
        Err(SimulateError::NonFinite { .. }) => Ok(PointOutcome::Infeasible),
        Err(e) => Err(e.into()),
    }
}

/// Like [`eval_point`] but treats infeasibility as an error — for the
/// calibration path, where a missing estimate cannot be skipped.
fn eval_required(
    params: &ModelParams,
    lambda_a: f64,
    n_paths: usize,
    seed: u64,
    grid: TimeGrid,
) -> Result<(CostEstimate, CostEstimate), ContractError> {
    match eval_point(params, lambda_a, n_paths, seed, grid)? {
        PointOutcome::Feasible(ja, jp) => Ok((ja, jp)),
        PointOutcome::Infeasible => Err(ContractError::Infeasible { lambda_a }),
    }
}

/// Estimates both costs across a strictly increasing λ_A grid with common
/// random numbers: every row re-solves the coefficients and re-simulates
/// with the same master seed, so rows differ only through the multipliers.
/// A coefficient blow-up or diverging simulation marks that row infeasible
/// (empty estimates) without aborting the sweep.
pub fn sweep_multipliers(
    params: &ModelParams,
    lambda_a_grid: &[f64],
    n_paths: usize,
    seed: u64,
    grid: TimeGrid,
) -> Result<SweepResult, ContractError> {
    if lambda_a_grid.is_empty() {
        return Err(ContractError::InvalidGrid("empty λ_A grid".into()));
    }
    if lambda_a_grid.iter().any(|l| !l.is_finite()) {
        return Err(ContractError::InvalidGrid("non-finite λ_A value".into()));
    }
    if lambda_a_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ContractError::InvalidGrid(
            "λ_A grid must be strictly increasing".into(),
        ));
    }
    let mut rows = Vec::with_capacity(lambda_a_grid.len());
    for &lambda_a in lambda_a_grid {
        let mult = Multipliers::from_lambda_a(lambda_a, params.lambda_min)?;
        let row = match eval_point(params, lambda_a, n_paths, seed, grid)? {
            PointOutcome::Feasible(ja, jp) => SweepRow {
                lambda_a,
                lambda_p: mult.lambda_p(),
                ja: Some(ja),
                jp: Some(jp),
            },
            PointOutcome::Infeasible => SweepRow {
                lambda_a,
                lambda_p: mult.lambda_p(),
                ja: None,
                jp: None,
            },
        };
        rows.push(row);
    }
    Ok(SweepResult {
        rows,
        n_paths,
        seed,
    })
}

/// Upper end of the λ_A bracket compatible with the multiplier floor.
fn bracket_limit(params: &ModelParams) -> f64 {
    let floor_bound = (1.0 - params.lambda_min * params.lambda_min).sqrt();
    LAMBDA_BRACKET_CAP.min(floor_bound * 0.999)
}

/// Bisection core, reusing precomputed endpoint estimates when available.
fn calibrate_inner(
    params: &ModelParams,
    n_paths: usize,
    seed: u64,
    tol: f64,
    grid: TimeGrid,
    endpoints: Option<(CostEstimate, CostEstimate)>,
) -> Result<Calibration, ContractError> {
    let w0 = params.w0;
    let lim = bracket_limit(params);
    let (ja_lo_end, ja_hi_end) = match endpoints {
        Some(pair) => pair,
        None => {
            let (lo, _) = eval_required(params, -lim, n_paths, seed, grid)?;
            let (hi, _) = eval_required(params, lim, n_paths, seed, grid)?;
            (lo, hi)
        }
    };
    // The agent cost decreases in λ_A, so the root is bracketed only when
    // it lies between the two endpoint estimates.
    if !(ja_hi_end.mean < w0 && w0 < ja_lo_end.mean) {
        return Err(ContractError::NotBracketed {
            w0,
            ja_lo: ja_lo_end.mean,
            ja_hi: ja_hi_end.mean,
        });
    }
    let (mut lo, mut hi) = (-lim, lim);
    let mut best = (0.0, ja_lo_end);
    for iteration in 1..=MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        let (ja, _) = eval_required(params, mid, n_paths, seed, grid)?;
        best = (mid, ja);
        if (ja.mean - w0).abs() < tol.max(2.0 * ja.stderr) {
            return Ok(Calibration {
                lambda_a0: mid,
                ja,
                iterations: iteration,
            });
        }
        if ja.mean > w0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(ContractError::NotConverged {
        iterations: MAX_BISECTIONS,
        best_lambda: best.0,
        best_ja: best.1.mean,
    })
}

/// Finds the multiplier `λ_A⁰` whose agent cost equals the participation
/// threshold `params.w0`, by bisection over λ_A with common random numbers.
/// Stops when `|JA − W0| < max(tol, 2·stderr)`; the stderr floor keeps the
/// target meaningful relative to Monte-Carlo noise.
///
/// # Errors
/// [`ContractError::NotBracketed`] if `W0` lies outside the agent-cost
/// range over the probed multiplier interval;
/// [`ContractError::NotConverged`] after 60 bisections.
pub fn calibrate_participation(
    params: &ModelParams,
    n_paths: usize,
    seed: u64,
    tol: f64,
    grid: TimeGrid,
) -> Result<Calibration, ContractError> {
    calibrate_inner(params, n_paths, seed, tol, grid, None)
}

/// Compares the λ_A = 0 contract against the threshold-calibrated contract
/// and reports whether both parties prefer the former.
///
/// `tol` is the bisection tolerance used for the embedded calibration.
/// Requires `W0 ∈ (W_c, 0)` where `W_c` is the agent cost at λ_A = 0;
/// otherwise [`ContractError::ThresholdBelowWc`]. When the agent cost is
/// flat across multipliers (within two joint standard errors between the
/// bracket endpoints), the report is returned `non_informative` with no
/// calibrated point.
pub fn win_win_report(
    params: &ModelParams,
    n_paths: usize,
    seed: u64,
    tol: f64,
    grid: TimeGrid,
) -> Result<WinWinReport, ContractError> {
    let w0 = params.w0;
    let (ja0, jp0) = eval_required(params, 0.0, n_paths, seed, grid)?;
    let w_c = ja0.mean;
    if w0 <= w_c {
        return Err(ContractError::ThresholdBelowWc { w0, w_c });
    }

    let lim = bracket_limit(params);
    let (ja_lo, _) = eval_required(params, -lim, n_paths, seed, grid)?;
    let (ja_hi, _) = eval_required(params, lim, n_paths, seed, grid)?;
    let joint_se = (ja_lo.stderr * ja_lo.stderr + ja_hi.stderr * ja_hi.stderr).sqrt();
    let agent_prefers_zero = w_c < w0 + 2.0 * ja0.stderr;

    if (ja_lo.mean - ja_hi.mean).abs() < 2.0 * joint_se {
        // The agent cost does not respond to the multiplier: calibration
        // would chase noise, so report the degenerate comparison instead.
        return Ok(WinWinReport {
            w0,
            w_c,
            ja_at_zero: ja0,
            jp_at_zero: jp0,
            calibration: None,
            non_informative: true,
            agent_prefers_zero,
            principal_prefers_zero: None,
        });
    }

    let cal = calibrate_inner(params, n_paths, seed, tol, grid, Some((ja_lo, ja_hi)))?;
    let (ja_root, jp_root) = eval_required(params, cal.lambda_a0, n_paths, seed, grid)?;
    let joint_jp = (jp0.stderr * jp0.stderr + jp_root.stderr * jp_root.stderr).sqrt();
    let principal_prefers_zero = jp0.mean < jp_root.mean + 2.0 * joint_jp;
    Ok(WinWinReport {
        w0,
        w_c,
        ja_at_zero: ja0,
        jp_at_zero: jp0,
        calibration: Some(CalibratedPoint {
            lambda_a0: cal.lambda_a0,
            ja: ja_root,
            jp: jp_root,
        }),
        non_informative: false,
        agent_prefers_zero,
        principal_prefers_zero: Some(principal_prefers_zero),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::riccati::RiccatiTable;
    use crate::simulate::simulate_closed_loop;
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;

    fn table_for(params: &ModelParams, lambda_a: f64, n_steps: usize) -> RiccatiTable {
        let mult = Multipliers::from_lambda_a(lambda_a, params.lambda_min).unwrap();
        let grid = TimeGrid::new(0.0, params.horizon, n_steps).unwrap();
        solve_riccati(params, &mult, grid).unwrap()
    }

    #[test]
    fn stored_and_streamed_estimates_agree_bitwise() {
        let params = ModelParams::default();
        let table = table_for(&params, 0.75f64.sqrt(), 300);
        let grid = *table.grid();
        let ens = simulate_closed_loop(&table, 400, 9, grid).unwrap();
        let (ja_e, jp_e) = estimate_costs(&ens, &params);
        let samples = simulate_cost_samples(&table, 400, 9, grid).unwrap();
        let (ja_s, jp_s) = estimate_costs_from_samples(&samples);
        assert_eq!(ja_e.mean, ja_s.mean);
        assert_eq!(ja_e.stderr, ja_s.stderr);
        assert_eq!(jp_e.mean, jp_s.mean);
        assert_eq!(jp_e.stderr, jp_s.stderr);
    }

    #[test]
    fn no_noise_no_coupling_costs_are_exactly_zero() {
        let params = ModelParams {
            b: 0.0,
            sigma: 0.0,
            ..ModelParams::default()
        };
        let table = table_for(&params, 0.0, 200);
        let ens = simulate_closed_loop(&table, 20, 1, *table.grid()).unwrap();
        let (ja, jp) = estimate_costs(&ens, &params);
        assert_eq!(ja.mean, 0.0);
        assert_eq!(ja.stderr, 0.0);
        assert_eq!(jp.mean, 0.0);
        assert_eq!(jp.stderr, 0.0);
    }

    #[test]
    fn equal_controls_leave_only_the_terminal_terms() {
        // b = 0 forces e = s = 0 along every path, so the running costs
        // vanish identically and each sample reduces to its terminal term.
        let params = ModelParams {
            b: 0.0,
            ..ModelParams::default()
        };
        let table = table_for(&params, 0.0, 400);
        let grid = *table.grid();
        let n = 20_000;
        let samples = simulate_cost_samples(&table, n, 33, grid).unwrap();
        for p in 0..n {
            let xt = samples.x_terminal[p];
            assert_eq!(samples.ja[p], -0.5 * params.alpha * xt * xt);
            assert_eq!(samples.jp[p], -0.5 * params.beta * xt * xt);
        }
        // And the mean matches −α/2·Var[x(T)] for the uncontrolled
        // Ornstein process, Var = σ²(e^{2aT} − 1)/(2a).
        let (ja, _) = estimate_costs_from_samples(&samples);
        let var_exact = (params.sigma * params.sigma)
            * ((2.0 * params.a * params.horizon).exp() - 1.0)
            / (2.0 * params.a);
        let expect = -0.5 * params.alpha * var_exact;
        assert!(
            (ja.mean - expect).abs() < 3.0 * ja.stderr,
            "mean {:.5} vs closed form {expect:.5} (se {:.2e})",
            ja.mean,
            ja.stderr
        );
    }

    /// Brute-force re-implementation with a different RNG (StdRng), a
    /// halved step, naive separate accumulators, and controls recomputed
    /// from interpolated coefficients — shares nothing with the production
    /// kernel except the model definition.
    fn brute_force_costs(
        params: &ModelParams,
        lambda_a: f64,
        n_paths: usize,
        n_steps: usize,
        seed: u64,
    ) -> (CostEstimate, CostEstimate) {
        let mult = Multipliers::from_lambda_a(lambda_a, params.lambda_min).unwrap();
        let grid = TimeGrid::new(0.0, params.horizon, n_steps).unwrap();
        let table = solve_riccati(params, &mult, grid).unwrap();
        let dt = grid.dt();
        let (b, lam_p) = (params.b, mult.lambda_p());
        let mut ja = Vec::with_capacity(n_paths);
        let mut jp = Vec::with_capacity(n_paths);
        for path in 0..n_paths {
            let mut rng = rand::rngs::StdRng::seed_from_u64(
                seed ^ (path as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
            );
            let (mut x, mut r) = (0.0f64, 0.0f64);
            let (mut int_a, mut int_p) = (0.0f64, 0.0f64);
            let mut prev: Option<(f64, f64)> = None;
            for i in 0..=n_steps {
                let t = grid.node(i);
                let c = table.coefficients_at(t).unwrap();
                let p = c[0] * x + c[1] * r;
                let cap = c[2] * x + c[3] * r;
                let s = b / lam_p * cap;
                let e = b * p + s;
                let fa = (s - e) * (s - e) / 2.0;
                let fp = s * s / 2.0;
                if let Some((pa, pp)) = prev {
                    int_a += dt * (pa + fa) / 2.0;
                    int_p += dt * (pp + fp) / 2.0;
                }
                prev = Some((fa, fp));
                if i < n_steps {
                    let z: f64 = rng.sample(StandardNormal);
                    let drift = params.a * x + b * b * p + b * s;
                    x += drift * dt + params.sigma * dt.sqrt() * z;
                    r += (params.a * r + lambda_a * b * b * p - b * b * cap) * dt;
                }
            }
            ja.push(int_a - params.alpha / 2.0 * x * x);
            jp.push(int_p - params.beta / 2.0 * x * x);
        }
        (
            CostEstimate::from_samples(&ja),
            CostEstimate::from_samples(&jp),
        )
    }

    #[test]
    fn independent_reimplementation_confirms_the_estimates() {
        let params = ModelParams::default();
        let lambda_a = 0.75f64.sqrt();
        let n_paths = 30_000;
        let table = table_for(&params, lambda_a, 2000);
        let samples =
            simulate_cost_samples(&table, n_paths, 2718, *table.grid()).unwrap();
        let (ja, jp) = estimate_costs_from_samples(&samples);
        let (ja_b, jp_b) = brute_force_costs(&params, lambda_a, n_paths, 4000, 31_415);
        let joint_a = (ja.stderr * ja.stderr + ja_b.stderr * ja_b.stderr).sqrt();
        let joint_p = (jp.stderr * jp.stderr + jp_b.stderr * jp_b.stderr).sqrt();
        assert!(
            (ja.mean - ja_b.mean).abs() < 3.0 * joint_a,
            "agent: {:.5} vs {:.5} (3·joint se {:.2e})",
            ja.mean,
            ja_b.mean,
            3.0 * joint_a
        );
        assert!(
            (jp.mean - jp_b.mean).abs() < 3.0 * joint_p,
            "principal: {:.5} vs {:.5} (3·joint se {:.2e})",
            jp.mean,
            jp_b.mean,
            3.0 * joint_p
        );
    }

    #[test]
    fn identical_multipliers_give_bitwise_identical_rows() {
        let params = ModelParams::default();
        let grid = TimeGrid::new(0.0, params.horizon, 400).unwrap();
        let one = sweep_multipliers(&params, &[0.3], 500, 11, grid).unwrap();
        let two = sweep_multipliers(&params, &[0.3], 500, 11, grid).unwrap();
        let (ra, rb) = (&one.rows()[0], &two.rows()[0]);
        assert_eq!(ra.ja.unwrap().mean, rb.ja.unwrap().mean);
        assert_eq!(ra.ja.unwrap().stderr, rb.ja.unwrap().stderr);
        assert_eq!(ra.jp.unwrap().mean, rb.jp.unwrap().mean);
    }

    #[test]
    fn degenerate_single_point_sweep_reproduces_estimate_costs() {
        let params = ModelParams::default();
        let grid = TimeGrid::new(0.0, params.horizon, 400).unwrap();
        let sweep = sweep_multipliers(&params, &[0.0], 2000, 5, grid).unwrap();
        let row = &sweep.rows()[0];
        assert_eq!(row.lambda_p, 1.0);
        let table = table_for(&params, 0.0, 400);
        let samples = simulate_cost_samples(&table, 2000, 5, grid).unwrap();
        let (ja, jp) = estimate_costs_from_samples(&samples);
        assert_eq!(row.ja.unwrap().mean, ja.mean);
        assert_eq!(row.jp.unwrap().mean, jp.mean);
    }

    #[test]
    fn sweep_rejects_malformed_grids() {
        let params = ModelParams::default();
        let grid = TimeGrid::new(0.0, params.horizon, 100).unwrap();
        for bad in [&[][..], &[0.2, 0.2][..], &[0.5, 0.1][..], &[f64::NAN][..]] {
            assert!(matches!(
                sweep_multipliers(&params, bad, 10, 1, grid),
                Err(ContractError::InvalidGrid(_))
            ));
        }
        // A multiplier past the floor bound is a precondition violation.
        assert!(matches!(
            sweep_multipliers(&params, &[0.9999], 10, 1, grid),
            Err(ContractError::Model(ModelError::MultiplierFloor { .. }))
        ));
    }

    #[test]
    fn blow_up_rows_are_marked_infeasible_not_fatal() {
        // A long horizon sends the coefficient solve past the blow-up
        // guard for every multiplier; the sweep must still return rows.
        let params = ModelParams {
            horizon: 3.0,
            ..ModelParams::default()
        };
        let grid = TimeGrid::new(0.0, 3.0, 500).unwrap();
        let sweep = sweep_multipliers(&params, &[-0.5, 0.0, 0.5], 50, 1, grid).unwrap();
        assert_eq!(sweep.rows().len(), 3);
        for row in sweep.rows() {
            assert!(row.ja.is_none() && row.jp.is_none());
            assert!((row.lambda_a * row.lambda_a + row.lambda_p * row.lambda_p - 1.0).abs() < 1e-12);
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sweep.csv");
        sweep.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "lambda_A,lambda_P,JA_mean,JA_se,JP_mean,JP_se"
        );
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first.len(), 6);
        assert!(first[2].is_empty() && first[5].is_empty());
    }

    #[test]
    fn sweep_csv_round_trips_feasible_rows() {
        let params = ModelParams::default();
        let grid = TimeGrid::new(0.0, params.horizon, 300).unwrap();
        let lam: Vec<f64> = vec![-0.6, -0.2, 0.0, 0.4, 0.8];
        let sweep = sweep_multipliers(&params, &lam, 1000, 17, grid).unwrap();
        assert!(sweep
            .rows()
            .windows(2)
            .all(|w| w[0].lambda_a < w[1].lambda_a));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sweep.csv");
        sweep.write_csv(&path).unwrap();
        let mut rdr = csv::Reader::from_path(&path).unwrap();
        let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 5);
        for (rec, row) in rows.iter().zip(sweep.rows()) {
            assert_eq!(rec[0].parse::<f64>().unwrap(), row.lambda_a);
            assert_eq!(rec[2].parse::<f64>().unwrap(), row.ja.unwrap().mean);
            assert_eq!(rec[5].parse::<f64>().unwrap(), row.jp.unwrap().stderr);
        }
    }

    #[test]
    fn stderr_scales_as_inverse_square_root_of_paths() {
        let params = ModelParams {
            b: 0.0,
            ..ModelParams::default()
        };
        let table = table_for(&params, 0.0, 300);
        let grid = *table.grid();
        let small = simulate_cost_samples(&table, 2_500, 4, grid).unwrap();
        let large = simulate_cost_samples(&table, 10_000, 4, grid).unwrap();
        let (ja_s, _) = estimate_costs_from_samples(&small);
        let (ja_l, _) = estimate_costs_from_samples(&large);
        let ratio = ja_s.stderr / ja_l.stderr;
        assert!(
            (1.6..=2.4).contains(&ratio),
            "stderr ratio {ratio:.3} after quadrupling paths"
        );
    }

    #[test]
    fn calibration_round_trips_a_known_cost() {
        let params = ModelParams::default();
        let grid = TimeGrid::new(0.0, params.horizon, 500).unwrap();
        let target_lambda = 0.3;
        let n_paths = 20_000;
        let (ja_target, _) =
            eval_required(&params, target_lambda, n_paths, 7, grid).unwrap();
        let tuned = ModelParams {
            w0: ja_target.mean,
            ..params
        };
        let cal = calibrate_participation(&tuned, n_paths, 7, 1e-3, grid).unwrap();
        assert!(
            (cal.lambda_a0 - target_lambda).abs() < 0.08,
            "calibrated λ_A = {:.4}, expected ≈ {target_lambda}",
            cal.lambda_a0
        );
        assert!(cal.iterations <= 60);
        assert!(
            (cal.ja.mean - tuned.w0).abs() < 1e-3f64.max(2.0 * cal.ja.stderr),
            "root cost {:.5} vs threshold {:.5}",
            cal.ja.mean,
            tuned.w0
        );
    }

    #[test]
    fn absurd_threshold_is_not_bracketed() {
        let params = ModelParams {
            w0: -1e6,
            ..ModelParams::default()
        };
        let grid = TimeGrid::new(0.0, params.horizon, 300).unwrap();
        match calibrate_participation(&params, 2000, 3, 1e-3, grid) {
            Err(ContractError::NotBracketed { w0, ja_lo, ja_hi }) => {
                assert_eq!(w0, -1e6);
                assert!(ja_hi < ja_lo, "agent cost must decrease in λ_A");
            }
            other => panic!("expected NotBracketed, got {other:?}"),
        }
    }

    #[test]
    fn threshold_at_or_below_baseline_is_rejected() {
        let params = ModelParams {
            w0: -0.5,
            ..ModelParams::default()
        };
        let grid = TimeGrid::new(0.0, params.horizon, 500).unwrap();
        match win_win_report(&params, 5000, 13, 1e-3, grid) {
            Err(ContractError::ThresholdBelowWc { w0, w_c }) => {
                assert_eq!(w0, -0.5);
                assert!(w_c > -0.5, "baseline cost should sit above the threshold");
            }
            other => panic!("expected ThresholdBelowWc, got {other:?}"),
        }
    }

    #[test]
    fn win_win_report_holds_at_reference_parameters() {
        let params = ModelParams::default();
        let grid = TimeGrid::new(0.0, params.horizon, 1000).unwrap();
        let report = win_win_report(&params, 20_000, 101, 1e-3, grid).unwrap();
        assert!(report.w_c < report.w0 && report.w0 < 0.0);
        assert!(!report.non_informative);
        assert!(report.agent_prefers_zero);
        assert_eq!(report.principal_prefers_zero, Some(true));
        let cal = report.calibration.as_ref().expect("calibrated point");
        assert!(
            (cal.ja.mean - report.w0).abs() < 1e-3f64.max(2.0 * cal.ja.stderr),
            "calibrated agent cost {:.5} vs threshold {:.5}",
            cal.ja.mean,
            report.w0
        );
        // The calibrated multiplier sits on the negative branch for the
        // reference parameters (threshold above the λ_A = 0 cost).
        assert!(cal.lambda_a0 < 0.0);
        let json = serde_json::to_string(&report).unwrap();
        for key in [
            "w0",
            "w_c",
            "ja_at_zero",
            "jp_at_zero",
            "lambda_a0",
            "non_informative",
        ] {
            assert!(json.contains(key), "JSON report missing key {key}");
        }
    }

    #[test]
    fn decoupled_contract_flags_non_informative_calibration() {
        let params = ModelParams {
            b: 0.0,
            w0: -0.02,
            ..ModelParams::default()
        };
        let grid = TimeGrid::new(0.0, params.horizon, 300).unwrap();
        let report = win_win_report(&params, 5000, 29, 1e-3, grid).unwrap();
        assert!(report.non_informative);
        assert!(report.calibration.is_none());
        assert_eq!(report.principal_prefers_zero, None);
        assert!(report.agent_prefers_zero);
    }
}
