//! Standalone agent problem with a state-dependent cash-flow field: the
//! optimal effort as a log-derivative of a heat-equation solution, evaluated
//! by two independent numerical routes, plus a residual probe of the
//! associated forced Burgers equation.
//!
//! For a differentiable cash-flow map `(t, x) ↦ s(t, x)` the optimal effort
//! admits the closed representation
//!
//! ```text
//!            ∫ₜᵀ ∫ (ξ−x)/(σ²(τ−t)) · G(x, ξ, τ−t) · s(τ, ξ) dξ dτ
//! φ(t,x) = σ² ───────────────────────────────────────────────────
//!            1 + ∫ₜᵀ ∫ G(x, ξ, τ−t) · s(τ, ξ) dξ dτ
//! ```
//!
//! with `G` the Gauss kernel of variance `σ²(τ−t)`. Equivalently,
//! `φ = σ²·∂ₓ ln v` where `v` solves the backward heat equation
//! `v_t = −(σ²/2)·v_xx − s` with `v(T, ·) = 1`. Both routes are implemented:
//!
//! * [`effort_hopf_cole`] — tensor-product quadrature of the two double
//!   integrals, with per-slab spatial windows `[x ± L·σ·√(τ−t)]` scaled to
//!   the kernel width and the first time cell evaluated at its midpoint
//!   (the integrand has a finite `τ → t` limit, but the kernel factors are
//!   indeterminate exactly at `τ = t`);
//! * [`heat_solve_check`] — explicit finite differences for `v` on a padded
//!   interval, then centered differencing of `σ²·ln v`.
//!
//! [`burgers_residual`] evaluates `φ_t + φ·φ_x + (σ²/2)·φ_xx + s_x` by
//! centered differences on a tabulated effort field. Note that the
//! quadrature/heat effort for `s(t,x) = x` reproduces
//! `σ²(T−t)/(1 + x(T−t))`, whose residual under this particular sign
//! arrangement is the nonzero analytic defect `1 − σ²/(1+x(T−t))²`; the
//! tests pin the stencil against that defect rather than against zero.

use crate::model::ModelParams;
use rayon::prelude::*;
use std::path::Path;
use thiserror::Error;

/// Errors from effort evaluation and the heat-equation cross-check.
#[derive(Debug, Error)]
pub enum BurgersError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    /// The kernel representation requires σ > 0.
    #[error("volatility must be positive for the kernel representation")]
    ZeroVolatility,
    /// The cash-flow field is too large at the truncated window edge: the
    /// Gaussian tail no longer dominates and the quadrature would lose mass.
    #[error(
        "cash-flow field too large at the quadrature window edge \
         (t = {t:.4}, tau = {tau:.4}): truncated tail not negligible"
    )]
    QuadratureDomain { t: f64, tau: f64 },
    /// Explicit step too large for the diffusion number.
    #[error("explicit step unstable: sigma^2*dt/h^2 = {cfl:.3} > 1")]
    CflViolation { cfl: f64 },
    /// The heat solution lost positivity, so the log-derivative is
    /// undefined; the source is too negative for this domain and horizon.
    #[error("heat solution non-positive at t = {t:.4}, x = {x:.4}")]
    NonPositiveV { t: f64, x: f64 },
    #[error("CSV I/O failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV parse failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed field table: {0}")]
    Format(String),
}

/// A scalar field tabulated on a rectangular `(t, x)` grid, row-major in
/// `t`, with bilinear interpolation and constant (clamped) extension
/// outside the rectangle.
#[derive(Debug, Clone)]
pub struct FieldTable {
    t: Vec<f64>,
    x: Vec<f64>,
    values: Vec<f64>,
}

impl FieldTable {
    /// Builds a table from node vectors and a row-major value vector.
    pub fn from_values(
        t: Vec<f64>,
        x: Vec<f64>,
        values: Vec<f64>,
    ) -> Result<Self, BurgersError> {
        if t.len() < 2 || x.len() < 2 {
            return Err(BurgersError::Format(
                "field table needs at least 2 nodes per axis".into(),
            ));
        }
        if values.len() != t.len() * x.len() {
            return Err(BurgersError::Format(format!(
                "value count {} does not match {}x{} grid",
                values.len(),
                t.len(),
                x.len()
            )));
        }
        for axis in [&t, &x] {
            if axis.iter().any(|v| !v.is_finite())
                || axis.windows(2).any(|w| w[0] >= w[1])
            {
                return Err(BurgersError::Format(
                    "grid nodes must be finite and strictly increasing".into(),
                ));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(BurgersError::Format("non-finite table value".into()));
        }
        Ok(FieldTable { t, x, values })
    }

    /// Tabulates a function on the given nodes.
    pub fn from_fn(
        t: Vec<f64>,
        x: Vec<f64>,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Self, BurgersError> {
        let mut values = Vec::with_capacity(t.len() * x.len());
        for &ti in &t {
            for &xj in &x {
                values.push(f(ti, xj));
            }
        }
        Self::from_values(t, x, values)
    }

    /// Reads a table from CSV columns `t,x,<value>` covering a full
    /// rectangular grid (any row order).
    pub fn from_csv<P: AsRef<Path>>(path: P) -> Result<Self, BurgersError> {
        let mut rdr = csv::Reader::from_path(path)?;
        let mut triples: Vec<(f64, f64, f64)> = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != 3 {
                return Err(BurgersError::Format(format!(
                    "expected 3 columns, found {}",
                    rec.len()
                )));
            }
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| BurgersError::Format(format!("bad number {s:?}: {e}")))
            };
            triples.push((parse(&rec[0])?, parse(&rec[1])?, parse(&rec[2])?));
        }
        let mut t: Vec<f64> = triples.iter().map(|r| r.0).collect();
        let mut x: Vec<f64> = triples.iter().map(|r| r.1).collect();
        for axis in [&mut t, &mut x] {
            axis.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
            axis.dedup();
        }
        let (nt, nx) = (t.len(), x.len());
        if triples.len() != nt * nx {
            return Err(BurgersError::Format(format!(
                "{} rows do not fill a {}x{} rectangle",
                triples.len(),
                nt,
                nx
            )));
        }
        let locate = |nodes: &[f64], v: f64| {
            nodes
                .binary_search_by(|n| n.partial_cmp(&v).expect("finite"))
                .map_err(|_| BurgersError::Format(format!("stray grid value {v}")))
        };
        let mut values = vec![f64::NAN; nt * nx];
        for (tv, xv, sv) in triples {
            let (i, j) = (locate(&t, tv)?, locate(&x, xv)?);
            values[i * nx + j] = sv;
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(BurgersError::Format("duplicate rows leave grid holes".into()));
        }
        Self::from_values(t, x, values)
    }

    pub fn t_nodes(&self) -> &[f64] {
        &self.t
    }

    pub fn x_nodes(&self) -> &[f64] {
        &self.x
    }

    /// Value at grid node `(i, j)` = (t-index, x-index).
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.x.len() + j]
    }

    /// Locates the cell index and fractional offset of `v`, clamped to the
    /// node range.
    fn cell(nodes: &[f64], v: f64) -> (usize, f64) {
        let n = nodes.len();
        if v <= nodes[0] {
            return (0, 0.0);
        }
        if v >= nodes[n - 1] {
            return (n - 2, 1.0);
        }
        let hi = nodes.partition_point(|&n| n <= v);
        let i = hi - 1;
        let w = (v - nodes[i]) / (nodes[i + 1] - nodes[i]);
        (i, w)
    }

    /// Bilinear interpolation with clamped extension.
    pub fn value_at(&self, t: f64, x: f64) -> f64 {
        let (i, wt) = Self::cell(&self.t, t);
        let (j, wx) = Self::cell(&self.x, x);
        let nx = self.x.len();
        let v00 = self.values[i * nx + j];
        let v01 = self.values[i * nx + j + 1];
        let v10 = self.values[(i + 1) * nx + j];
        let v11 = self.values[(i + 1) * nx + j + 1];
        (1.0 - wt) * ((1.0 - wx) * v00 + wx * v01) + wt * ((1.0 - wx) * v10 + wx * v11)
    }

    /// x-derivative of the bilinear interpolant (zero outside the clamp).
    pub fn x_derivative_at(&self, t: f64, x: f64) -> f64 {
        if x <= self.x[0] || x >= self.x[self.x.len() - 1] {
            return 0.0;
        }
        let (i, wt) = Self::cell(&self.t, t);
        let (j, _) = Self::cell(&self.x, x);
        let nx = self.x.len();
        let dx = self.x[j + 1] - self.x[j];
        let d0 = (self.values[i * nx + j + 1] - self.values[i * nx + j]) / dx;
        let d1 = (self.values[(i + 1) * nx + j + 1] - self.values[(i + 1) * nx + j]) / dx;
        (1.0 - wt) * d0 + wt * d1
    }

    /// Writes the table as CSV columns `t,x,<value_header>`.
    pub fn write_csv<P: AsRef<Path>>(
        &self,
        path: P,
        value_header: &str,
    ) -> Result<(), BurgersError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "x", value_header])?;
        for (i, &ti) in self.t.iter().enumerate() {
            for (j, &xj) in self.x.iter().enumerate() {
                w.write_record([
                    format!("{ti:.16e}"),
                    format!("{xj:.16e}"),
                    format!("{:.16e}", self.value(i, j)),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// A cash-flow field `s(t, x)` offered to the agent.
#[derive(Debug, Clone)]
pub enum CashFlowField {
    /// `s ≡ C`.
    Constant(f64),
    /// `s(t, x) = intercept + slope·x`.
    Linear { intercept: f64, slope: f64 },
    /// Bilinear interpolation of a tabulated grid, clamped outside it.
    Tabulated(FieldTable),
}

impl CashFlowField {
    pub fn value(&self, t: f64, x: f64) -> f64 {
        match self {
            CashFlowField::Constant(c) => *c,
            CashFlowField::Linear { intercept, slope } => intercept + slope * x,
            CashFlowField::Tabulated(table) => table.value_at(t, x),
        }
    }

    /// ∂s/∂x — analytic for the closed kinds, interpolant derivative for
    /// tabulated fields.
    pub fn x_derivative(&self, t: f64, x: f64) -> f64 {
        match self {
            CashFlowField::Constant(_) => 0.0,
            CashFlowField::Linear { slope, .. } => *slope,
            CashFlowField::Tabulated(table) => table.x_derivative_at(t, x),
        }
    }

    /// Loads a tabulated field from CSV columns `t,x,s`.
    pub fn from_csv<P: AsRef<Path>>(path: P) -> Result<Self, BurgersError> {
        Ok(CashFlowField::Tabulated(FieldTable::from_csv(path)?))
    }
}

/// Controls for the kernel quadrature.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureConfig {
    /// Spatial window half-width in units of the kernel deviation σ√(τ−t).
    pub half_width_l: f64,
    /// Spatial nodes per time slab.
    pub nodes_per_axis: usize,
    /// Time slabs between `t` and `T`.
    pub time_nodes: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            half_width_l: 8.0,
            nodes_per_axis: 256,
            time_nodes: 256,
        }
    }
}

impl QuadratureConfig {
    pub fn validated(self) -> Result<Self, BurgersError> {
        if !self.half_width_l.is_finite() || self.half_width_l < 6.0 {
            return Err(BurgersError::InvalidConfig(
                "window half-width must be ≥ 6 kernel deviations".into(),
            ));
        }
        if self.nodes_per_axis < 64 {
            return Err(BurgersError::InvalidConfig(
                "need at least 64 spatial nodes per slab".into(),
            ));
        }
        if self.time_nodes < 64 {
            return Err(BurgersError::InvalidConfig(
                "need at least 64 time slabs".into(),
            ));
        }
        Ok(self)
    }
}

/// Kernel-weighted integrals of one time slab: the denominator integrand
/// `G·s` and the numerator integrand `(ξ−x)/(σ²u)·G·s`, both trapezoid-
/// integrated over the window `[x ± L·σ√u]`.
///
/// The window-edge guard: the kernel-weighted field at either endpoint must
/// stay below `max(1e−8, 10·e^{−L²/2})` of the largest interior magnitude —
/// the second term is the pure-kernel tail itself, so fields the Gaussian
/// dominates (bounded or polynomial growth) always pass, while faster
/// growth trips the guard. Returns `(den, num)` or `None` on a tripped
/// guard.
fn slab_integrals(
    s: &dyn Fn(f64, f64) -> f64,
    tau: f64,
    t: f64,
    x: f64,
    sigma: f64,
    quad: &QuadratureConfig,
) -> Option<(f64, f64)> {
    let u = tau - t;
    let su = sigma * u.sqrt();
    let half = quad.half_width_l * su;
    let n = quad.nodes_per_axis;
    let h = 2.0 * half / (n - 1) as f64;
    let norm = 1.0 / (2.0 * std::f64::consts::PI * sigma * sigma * u).sqrt();
    let inv_s2u = 1.0 / (sigma * sigma * u);
    let mut den = 0.0f64;
    let mut num = 0.0f64;
    let mut max_interior = 0.0f64;
    let mut edge_mag = 0.0f64;
    for i in 0..n {
        let dxi = -half + i as f64 * h;
        let g = norm * (-dxi * dxi * (0.5 * inv_s2u)).exp();
        let f_den = g * s(tau, x + dxi);
        let f_num = dxi * inv_s2u * f_den;
        let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        den += w * f_den;
        num += w * f_num;
        let mag = f_den.abs().max(f_num.abs() * su);
        if i == 0 || i == n - 1 {
            edge_mag = edge_mag.max(mag);
        } else {
            max_interior = max_interior.max(mag);
        }
    }
    let l = quad.half_width_l;
    let tail_floor = 1e-8f64.max(10.0 * (-0.5 * l * l).exp());
    if edge_mag > tail_floor * max_interior && edge_mag > f64::MIN_POSITIVE {
        return None;
    }
    Some((den * h, num * h))
}

/// Evaluates the optimal effort `φ(t, x)` by kernel quadrature.
///
/// Each time slab integrates over a window scaled to the kernel width at
/// that slab; the first slab after `t` is evaluated at its midpoint because
/// the kernel factors are indeterminate at `τ = t` (the integrand's limit
/// there is finite). At `t = T` the effort is zero by the terminal
/// condition.
///
/// # Errors
/// [`BurgersError::ZeroVolatility`] for σ = 0;
/// [`BurgersError::QuadratureDomain`] when the field outgrows the Gaussian
/// tail at the window edge; [`BurgersError::NonPositiveV`] if the
/// denominator `1 + ∫∫ G·s` is not positive at `(t, x)`.
pub fn effort_hopf_cole(
    t: f64,
    x: f64,
    s_field: &CashFlowField,
    params: &ModelParams,
    quad: &QuadratureConfig,
) -> Result<f64, BurgersError> {
    let quad = quad.validated()?;
    let big_t = params.horizon;
    if params.sigma <= 0.0 {
        return Err(BurgersError::ZeroVolatility);
    }
    if !t.is_finite() || !x.is_finite() || t > big_t {
        return Err(BurgersError::InvalidConfig(format!(
            "evaluation point (t = {t}, x = {x}) outside [0, {big_t}]"
        )));
    }
    if t == big_t {
        return Ok(0.0);
    }
    let s = |tau: f64, xi: f64| s_field.value(tau, xi);
    let n_t = quad.time_nodes;
    let dtau = (big_t - t) / n_t as f64;
    let mut den_total = 0.0f64;
    let mut num_total = 0.0f64;
    // First slab at its midpoint, weight dtau.
    let tau0 = t + 0.5 * dtau;
    let (d0, n0) = slab_integrals(&s, tau0, t, x, params.sigma, &quad)
        .ok_or(BurgersError::QuadratureDomain { t, tau: tau0 })?;
    den_total += dtau * d0;
    num_total += dtau * n0;
    // Remaining slabs by the trapezoid rule on nodes t + j·dtau, j ≥ 1.
    for j in 1..=n_t {
        let tau = t + j as f64 * dtau;
        let (d, nm) = slab_integrals(&s, tau, t, x, params.sigma, &quad)
            .ok_or(BurgersError::QuadratureDomain { t, tau })?;
        let w = if j == 1 || j == n_t { 0.5 } else { 1.0 };
        den_total += w * dtau * d;
        num_total += w * dtau * nm;
    }
    let v = 1.0 + den_total;
    if v <= 0.0 {
        return Err(BurgersError::NonPositiveV { t, x });
    }
    Ok(params.sigma * params.sigma * num_total / v)
}

/// Tabulates [`effort_hopf_cole`] on a rectangular `(t, x)` grid
/// (rows evaluated in parallel; `t = T` rows are exactly zero).
pub fn build_effort_table(
    s_field: &CashFlowField,
    params: &ModelParams,
    quad: &QuadratureConfig,
    t_nodes: Vec<f64>,
    x_nodes: Vec<f64>,
) -> Result<FieldTable, BurgersError> {
    let rows: Result<Vec<Vec<f64>>, BurgersError> = t_nodes
        .par_iter()
        .map(|&t| {
            x_nodes
                .iter()
                .map(|&x| effort_hopf_cole(t, x, s_field, params, quad))
                .collect()
        })
        .collect();
    let values: Vec<f64> = rows?.into_iter().flatten().collect();
    FieldTable::from_values(t_nodes, x_nodes, values)
}

/// Finite-difference grid for the heat-equation route: `nx` nodes across
/// the reported core `[x_min, x_max]`; `n_steps = 0` picks the largest
/// stable step automatically.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeatFdGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub n_steps: usize,
}

impl Default for HeatFdGrid {
    fn default() -> Self {
        HeatFdGrid {
            x_min: -2.0,
            x_max: 2.0,
            nx: 201,
            n_steps: 0,
        }
    }
}

impl HeatFdGrid {
    pub fn validated(self) -> Result<Self, BurgersError> {
        if !(self.x_min.is_finite() && self.x_max.is_finite() && self.x_min < self.x_max) {
            return Err(BurgersError::InvalidConfig(
                "need finite x_min < x_max".into(),
            ));
        }
        if self.nx < 5 {
            return Err(BurgersError::InvalidConfig("need nx ≥ 5".into()));
        }
        Ok(self)
    }
}

/// Output of the heat-equation route: the positive solution `v` and the
/// derived effort `φ = σ²·∂ₓ ln v`, both tabulated over the core domain at
/// every time level, plus the grid diagnostics.
#[derive(Debug, Clone)]
pub struct HeatCheck {
    pub v: FieldTable,
    pub phi: FieldTable,
    pub dt: f64,
    pub h: f64,
    /// Diffusion number σ²·dt/h² actually used (≤ 1 for stability).
    pub cfl: f64,
}

/// Solves `v_t = −(σ²/2)·v_xx − s`, `v(T, ·) = 1`, by explicit finite
/// differences marched in reversed time on an interval padded by eight
/// kernel deviations, and differentiates `σ²·ln v` centrally on the core.
///
/// The padding absorbs the artificial boundary (where the second
/// difference is dropped and only the source acts), so core values are
/// boundary-clean. Positivity of `v` is enforced on the core plus one
/// stencil cell; [`BurgersError::NonPositiveV`] reports the first loss.
pub fn heat_solve_check(
    s_field: &CashFlowField,
    params: &ModelParams,
    fd_grid: &HeatFdGrid,
) -> Result<HeatCheck, BurgersError> {
    let fd = fd_grid.validated()?;
    if params.sigma <= 0.0 {
        return Err(BurgersError::ZeroVolatility);
    }
    let big_t = params.horizon;
    let sigma2 = params.sigma * params.sigma;
    let h = (fd.x_max - fd.x_min) / (fd.nx - 1) as f64;
    let pad = (8.0 * params.sigma * big_t.sqrt() / h).ceil() as usize;
    let nxp = fd.nx + 2 * pad;
    let n_steps = if fd.n_steps == 0 {
        let dt_max = h * h / sigma2;
        ((big_t / (0.9 * dt_max)).ceil() as usize).max(8)
    } else {
        fd.n_steps
    };
    if n_steps.saturating_mul(nxp) > 200_000_000 {
        return Err(BurgersError::InvalidConfig(format!(
            "grid too fine: {n_steps} steps x {nxp} padded nodes"
        )));
    }
    let dt = big_t / n_steps as f64;
    let cfl = sigma2 * dt / (h * h);
    if cfl > 1.0 {
        return Err(BurgersError::CflViolation { cfl });
    }

    let x_full: Vec<f64> = (0..nxp)
        .map(|j| fd.x_min + (j as f64 - pad as f64) * h)
        .collect();
    let x_core: Vec<f64> = x_full[pad..pad + fd.nx].to_vec();
    let t_nodes: Vec<f64> = (0..=n_steps)
        .map(|i| {
            if i == n_steps {
                big_t
            } else {
                i as f64 * dt
            }
        })
        .collect();

    let mut w = vec![1.0f64; nxp];
    let mut w_next = vec![0.0f64; nxp];
    let mut v_values = vec![0.0f64; (n_steps + 1) * fd.nx];
    let mut phi_values = vec![0.0f64; (n_steps + 1) * fd.nx];
    let diff = 0.5 * sigma2 * dt / (h * h);

    // Record a reversed-time level n (t = T − n·dt) into ascending-t rows.
    let record =
        |w: &[f64], level: usize, v_values: &mut [f64], phi_values: &mut [f64]| {
            let t_here = t_nodes[n_steps - level];
            let row = (n_steps - level) * fd.nx;
            for (k, j) in (pad..pad + fd.nx).enumerate() {
                let wj = w[j];
                if wj <= 0.0 || w[j - 1] <= 0.0 || w[j + 1] <= 0.0 {
                    return Err(BurgersError::NonPositiveV {
                        t: t_here,
                        x: x_full[j],
                    });
                }
                v_values[row + k] = wj;
                phi_values[row + k] = sigma2 * (w[j + 1].ln() - w[j - 1].ln()) / (2.0 * h);
            }
            Ok(())
        };

    record(&w, 0, &mut v_values, &mut phi_values)?;
    for n in 0..n_steps {
        let t_here = t_nodes[n_steps - n];
        for j in 0..nxp {
            let lap = if j == 0 || j == nxp - 1 {
                0.0
            } else {
                w[j + 1] - 2.0 * w[j] + w[j - 1]
            };
            w_next[j] = w[j] + diff * lap + dt * s_field.value(t_here, x_full[j]);
        }
        std::mem::swap(&mut w, &mut w_next);
        record(&w, n + 1, &mut v_values, &mut phi_values)?;
    }

    let v = FieldTable::from_values(t_nodes.clone(), x_core.clone(), v_values)?;
    let phi = FieldTable::from_values(t_nodes, x_core, phi_values)?;
    Ok(HeatCheck {
        v,
        phi,
        dt,
        h,
        cfl,
    })
}

/// Centered-difference residual of
/// `φ_t + φ·φ_x + (σ²/2)·φ_xx + s_x` over the interior nodes of a
/// tabulated effort field; returns the maximum absolute value. Assumes the
/// table's axes are uniformly spaced (local spacings are used, so mild
/// non-uniformity degrades accuracy rather than correctness).
pub fn burgers_residual(
    phi: &FieldTable,
    s_field: &CashFlowField,
    params: &ModelParams,
) -> f64 {
    let (nt, nx) = (phi.t_nodes().len(), phi.x_nodes().len());
    let sigma2 = params.sigma * params.sigma;
    let mut worst = 0.0f64;
    for i in 1..nt - 1 {
        let dt2 = phi.t_nodes()[i + 1] - phi.t_nodes()[i - 1];
        for j in 1..nx - 1 {
            let dx = phi.x_nodes()[j + 1] - phi.x_nodes()[j];
            let dx2 = phi.x_nodes()[j + 1] - phi.x_nodes()[j - 1];
            let p = phi.value(i, j);
            let p_t = (phi.value(i + 1, j) - phi.value(i - 1, j)) / dt2;
            let p_x = (phi.value(i, j + 1) - phi.value(i, j - 1)) / dx2;
            let p_xx =
                (phi.value(i, j + 1) - 2.0 * p + phi.value(i, j - 1)) / (dx * dx);
            let s_x = s_field.x_derivative(phi.t_nodes()[i], phi.x_nodes()[j]);
            let res = p_t + p * p_x + 0.5 * sigma2 * p_xx + s_x;
            worst = worst.max(res.abs());
        }
    }
    worst
}
