//! JSON run configuration: model parameters plus per-subcommand sizes.
//! Every field has a default, so `{}` is a valid configuration; unknown
//! keys are rejected to catch typos before any computation starts.

use principal_agent::burgers::{HeatFdGrid, QuadratureConfig};
use principal_agent::model::ModelParams;
use serde::Deserialize;
use std::path::Path;

/// Time-grid section.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// Steps of the uniform grid on `[0, T]` (nodes = n_steps + 1).
    pub n_steps: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { n_steps: 2000 }
    }
}

/// Monte-Carlo section shared by `simulate`.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McConfig {
    pub n_paths: usize,
    /// Path count under `--quick`.
    pub quick_n_paths: usize,
    pub seed: u64,
    /// Paths stored and dumped to CSV by `simulate`.
    pub dump_paths: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            n_paths: 500_000,
            quick_n_paths: 10_000,
            seed: 42,
            dump_paths: 100,
        }
    }
}

/// Multiplier used by the single-point commands (`riccati`, `simulate`).
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MultiplierConfig {
    pub lambda_a: f64,
}

impl Default for MultiplierConfig {
    fn default() -> Self {
        MultiplierConfig {
            lambda_a: 0.75f64.sqrt(),
        }
    }
}

/// Sweep section: a uniform λ_A grid and its path counts.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub lambda_a_min: f64,
    pub lambda_a_max: f64,
    pub points: usize,
    pub n_paths: usize,
    pub quick_n_paths: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            lambda_a_min: -0.95,
            lambda_a_max: 0.95,
            points: 41,
            n_paths: 500_000,
            quick_n_paths: 100_000,
        }
    }
}

impl SweepConfig {
    /// The λ_A grid: `points` equally spaced values, endpoints included.
    pub fn lambda_grid(&self) -> Vec<f64> {
        if self.points <= 1 {
            return vec![self.lambda_a_min];
        }
        let step = (self.lambda_a_max - self.lambda_a_min) / (self.points - 1) as f64;
        (0..self.points)
            .map(|i| {
                if i == self.points - 1 {
                    self.lambda_a_max
                } else {
                    self.lambda_a_min + i as f64 * step
                }
            })
            .collect()
    }
}

/// Calibration / win-win section.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrateConfig {
    pub tol: f64,
    pub n_paths: usize,
    pub quick_n_paths: usize,
}

impl Default for CalibrateConfig {
    fn default() -> Self {
        CalibrateConfig {
            tol: 1e-3,
            n_paths: 500_000,
            quick_n_paths: 100_000,
        }
    }
}

/// Cash-flow field selector for the `burgers` subcommand.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    Constant { value: f64 },
    Linear { intercept: f64, slope: f64 },
    Tabulated { path: String },
}

impl Default for FieldSpec {
    fn default() -> Self {
        FieldSpec::Linear {
            intercept: 0.0,
            slope: 1.0,
        }
    }
}

/// Effort-solver section.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BurgersConfig {
    pub field: FieldSpec,
    pub quadrature: QuadratureConfig,
    pub fd: HeatFdGrid,
    /// Shape of the emitted effort table.
    pub t_points: usize,
    pub x_points: usize,
    pub x_min: f64,
    pub x_max: f64,
    /// Interior nodes compared between the quadrature and heat routes.
    pub cross_check_points: usize,
}

impl Default for BurgersConfig {
    fn default() -> Self {
        BurgersConfig {
            field: FieldSpec::default(),
            quadrature: QuadratureConfig::default(),
            fd: HeatFdGrid::default(),
            t_points: 8,
            x_points: 33,
            x_min: -1.5,
            x_max: 1.5,
            cross_check_points: 20,
        }
    }
}

/// Output section.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: "out".into() }
    }
}

/// The full run configuration.
#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelParams,
    pub grid: GridConfig,
    pub mc: McConfig,
    pub multiplier: MultiplierConfig,
    pub sweep: SweepConfig,
    pub calibrate: CalibrateConfig,
    pub burgers: BurgersConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    /// Loads and validates a configuration file.
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| format!("cannot parse config {}: {e}", path.display()))?;
        cfg.model
            .validated()
            .map_err(|e| format!("invalid model parameters: {e}"))?;
        if cfg.grid.n_steps < 2 {
            return Err("grid.n_steps must be at least 2".into());
        }
        if cfg.mc.n_paths == 0 || cfg.mc.quick_n_paths == 0 {
            return Err("mc path counts must be positive".into());
        }
        if cfg.sweep.points == 0 {
            return Err("sweep.points must be positive".into());
        }
        if cfg.sweep.points > 1 && cfg.sweep.lambda_a_min >= cfg.sweep.lambda_a_max {
            return Err("sweep requires lambda_a_min < lambda_a_max".into());
        }
        if !(cfg.calibrate.tol.is_finite() && cfg.calibrate.tol > 0.0) {
            return Err("calibrate.tol must be positive".into());
        }
        if cfg.burgers.t_points < 2 || cfg.burgers.x_points < 2 {
            return Err("burgers table needs at least 2 points per axis".into());
        }
        if cfg.burgers.x_min >= cfg.burgers.x_max {
            return Err("burgers requires x_min < x_max".into());
        }
        Ok(cfg)
    }
}
