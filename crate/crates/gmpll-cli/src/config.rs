//! Run configuration files and the flag/file/environment resolution rules.
//!
//! Every value a command needs can come from three places, in priority
//! order: a command-line flag, a JSON config file (`--config`), and for the
//! seed the `GMPLL_SEED` environment variable. Built-in defaults sit at the
//! bottom. Config files are versioned and reject unknown keys so that typos
//! fail loudly instead of silently falling back to defaults.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use gmpll::{GmConfig, SolverConfig, SweepGrid};

/// Name of the environment variable consulted when no seed is given.
pub const SEED_ENV_VAR: &str = "GMPLL_SEED";

/// A JSON run configuration. All fields are optional; flags override them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Config format version; must be 1.
    pub version: u32,
    /// Affinity bias coefficient.
    pub alpha: Option<f64>,
    /// Sparsification threshold.
    pub beta: Option<f64>,
    /// Neighborhood size.
    pub k: Option<usize>,
    /// Solver convergence threshold.
    pub delta: Option<f64>,
    /// Solver iteration cap.
    pub max_iterations: Option<usize>,
    /// Cross-validation fold count.
    pub folds: Option<usize>,
    /// Master seed.
    pub seed: Option<u64>,
    /// Candidate screening depth for prediction.
    pub r_override: Option<usize>,
    /// Corruption proportion (evaluate).
    pub p: Option<f64>,
    /// False labels per corrupted instance (evaluate).
    pub r: Option<usize>,
    /// Corruption proportions (sweep).
    pub p_values: Option<Vec<f64>>,
    /// False-label counts (sweep).
    pub r_values: Option<Vec<usize>>,
    /// Sparsification thresholds (sweep).
    pub beta_values: Option<Vec<f64>>,
    /// Bias coefficients (sweep).
    pub alpha_values: Option<Vec<f64>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            version: 1,
            alpha: None,
            beta: None,
            k: None,
            delta: None,
            max_iterations: None,
            folds: None,
            seed: None,
            r_override: None,
            p: None,
            r: None,
            p_values: None,
            r_values: None,
            beta_values: None,
            alpha_values: None,
        }
    }
}

/// Loads and validates a config file; `None` yields the all-default config.
pub fn load_config(path: Option<&Path>) -> Result<RunConfig, String> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| format!("{}: {e}", path.display()))?;
    let config: RunConfig = serde_json::from_str(&text)
        .map_err(|e| format!("{}: {e}", path.display()))?;
    if config.version != 1 {
        return Err(format!(
            "{}: unsupported config version {} (expected 1)",
            path.display(),
            config.version
        ));
    }
    Ok(config)
}

/// Flag value if present, else config value, else the built-in default.
pub fn resolve<T: Copy>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// Seed resolution: flag, then config file, then `GMPLL_SEED`, then 0.
pub fn resolve_seed(flag: Option<u64>, file: Option<u64>) -> Result<u64, String> {
    if let Some(s) = flag.or(file) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV_VAR) {
        Ok(text) => text
            .parse::<u64>()
            .map_err(|_| format!("{SEED_ENV_VAR} must be an unsigned integer, got {text:?}")),
        Err(std::env::VarError::NotPresent) => Ok(0),
        Err(e) => Err(format!("{SEED_ENV_VAR}: {e}")),
    }
}

/// Assembles the pipeline configuration from flags over file values over
/// defaults, then validates it as a whole.
#[allow(clippy::too_many_arguments)]
pub fn gm_config(
    file: &RunConfig,
    alpha: Option<f64>,
    beta: Option<f64>,
    k: Option<usize>,
    delta: Option<f64>,
    max_iterations: Option<usize>,
    r_override: Option<usize>,
) -> Result<GmConfig, String> {
    let defaults = GmConfig::default();
    let config = GmConfig {
        alpha: resolve(alpha, file.alpha, defaults.alpha),
        beta: resolve(beta, file.beta, defaults.beta),
        k: resolve(k, file.k, defaults.k),
        predict_r: r_override.or(file.r_override),
        solver: SolverConfig {
            max_iterations: resolve(
                max_iterations,
                file.max_iterations,
                defaults.solver.max_iterations,
            ),
            delta: resolve(delta, file.delta, defaults.solver.delta),
            epsilon_div: defaults.solver.epsilon_div,
        },
    };
    config.validate().map_err(|e| e.to_string())?;
    Ok(config)
}

/// Assembles the sweep grid from flags over file values; every dimension
/// must come from somewhere.
pub fn sweep_grid(
    file: &RunConfig,
    p_values: Option<Vec<f64>>,
    r_values: Option<Vec<usize>>,
    beta_values: Option<Vec<f64>>,
    alpha_values: Option<Vec<f64>>,
) -> Result<SweepGrid, String> {
    let pick = |flag: Option<Vec<f64>>, file: &Option<Vec<f64>>, name: &str| {
        flag.or_else(|| file.clone())
            .ok_or_else(|| format!("missing {name}: pass the flag or set it in the config file"))
    };
    let grid = SweepGrid {
        p_values: pick(p_values, &file.p_values, "--p-values")?,
        r_values: r_values
            .or_else(|| file.r_values.clone())
            .ok_or_else(|| "missing --r-values: pass the flag or set it in the config file".to_string())?,
        beta_values: pick(beta_values, &file.beta_values, "--beta-values")?,
        alpha_values: pick(alpha_values, &file.alpha_values, "--alpha-values")?,
    };
    grid.validate().map_err(|e| e.to_string())?;
    Ok(grid)
}
