//! Run configuration: one TOML file, one table per subcommand, every field
//! defaulted. Overrides use dotted paths, e.g. `moments.n=200`.

use std::path::Path;

use cbe_core::dynamics::{CollisionPolicy, Estimator};
use cbe_core::transport::W1Method;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub sample: SampleConfig,
    pub dbm: DbmRunConfig,
    #[serde(rename = "verify-generator")]
    pub verify_generator: VerifyConfig,
    pub moments: MomentsConfig,
    pub increments: IncrementsConfig,
    #[serde(rename = "stein-bound")]
    pub stein_bound: SteinBoundConfig,
    pub w1: W1Config,
    pub field: FieldConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 20_240_917,
            sample: Default::default(),
            dbm: Default::default(),
            verify_generator: Default::default(),
            moments: Default::default(),
            increments: Default::default(),
            stein_bound: Default::default(),
            w1: Default::default(),
            field: Default::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKind {
    Exact,
    Mcmc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleConfig {
    pub n: usize,
    pub beta: f64,
    pub m: usize,
    pub sampler: SamplerKind,
    /// MCMC settings; unset values follow the size-dependent defaults.
    pub proposal_scale: Option<f64>,
    pub burn_in: Option<usize>,
    pub thinning: Option<usize>,
    pub chains: usize,
    /// Orders reported in the summary.
    pub kmax: usize,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            n: 50,
            beta: 2.0,
            m: 1000,
            sampler: SamplerKind::Exact,
            proposal_scale: None,
            burn_in: None,
            thinning: None,
            chains: 1,
            kmax: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DbmRunConfig {
    pub n: usize,
    pub beta: f64,
    /// Horizon; `0.1/n` when unset.
    pub t: Option<f64>,
    pub paths: usize,
    pub kmax: usize,
    /// Step size; `1e-3/n²` when unset.
    pub dt: Option<f64>,
    pub collision_policy: CollisionPolicy,
    pub drift_cap: Option<f64>,
    /// Saved states of the first path, evenly spaced.
    pub checkpoints: usize,
    pub z_max: f64,
}

impl Default for DbmRunConfig {
    fn default() -> Self {
        Self {
            n: 20,
            beta: 2.0,
            t: None,
            paths: 5000,
            kmax: 3,
            dt: None,
            collision_policy: CollisionPolicy::RejectAndHalve,
            drift_cap: None,
            checkpoints: 100,
            z_max: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub configs: usize,
    pub n_min: usize,
    pub n_max: usize,
    pub betas: Vec<f64>,
    pub kmax: i64,
    pub tolerance: f64,
    pub decomposition_tolerance: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            configs: 200,
            n_min: 2,
            n_max: 8,
            betas: vec![0.5, 1.0, 2.0, 4.0],
            kmax: 6,
            tolerance: 1e-9,
            decomposition_tolerance: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MomentsConfig {
    pub n: usize,
    pub beta: f64,
    pub m: usize,
    pub d: usize,
    /// Diagonal covariances checked against `2k/β` for `k ≤ limit_orders`.
    pub limit_orders: usize,
    pub limit_tolerance: f64,
    pub z_max: f64,
}

impl Default for MomentsConfig {
    fn default() -> Self {
        Self { n: 100, beta: 2.0, m: 20000, d: 4, limit_orders: 3, limit_tolerance: 0.05, z_max: 4.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CubicConfig {
    pub enabled: bool,
    pub n: usize,
    pub d: usize,
    pub paths: usize,
    pub t_grid: Vec<f64>,
    pub second_window: [f64; 2],
    pub third_window: [f64; 2],
}

impl Default for CubicConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            n: 20,
            d: 2,
            paths: 2000,
            t_grid: vec![1e-5, 3e-5, 1e-4, 3e-4, 1e-3],
            second_window: [0.9, 1.1],
            third_window: [1.35, 1.65],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IncrementsConfig {
    pub n: usize,
    pub beta: f64,
    pub d: usize,
    pub starts: usize,
    pub noise_paths: usize,
    pub t_grid: Vec<f64>,
    pub estimator: Estimator,
    pub antithetic: bool,
    pub dt: Option<f64>,
    /// First-order limits checked for `k = 1..=drift_orders`.
    pub drift_orders: i64,
    pub tolerance: f64,
    pub cubic: CubicConfig,
}

impl Default for IncrementsConfig {
    fn default() -> Self {
        Self {
            n: 10,
            beta: 2.0,
            d: 2,
            starts: 200,
            noise_paths: 64,
            t_grid: vec![4e-4, 2e-4, 1e-4],
            estimator: Estimator::ControlVariate,
            antithetic: true,
            dt: None,
            drift_orders: 3,
            tolerance: 0.05,
            cubic: CubicConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SteinBoundConfig {
    pub beta: f64,
    pub n: usize,
    pub d: usize,
    pub m: usize,
    pub audit: bool,
    pub d_grid: Vec<usize>,
    pub n_for_d: usize,
    pub n_grid: Vec<usize>,
    pub d_for_n: usize,
    pub r_exponent_max: f64,
    pub hs_exponent_max: f64,
    pub n_exponent_window: [f64; 2],
}

impl Default for SteinBoundConfig {
    fn default() -> Self {
        Self {
            beta: 2.0,
            n: 400,
            d: 2,
            m: 2000,
            audit: true,
            d_grid: (2..=8).collect(),
            n_for_d: 400,
            n_grid: vec![50, 100, 200, 400],
            d_for_n: 2,
            r_exponent_max: 3.3,
            hs_exponent_max: 3.8,
            n_exponent_window: [-1.15, -0.85],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct W1Config {
    pub beta: f64,
    pub d: usize,
    pub n_grid: Vec<usize>,
    pub m: usize,
    pub method: W1Method,
    pub z: f64,
}

impl Default for W1Config {
    fn default() -> Self {
        Self { beta: 2.0, d: 2, n_grid: vec![25, 50, 100, 200], m: 1000, method: W1Method::Exact, z: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldConfig {
    pub beta: f64,
    pub s_prime: f64,
    pub n_grid: Vec<usize>,
    pub m: usize,
    /// Truncation `J = j_factor · n`.
    pub j_factor: usize,
    /// Coefficients compared against the limiting field at the largest `n`.
    pub coefficients: usize,
    pub limit_samples: usize,
    pub z_max: f64,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            beta: 2.0,
            s_prime: 0.6,
            n_grid: vec![50, 100, 200, 400],
            m: 2000,
            j_factor: 1,
            coefficients: 5,
            limit_samples: 2000,
            z_max: 4.0,
        }
    }
}

/// Parses `VALUE` as a TOML value, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Applies `a.b.c=value` to a TOML table, creating intermediate tables.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), CliError> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override {spec:?} is not of the form key.path=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Config(format!("override {spec:?} has an empty key")));
    }
    let (last, parents) = keys.split_last().expect("split yields at least one key");
    let mut cur = table;
    for (depth, key) in parents.iter().enumerate() {
        let slot = cur.entry(key.to_string()).or_insert_with(|| toml::Value::Table(Default::default()));
        cur = slot.as_table_mut().ok_or_else(|| {
            CliError::Config(format!("override {spec:?}: {} is not a table", keys[..=depth].join(".")))
        })?;
    }
    cur.insert(last.to_string(), parse_value(raw.trim()));
    Ok(())
}

/// Reads the optional file, applies overrides in order and checks the schema.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Config, CliError> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
            toml::from_str::<toml::Table>(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => toml::Table::new(),
    };
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("at {path}: {}", e.into_inner()))
    })
}
