//! Run-file schema. Every field has a default; unknown keys are rejected
//! with the parser's line/column diagnostics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use kickwave_core::action::ActionParams;
use kickwave_core::attraction::InitialData;
use kickwave_core::environment::EnvironmentConfig;
use kickwave_core::grid::GridPolicy;
use kickwave_core::minimizers::{OneSidedMode, RefineParams};
use kickwave_core::rng::KeyedRng;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unsupported schema version {found} (this build reads {expected})")]
    Schema { found: u32, expected: u32 },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(
        "config declares experiment kind '{in_config}' but the '{requested}' subcommand was invoked"
    )]
    KindMismatch {
        in_config: String,
        requested: String,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema: u32,
    pub environment: EnvironmentConfig,
    pub grid: GridPolicy,
    pub action: ActionSection,
    pub experiment: Experiment,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema: SCHEMA_VERSION,
            environment: EnvironmentConfig::default(),
            grid: GridPolicy::default(),
            action: ActionSection::default(),
            experiment: Experiment::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActionSection {
    pub p: f64,
    pub el_tol: f64,
    pub max_refine_iters: u32,
}

impl Default for ActionSection {
    fn default() -> Self {
        ActionSection {
            p: 1.0,
            el_tol: 1e-8,
            max_refine_iters: 100,
        }
    }
}

impl ActionSection {
    pub fn params(&self) -> ActionParams {
        ActionParams::new(self.p)
    }

    pub fn refine(&self) -> RefineParams {
        RefineParams {
            el_tol: self.el_tol,
            max_iters: self.max_refine_iters,
        }
    }
}

/// Replica seeding: either an explicit list or a count expanded from the
/// master seed through the keyed stream.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedSpec {
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
}

fn default_replicas() -> usize {
    32
}

impl Default for SeedSpec {
    fn default() -> Self {
        SeedSpec {
            seeds: Vec::new(),
            replicas: default_replicas(),
        }
    }
}

impl SeedSpec {
    pub fn resolve(&self, master_seed: u64) -> Vec<u64> {
        if !self.seeds.is_empty() {
            return self.seeds.clone();
        }
        derive_seeds(master_seed, self.replicas)
    }
}

pub fn derive_seeds(master_seed: u64, count: usize) -> Vec<u64> {
    let mut rng = KeyedRng::for_stream(master_seed, 0x5eed);
    (0..count).map(|_| rng.next_u64()).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Experiment {
    /// Dump the kick points of a space-time window.
    EnvSample {
        #[serde(default = "default_time_range")]
        times: [i64; 2],
        #[serde(default = "default_cell_range")]
        cells: [i64; 2],
    },
    /// Evolve an initial potential and dump profiles and probes.
    Evolve {
        #[serde(default = "default_initial")]
        initial: InitialData,
        #[serde(default = "default_horizon_u32")]
        steps: u32,
        #[serde(default)]
        start_time: i64,
    },
    /// One-sided minimizer approximant with stabilization diagnostics.
    Minimizer {
        #[serde(default)]
        endpoint_time: i64,
        #[serde(default)]
        endpoint_x: f64,
        #[serde(default)]
        v: f64,
        #[serde(default = "default_horizon_neg")]
        horizon: i64,
        #[serde(default)]
        mode: OneSidedMode,
        #[serde(default = "default_stab_horizons")]
        stabilization_horizons: Vec<i64>,
    },
    /// Shape-constant estimation over a slope list with the quadratic-law
    /// and p-independence reports.
    Shape {
        #[serde(default = "default_v_list")]
        v_list: Vec<f64>,
        #[serde(default = "default_shape_n")]
        n: i64,
        #[serde(default)]
        seed_spec: SeedSpec,
        #[serde(default = "default_true")]
        check_p_independence: bool,
        #[serde(default = "default_bias_coeff")]
        grid_bias_coeff: f64,
    },
    /// Concentration and excursion tails of the optimal action.
    Concentration {
        #[serde(default)]
        v: f64,
        #[serde(default = "default_conc_n")]
        n: i64,
        #[serde(default)]
        seed_spec: SeedSpec,
        #[serde(default)]
        u_grid: Vec<f64>,
    },
    /// Busemann table plus global potential/velocity consistency.
    Busemann {
        #[serde(default)]
        v: f64,
        #[serde(default = "default_horizon_neg")]
        horizon: i64,
        #[serde(default = "default_busemann_times")]
        times: Vec<i64>,
        #[serde(default = "default_window")]
        window: [f64; 2],
        #[serde(default = "default_window_step")]
        window_step: f64,
        #[serde(default = "default_pairing_c")]
        pairing_c: f64,
    },
    /// Shock detection and genealogy of the one-sided field.
    Shocks {
        #[serde(default)]
        v: f64,
        #[serde(default = "default_horizon_neg")]
        horizon: i64,
        #[serde(default = "default_shock_times")]
        times: [i64; 2],
        #[serde(default)]
        jump_tol: Option<f64>,
    },
    /// Pullback attraction series toward the global solution.
    Pullback {
        #[serde(default = "default_initial")]
        initial: InitialData,
        #[serde(default)]
        v: f64,
        #[serde(default = "default_m_list")]
        m_list: Vec<i64>,
        #[serde(default = "default_ref_horizon")]
        reference_horizon: i64,
        #[serde(default)]
        seed_spec: SeedSpec,
        #[serde(default = "default_metric_n_max")]
        metric_n_max: u32,
    },
    /// Metric axioms and the convergence-equivalence families.
    MetricCheck {
        #[serde(default = "default_metric_trials")]
        trials: u32,
        #[serde(default = "default_metric_n_max")]
        metric_n_max: u32,
    },
}

impl Default for Experiment {
    fn default() -> Self {
        Experiment::Shape {
            v_list: default_v_list(),
            n: default_shape_n(),
            seed_spec: SeedSpec::default(),
            check_p_independence: true,
            grid_bias_coeff: default_bias_coeff(),
        }
    }
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::EnvSample { .. } => "env-sample",
            Experiment::Evolve { .. } => "evolve",
            Experiment::Minimizer { .. } => "minimizer",
            Experiment::Shape { .. } => "shape",
            Experiment::Concentration { .. } => "concentration",
            Experiment::Busemann { .. } => "busemann",
            Experiment::Shocks { .. } => "shocks",
            Experiment::Pullback { .. } => "pullback",
            Experiment::MetricCheck { .. } => "metric-check",
        }
    }
}

fn default_time_range() -> [i64; 2] {
    [0, 4]
}
fn default_cell_range() -> [i64; 2] {
    [-8, 8]
}
fn default_initial() -> InitialData {
    InitialData::Zero
}
fn default_horizon_u32() -> u32 {
    16
}
fn default_horizon_neg() -> i64 {
    -64
}
fn default_stab_horizons() -> Vec<i64> {
    vec![-16, -32, -64]
}
fn default_v_list() -> Vec<f64> {
    vec![0.0, 0.5, 1.0]
}
fn default_shape_n() -> i64 {
    128
}
fn default_conc_n() -> i64 {
    256
}
fn default_true() -> bool {
    true
}
fn default_bias_coeff() -> f64 {
    1.0
}
fn default_busemann_times() -> Vec<i64> {
    vec![0, 1, 2, 3]
}
fn default_window() -> [f64; 2] {
    [-2.0, 2.0]
}
fn default_window_step() -> f64 {
    0.125
}
fn default_pairing_c() -> f64 {
    1.0
}
fn default_shock_times() -> [i64; 2] {
    [-4, 0]
}
fn default_m_list() -> Vec<i64> {
    vec![-16, -32, -64, -128]
}
fn default_ref_horizon() -> i64 {
    -256
}
fn default_metric_n_max() -> u32 {
    16
}
fn default_metric_trials() -> u32 {
    50
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        if cfg.schema != SCHEMA_VERSION {
            return Err(ConfigError::Schema {
                found: cfg.schema,
                expected: SCHEMA_VERSION,
            });
        }
        cfg.environment
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        cfg.grid
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !(0.0..=1.0).contains(&cfg.action.p) {
            return Err(ConfigError::Invalid(format!(
                "action.p {} outside [0, 1]",
                cfg.action.p
            )));
        }
        Ok(cfg)
    }

    /// Canonical serialization used for hashing and manifest embedding.
    pub fn canonical_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gets_defaults() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg.schema, SCHEMA_VERSION);
        assert_eq!(cfg.environment.intensity, 1.0);
        assert_eq!(cfg.action.p, 1.0);
        assert_eq!(cfg.experiment.kind(), "shape");
    }

    #[test]
    fn unknown_keys_are_rejected_with_position() {
        let err = RunConfig::parse("[environment]\nintensityy = 2.0\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("intensityy"), "{msg}");
        // toml errors carry line/column context
        assert!(msg.contains("line"), "{msg}");
    }

    #[test]
    fn kind_tagged_experiments_parse() {
        let cfg = RunConfig::parse(
            r#"
            [experiment]
            kind = "pullback"
            v = 0.0
            m_list = [-8, -16]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.experiment.kind(), "pullback");
    }

    #[test]
    fn canonical_roundtrip_is_stable() {
        let cfg = RunConfig::default();
        let text = cfg.canonical_toml();
        let reparsed = RunConfig::parse(&text).unwrap();
        assert_eq!(text, reparsed.canonical_toml());
    }

    #[test]
    fn seed_spec_expansion_is_deterministic() {
        let spec = SeedSpec {
            seeds: vec![],
            replicas: 5,
        };
        assert_eq!(spec.resolve(9), spec.resolve(9));
        assert_ne!(spec.resolve(9), spec.resolve(10));
        let fixed = SeedSpec {
            seeds: vec![1, 2],
            replicas: 5,
        };
        assert_eq!(fixed.resolve(9), vec![1, 2]);
    }

    #[test]
    fn schema_mismatch_is_an_error() {
        assert!(matches!(
            RunConfig::parse("schema = 99"),
            Err(ConfigError::Schema { found: 99, .. })
        ));
    }

    #[test]
    fn bad_p_is_rejected() {
        assert!(RunConfig::parse("[action]\np = 1.5\n").is_err());
    }
}
