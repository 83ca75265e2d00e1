//! Experiment configuration in TOML.
//!
//! ```toml
//! [global]
//! beta = 0.95
//! steps = 6
//! epsilon = 0.001
//! k = 1
//! horizon = 200
//! episodes = 10000
//! master_seed = 7
//! policies = ["whittle", "myopic"]
//!
//! [[arms]]
//! mode = "observation-only"
//! initial_belief = [0.6, 0.4]
//! P = [[0.8, 0.2], [0.2, 0.8]]
//! E = [[0.8, 0.2], [0.2, 0.8]]
//! R = [[0.0, 0.0], [0.0, 1.0]]
//! ```
//!
//! Every `[global]` key is optional. Each arm needs `P`, `E`, `R` and
//! `initial_belief`; `mode` defaults to `observation-only`, `rho` is required
//! in `general-feedback` mode, and `states`, if present, must match the size
//! of `P`. Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{validate_model, ArmModel, BeliefVector, ModelParts, ObservationMode};
use crate::sim::{ArmSetup, PolicyKind, SimError, SystemConfig};

pub const DEFAULT_BETA: f64 = 0.95;
pub const DEFAULT_STEPS: u32 = 6;
pub const DEFAULT_EPSILON: f64 = 1e-3;
pub const DEFAULT_K: usize = 1;
pub const DEFAULT_HORIZON: usize = 200;
pub const DEFAULT_EPISODES: usize = 10_000;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Invalid(String),
    #[error("cannot serialize configuration: {0}")]
    Serialize(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalSettings {
    pub beta: f64,
    /// Depth `T` of the approximate belief space.
    pub steps: u32,
    pub epsilon: f64,
    /// Arms activated per slot.
    pub k: usize,
    pub horizon: usize,
    pub episodes: usize,
    pub master_seed: u64,
    pub policies: Vec<PolicyKind>,
}

impl Default for GlobalSettings {
    fn default() -> Self {
        Self {
            beta: DEFAULT_BETA,
            steps: DEFAULT_STEPS,
            epsilon: DEFAULT_EPSILON,
            k: DEFAULT_K,
            horizon: DEFAULT_HORIZON,
            episodes: DEFAULT_EPISODES,
            master_seed: 0,
            policies: vec![PolicyKind::Whittle, PolicyKind::Myopic],
        }
    }
}

impl GlobalSettings {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        if !(0.0..1.0).contains(&self.beta) {
            return bad(format!("beta must lie in [0, 1), got {}", self.beta));
        }
        if self.steps < 1 {
            return bad("steps must be at least 1".into());
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad("epsilon must be positive".into());
        }
        if self.k < 1 {
            return bad("k must be at least 1".into());
        }
        if self.horizon < 1 {
            return bad("horizon must be at least 1".into());
        }
        if self.episodes < 1 {
            return bad("episodes must be at least 1".into());
        }
        if self.master_seed > i64::MAX as u64 {
            return bad(format!("master_seed must be at most {}", i64::MAX));
        }
        if self.policies.is_empty() {
            return bad("policies must not be empty".into());
        }
        Ok(())
    }
}

/// Matrices and initial belief of one arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSpec {
    pub mode: ObservationMode,
    pub initial_belief: Vec<f64>,
    #[serde(rename = "P")]
    pub transition: Vec<Vec<f64>>,
    #[serde(rename = "E")]
    pub error: Vec<Vec<f64>>,
    #[serde(rename = "R")]
    pub reward: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<Vec<Vec<f64>>>,
}

impl ArmSpec {
    pub fn parts(&self) -> ModelParts {
        ModelParts::from_rows(
            &self.transition,
            &self.error,
            &self.reward,
            self.rho.as_deref(),
            self.mode,
        )
    }

    pub fn model(&self) -> Result<ArmModel, ConfigError> {
        ArmModel::new(self.parts()).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn belief(&self) -> Result<BeliefVector, ConfigError> {
        BeliefVector::new(self.initial_belief.clone())
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub global: GlobalSettings,
    pub arms: Vec<ArmSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    global: RawGlobal,
    #[serde(default)]
    arms: Vec<RawArm>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGlobal {
    beta: Option<f64>,
    #[serde(alias = "T_steps")]
    steps: Option<u32>,
    epsilon: Option<f64>,
    #[serde(alias = "K")]
    k: Option<usize>,
    horizon: Option<usize>,
    episodes: Option<usize>,
    master_seed: Option<u64>,
    policies: Option<Vec<PolicyKind>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawArm {
    #[serde(alias = "M")]
    states: Option<usize>,
    mode: Option<ObservationMode>,
    initial_belief: Option<Vec<f64>>,
    #[serde(rename = "P")]
    transition: Option<Vec<Vec<f64>>>,
    #[serde(rename = "E")]
    error: Option<Vec<Vec<f64>>>,
    #[serde(rename = "R")]
    reward: Option<Vec<Vec<f64>>>,
    rho: Option<Vec<Vec<f64>>>,
}

impl RawArm {
    fn into_spec(self, index: usize) -> Result<ArmSpec, ConfigError> {
        let missing =
            |field: &str| ConfigError::Invalid(format!("arm {index}: missing field {field}"));
        let spec = ArmSpec {
            mode: self.mode.unwrap_or(ObservationMode::ObservationOnly),
            initial_belief: self
                .initial_belief
                .ok_or_else(|| missing("initial_belief"))?,
            transition: self.transition.ok_or_else(|| missing("P"))?,
            error: self.error.ok_or_else(|| missing("E"))?,
            reward: self.reward.ok_or_else(|| missing("R"))?,
            rho: self.rho,
        };
        if let Some(m) = self.states {
            if spec.transition.len() != m {
                return Err(ConfigError::Invalid(format!(
                    "arm {index}: states is {m} but P has {} rows",
                    spec.transition.len()
                )));
            }
        }
        validate_model(&spec.parts())
            .map_err(|report| ConfigError::Invalid(format!("arm {index}: {report}")))?;
        spec.belief()
            .map_err(|e| ConfigError::Invalid(format!("arm {index}: initial_belief: {e}")))?;
        if spec.initial_belief.len() != spec.transition.len() {
            return Err(ConfigError::Invalid(format!(
                "arm {index}: initial_belief has {} entries for {} states",
                spec.initial_belief.len(),
                spec.transition.len()
            )));
        }
        Ok(spec)
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let defaults = GlobalSettings::default();
        let g = raw.global;
        let global = GlobalSettings {
            beta: g.beta.unwrap_or(defaults.beta),
            steps: g.steps.unwrap_or(defaults.steps),
            epsilon: g.epsilon.unwrap_or(defaults.epsilon),
            k: g.k.unwrap_or(defaults.k),
            horizon: g.horizon.unwrap_or(defaults.horizon),
            episodes: g.episodes.unwrap_or(defaults.episodes),
            master_seed: g.master_seed.unwrap_or(defaults.master_seed),
            policies: g.policies.unwrap_or(defaults.policies),
        };
        global.validate()?;
        if raw.arms.is_empty() {
            return Err(ConfigError::Invalid("no [[arms]] given".into()));
        }
        let arms = raw
            .arms
            .into_iter()
            .enumerate()
            .map(|(i, a)| a.into_spec(i))
            .collect::<Result<Vec<_>, _>>()?;
        if global.k > arms.len() {
            return Err(ConfigError::Invalid(format!(
                "k is {} but only {} arms are configured",
                global.k,
                arms.len()
            )));
        }
        Ok(Self { global, arms })
    }

    pub fn to_toml_string(&self) -> Result<String, ConfigError> {
        self.global.validate()?;
        toml::to_string(self).map_err(|e| ConfigError::Serialize(e.to_string()))
    }

    /// Builds every arm's space and index table.
    pub fn build_arms(&self) -> Result<Vec<ArmSetup>, ConfigError> {
        self.arms
            .iter()
            .map(|a| {
                Ok(ArmSetup::build(
                    a.model()?,
                    a.belief()?,
                    self.global.steps,
                    self.global.epsilon,
                    self.global.beta,
                )?)
            })
            .collect()
    }

    pub fn system(&self, arms: Vec<ArmSetup>) -> Result<SystemConfig, ConfigError> {
        let g = &self.global;
        Ok(SystemConfig::new(
            arms,
            g.k,
            g.horizon,
            g.episodes,
            g.beta,
            g.master_seed,
        )?)
    }
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<ExperimentConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ExperimentConfig::from_toml_str(&text)
}
