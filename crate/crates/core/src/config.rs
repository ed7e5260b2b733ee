//! Run configuration shared by every pipeline, and the content hash stamped
//! into artifacts.

use crate::diagnosis::DiagnosisConfig;
use crate::dwa::DwaParams;
use crate::env::EnvConfig;
use crate::rl::{Algorithm, PpoParams, Td3Params, DEFAULT_HIDDEN};
use crate::trainer::TrainerConfig;
use crate::world::Difficulty;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldSection {
    pub difficulty: Difficulty,
    pub map_seed: u64,
    pub width_m: f64,
    pub height_m: f64,
}

impl Default for WorldSection {
    fn default() -> Self {
        Self {
            difficulty: Difficulty::Medium,
            map_seed: 0,
            width_m: 10.0,
            height_m: 10.0,
        }
    }
}

/// Trainer settings; the run seed and diagnosis section are filled in from
/// the enclosing [`RunConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerSection {
    pub algorithm: Algorithm,
    pub lambda: f64,
    pub iterations: usize,
    pub episodes_per_iteration: usize,
    pub updates_per_iteration: usize,
    pub rs_mode: bool,
    pub filter_failures: bool,
    pub hidden: Vec<usize>,
    pub eval_episodes: usize,
    pub td3: Td3Params,
    pub ppo: PpoParams,
}

impl Default for TrainerSection {
    fn default() -> Self {
        let t = TrainerConfig::default();
        Self {
            algorithm: t.algorithm,
            lambda: t.lambda,
            iterations: t.iterations,
            episodes_per_iteration: t.episodes_per_iteration,
            updates_per_iteration: t.updates_per_iteration,
            rs_mode: t.rs_mode,
            filter_failures: t.filter_failures,
            hidden: DEFAULT_HIDDEN.to_vec(),
            eval_episodes: t.eval_episodes,
            td3: t.td3,
            ppo: t.ppo,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Episodes per (controller, condition).
    pub episodes: usize,
    pub train_seeds: Vec<u64>,
    pub test_seeds: Vec<u64>,
    /// Random configurations tried by the static tuner baseline.
    pub tuner_candidates: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            episodes: 40,
            train_seeds: (1..=10).collect(),
            test_seeds: (11..=20).collect(),
            tuner_candidates: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: String,
    pub world: WorldSection,
    pub env: EnvConfig,
    pub planner: DwaParams,
    pub diagnosis: DiagnosisConfig,
    pub trainer: TrainerSection,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: "out".into(),
            world: WorldSection::default(),
            env: EnvConfig::default(),
            planner: DwaParams::default(),
            diagnosis: DiagnosisConfig::default(),
            trainer: TrainerSection::default(),
            eval: EvalSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let w = &self.world;
        if !(w.width_m >= 5.0 && w.height_m >= 5.0) {
            return Err(ConfigError::Invalid("world dimensions must be at least 5 m".into()));
        }
        self.env.validate().map_err(ConfigError::Invalid)?;
        let p = &self.planner;
        if !(p.accel_v > 0.0 && p.accel_omega > 0.0 && p.horizon > 0.0 && p.occdist_scale >= 0.0) {
            return Err(ConfigError::Invalid("planner accelerations and horizon must be positive".into()));
        }
        if self.eval.episodes == 0 || self.eval.tuner_candidates == 0 {
            return Err(ConfigError::Invalid("eval episodes and tuner candidates must be positive".into()));
        }
        self.trainer_config().validate().map_err(ConfigError::Invalid)
    }

    pub fn trainer_config(&self) -> TrainerConfig {
        let t = &self.trainer;
        TrainerConfig {
            lambda: t.lambda,
            iterations: t.iterations,
            episodes_per_iteration: t.episodes_per_iteration,
            updates_per_iteration: t.updates_per_iteration,
            algorithm: t.algorithm,
            rs_mode: t.rs_mode,
            filter_failures: t.filter_failures,
            seed: self.seed,
            diagnosis: self.diagnosis,
            hidden: t.hidden.clone(),
            td3: t.td3,
            ppo: t.ppo,
            eval_episodes: t.eval_episodes,
        }
    }

    /// Hash of every setting that affects results; the output directory is
    /// excluded so reruns elsewhere stay byte-identical.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir.clear();
        config_hash(&c)
    }
}

/// SHA-256 of the compact JSON serialization, hex encoded.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config serializes");
    hex::encode(Sha256::digest(&bytes))
}
