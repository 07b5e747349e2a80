//! Run configuration: one TOML document with a section per subsystem.

use std::path::{Path, PathBuf};

use lep_core::ddpg::DdpgConfig;
use lep_core::envs::{CalibrationConfig, EnvConfig, TaskFamily};
use lep_core::explore::{ConcentrationConfig, LepConfig, OuParams};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TasksConfig {
    /// Goal instances drawn per task family.
    pub instances: usize,
    pub instance_seed: u64,
    pub calibration: CalibrationConfig,
    /// Task families per curriculum round; round 0 uses scripted experts.
    pub curriculum: Vec<Vec<String>>,
    /// Instances per family in curriculum rounds.
    pub curriculum_instances: usize,
}

impl Default for TasksConfig {
    fn default() -> Self {
        Self {
            instances: 6,
            instance_seed: 0,
            calibration: CalibrationConfig::default(),
            curriculum: vec![vec!["reach".into()], vec!["force-at".into(), "circle".into()]],
            curriculum_instances: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub gaussian_sigma: Vec<f64>,
    pub ou: Vec<OuParams>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            gaussian_sigma: vec![0.2],
            ou: vec![OuParams::default()],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlanConfig {
    pub seeds: Vec<u64>,
    pub budget: usize,
    pub cadence: usize,
    pub eval_seeds: Vec<u64>,
    /// Worker threads; all available cores when absent.
    pub workers: Option<usize>,
    pub stop_on_success: bool,
    pub rollouts_per_policy: usize,
    pub collect_seed: u64,
    pub lep_seed: u64,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            seeds: (0..5).collect(),
            budget: 300,
            cadence: 10,
            eval_seeds: (1_000_001..=1_000_005).collect(),
            workers: None,
            stop_on_success: false,
            rollouts_per_policy: 5,
            collect_seed: 0,
            lep_seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IoConfig {
    pub out_dir: PathBuf,
}

impl Default for IoConfig {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("runs"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub env: EnvConfig,
    pub tasks: TasksConfig,
    pub ddpg: DdpgConfig,
    pub lep: LepConfig,
    pub noise: NoiseConfig,
    pub plan: PlanConfig,
    pub io: IoConfig,
    pub toy: ConcentrationConfig,
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let config: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        self.ddpg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.lep.validate().map_err(|e| CliError::Config(e.to_string()))?;
        for ou in &self.noise.ou {
            ou.validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        if let Some(s) = self.noise.gaussian_sigma.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return bad(format!("noise.gaussian_sigma entries must be positive, got {s}"));
        }
        if self.tasks.instances == 0 || self.tasks.curriculum_instances == 0 {
            return bad("tasks.instances and tasks.curriculum_instances must be positive".into());
        }
        for name in self.tasks.curriculum.iter().flatten() {
            name.parse::<TaskFamily>().map_err(|e| CliError::Config(e.to_string()))?;
        }
        if self.plan.workers == Some(0) {
            return bad("plan.workers must be at least 1".into());
        }
        if self.plan.eval_seeds.is_empty() {
            return bad("plan.eval_seeds must not be empty".into());
        }
        if self.plan.rollouts_per_policy == 0 {
            return bad("plan.rollouts_per_policy must be positive".into());
        }
        Ok(())
    }

    /// Comment-free canonical form; the worker count is left out because it
    /// does not change any output.
    pub fn canonical(&self) -> String {
        let mut c = self.clone();
        c.plan.workers = None;
        toml::to_string(&c).expect("config serializes")
    }

    /// Hex SHA-256 of [`Config::canonical`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn workers(&self) -> usize {
        self.plan
            .workers
            .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
    }

    /// Applies `--seed`: a single training seed, also used for collection,
    /// LEP training and the toy figure.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.plan.seeds = vec![seed];
        self.plan.collect_seed = seed;
        self.plan.lep_seed = seed;
        self.toy.seed = seed;
        self
    }
}
