//! Experiment configuration (TOML).
//!
//! ```toml
//! [run]
//! seed = 7
//! stages = ["gen-tasks", "calibrate", "sft", "filter", "train-agrpo", "eval", "compare-modes", "report"]
//!
//! [world]
//! n_coarse = 8
//! n_fine = 4
//! n_answers = 4
//! n_tasks = 400
//! easy_fraction = 0.5
//!
//! [tiers]
//! runs = 8
//!
//! [sft]
//! lr = 0.03
//!
//! [train]
//! g = 8
//! eps_clip = 0.2
//! tau = 1.0
//! lr = 0.1
//! iters = 500
//! rejection_mode = "argsort_top"
//!
//! [eval]
//! samples_per_task = 1
//! ```
//!
//! Every section and key is optional; unknown keys are an error.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calibration::DEFAULT_RUNS;
use crate::error::{Error, Result};
use crate::rl::TrainConfig;
use crate::sft::SftConfig;
use crate::taskworld::{TierParams, WorldConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    GenTasks,
    Calibrate,
    Sft,
    Filter,
    TrainGrpo,
    TrainAgrpo,
    Eval,
    CompareModes,
    Report,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::GenTasks => "gen-tasks",
            Stage::Calibrate => "calibrate",
            Stage::Sft => "sft",
            Stage::Filter => "filter",
            Stage::TrainGrpo => "train-grpo",
            Stage::TrainAgrpo => "train-agrpo",
            Stage::Eval => "eval",
            Stage::CompareModes => "compare-modes",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub seed: u64,
    pub stages: Vec<Stage>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: 7,
            stages: vec![
                Stage::GenTasks,
                Stage::Calibrate,
                Stage::Sft,
                Stage::Filter,
                Stage::TrainAgrpo,
                Stage::Eval,
                Stage::CompareModes,
                Stage::Report,
            ],
        }
    }
}

/// World shape; the world seed is the run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldSection {
    pub n_coarse: usize,
    pub n_fine: usize,
    pub n_answers: usize,
    pub n_tasks: usize,
    pub easy_fraction: f64,
}

impl Default for WorldSection {
    fn default() -> Self {
        let w = WorldConfig::default();
        Self {
            n_coarse: w.n_coarse,
            n_fine: w.n_fine,
            n_answers: w.n_answers,
            n_tasks: w.n_tasks,
            easy_fraction: w.easy_fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TiersSection {
    pub runs: u32,
    pub p1_easy: f64,
    pub p1_hard: f64,
    pub p2_easy: f64,
    pub p3: f64,
}

impl Default for TiersSection {
    fn default() -> Self {
        let p = TierParams::default();
        Self {
            runs: DEFAULT_RUNS,
            p1_easy: p.p1_easy,
            p1_hard: p.p1_hard,
            p2_easy: p.p2_easy,
            p3: p.p3,
        }
    }
}

/// Which checkpoint the `eval` and `compare-modes` stages load.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalCheckpoint {
    Sft,
    Grpo,
    #[default]
    Agrpo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub samples_per_task: usize,
    pub checkpoint: EvalCheckpoint,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            samples_per_task: 1,
            checkpoint: EvalCheckpoint::Agrpo,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub run: RunSection,
    pub world: WorldSection,
    pub tiers: TiersSection,
    pub sft: SftConfig,
    pub train: TrainConfig,
    pub eval: EvalSection,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable in TOML")
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.run.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.world_config().validate()?;
        self.tier_params().validate()?;
        if self.tiers.runs == 0 {
            return Err(Error::Config("tiers.runs must be >= 1".into()));
        }
        self.sft.validate()?;
        self.train_config().validate()?;
        if self.eval.samples_per_task == 0 {
            return Err(Error::Config("eval.samples_per_task must be >= 1".into()));
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.run.seed
    }

    pub fn world_config(&self) -> WorldConfig {
        let w = &self.world;
        WorldConfig {
            n_coarse: w.n_coarse,
            n_fine: w.n_fine,
            n_answers: w.n_answers,
            n_tasks: w.n_tasks,
            easy_fraction: w.easy_fraction,
            seed: self.run.seed,
        }
    }

    pub fn tier_params(&self) -> TierParams {
        TierParams {
            p1_easy: self.tiers.p1_easy,
            p1_hard: self.tiers.p1_hard,
            p2_easy: self.tiers.p2_easy,
            p3: self.tiers.p3,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.run.seed,
            ..self.train.clone()
        }
    }

    /// First 12 hex digits of the SHA-256 of the configuration with the seed
    /// zeroed; the seed is appended separately in run directory names.
    pub fn hash(&self) -> String {
        let canonical = self.clone().with_seed(0).to_toml();
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
    }

    pub fn run_dir_name(&self) -> String {
        format!("{}-s{}", self.hash(), self.run.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        assert_eq!(Config::from_toml("").unwrap(), Config::default());
    }

    #[test]
    fn round_trips_through_toml() {
        let c = Config::default();
        assert_eq!(Config::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn unknown_keys_refused() {
        let err = Config::from_toml("[train]\ngroup = 4\n").unwrap_err().to_string();
        assert!(err.contains("group"), "{err}");
        assert!(Config::from_toml("[nope]\n").is_err());
        assert!(Config::from_toml("[run]\nstages = [\"warp\"]\n").is_err());
    }

    #[test]
    fn values_are_validated() {
        assert!(Config::from_toml("[train]\ng = 3\n").is_err());
        assert!(Config::from_toml("[world]\nn_fine = 1\n").is_err());
        let c = Config::from_toml("[train]\ng = 4\nrejection_mode = \"random\"\n").unwrap();
        assert_eq!(c.train.group_size, 4);
    }

    #[test]
    fn hash_ignores_seed_but_not_settings() {
        let a = Config::default();
        assert_eq!(a.hash(), a.clone().with_seed(99).hash());
        assert_ne!(a.run_dir_name(), a.clone().with_seed(99).run_dir_name());
        let mut b = a.clone();
        b.train.iters = 3;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 12);
    }
}
