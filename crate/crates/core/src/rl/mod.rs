//! Group-relative policy optimisation.
//!
//! Vanilla GRPO samples `G` free responses per query and normalises their
//! rewards inside the group. Adaptive GRPO instead forces `G` think and `G`
//! no-think responses, and for queries whose mean reward clears a threshold
//! keeps only half of each mode's samples. Statistics and the clipped
//! surrogate are then computed over the kept set only.

mod advantage;
mod filter;
mod objective;
mod sampling;
mod train;

pub use advantage::{group_advantages, masked_advantages, DEGENERATE_STD};
pub use filter::{filter_rl_data, FilterRecord};
pub use objective::{agrpo_loss_and_grad, clipped_term, surrogate_loss_and_grad, ClipBranch, SurrogateOptions};
pub use sampling::{adaptive_sample, sample_group_vanilla, select_top_k, Group};
pub use train::{train_agrpo, train_grpo_vanilla, IterLog};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::Scoring;
use crate::reward::RewardKind;

/// Which half of each mode group survives rejection on easy queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectionMode {
    /// Keep the `G/2` highest-reward samples, lower index first on ties.
    #[default]
    ArgsortTop,
    /// Keep a uniformly random `G/2`.
    Random,
}

/// Set over which masked advantages are normalised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdvantageScope {
    /// Both mode halves together.
    #[default]
    Joint,
    /// Think and no-think halves separately.
    PerHalf,
}

/// How token terms are averaged into the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMean {
    /// Mean over each trajectory's tokens, then over trajectories.
    #[default]
    PerTrajectory,
    /// One mean over every scored token in the group.
    Pooled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Samples per mode (adaptive) or per group (vanilla). Even, >= 2.
    #[serde(rename = "g")]
    pub group_size: usize,
    pub eps_clip: f64,
    /// Mean-reward threshold above which a query counts as easy.
    pub tau: f64,
    pub lr: f64,
    pub iters: usize,
    pub rejection_mode: RejectionMode,
    pub advantage_scope: AdvantageScope,
    pub loss_mean: LossMean,
    /// Score the forced mode token at its unforced probability so the mode
    /// head receives gradient under forced sampling.
    pub score_forced_prefix: bool,
    /// Reward used by vanilla GRPO. Adaptive GRPO always uses the adaptive table.
    pub reward: RewardKind,
    /// Responses drawn per task by the pass-rate filter.
    pub filter_samples: u32,
    #[serde(skip)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            group_size: 8,
            eps_clip: 0.2,
            tau: 1.0,
            lr: 0.1,
            iters: 500,
            rejection_mode: RejectionMode::ArgsortTop,
            advantage_scope: AdvantageScope::Joint,
            loss_mean: LossMean::PerTrajectory,
            score_forced_prefix: true,
            reward: RewardKind::FormatAccuracy,
            filter_samples: 8,
            seed: 7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.group_size < 2 || !self.group_size.is_multiple_of(2) {
            return bad(format!("train.g must be even and >= 2, got {}", self.group_size));
        }
        if !(self.eps_clip > 0.0 && self.eps_clip < 1.0) {
            return bad(format!("train.eps_clip must lie in (0, 1), got {}", self.eps_clip));
        }
        if !self.tau.is_finite() {
            return bad("train.tau must be finite".into());
        }
        if !self.lr.is_finite() || self.lr <= 0.0 {
            return bad(format!("train.lr must be finite and > 0, got {}", self.lr));
        }
        if self.iters < 1 {
            return bad("train.iters must be >= 1".into());
        }
        if self.filter_samples < 2 {
            return bad("train.filter_samples must be >= 2".into());
        }
        Ok(())
    }

    pub fn scoring(&self) -> Scoring {
        if self.score_forced_prefix {
            Scoring::Unforced
        } else {
            Scoring::PromptPrefix
        }
    }

    pub fn surrogate(&self) -> SurrogateOptions {
        SurrogateOptions {
            eps_clip: self.eps_clip,
            scoring: self.scoring(),
            loss_mean: self.loss_mean,
        }
    }
}
