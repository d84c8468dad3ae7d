//! Response parsing and reward functions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{Mode, Token, Trajectory};
use crate::taskworld::{oracle_answer, Task};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardRecord {
    /// `None` only when the response is malformed.
    pub mode: Option<Mode>,
    pub correct: bool,
    pub value: f64,
}

/// Splits a response into its mode and final answer.
pub fn parse(traj: &Trajectory) -> Result<(Mode, usize)> {
    match traj.tokens.as_slice() {
        [Token::ModeNoThink, Token::Answer(a)] => Ok((Mode::NoThink, *a)),
        [Token::ModeThink, Token::Reason(_), Token::Answer(a)] => Ok((Mode::Think, *a)),
        other => Err(Error::Format(format!(
            "{other:?} is neither a think nor a no-think response"
        ))),
    }
}

/// Reward table that prefers answering without reasoning when that is
/// enough, and penalises skipping reasoning when it was needed.
pub fn adaptive_value(mode: Mode, correct: bool) -> f64 {
    match (mode, correct) {
        (Mode::NoThink, true) => 2.0,
        (Mode::Think, true) => 1.0,
        (Mode::Think, false) => 0.0,
        (Mode::NoThink, false) => -1.0,
    }
}

pub fn adaptive_reward(traj: &Trajectory, task: &Task) -> Result<RewardRecord> {
    let (mode, answer) = parse(traj)?;
    let correct = answer == oracle_answer(task);
    Ok(RewardRecord {
        mode: Some(mode),
        correct,
        value: adaptive_value(mode, correct),
    })
}

/// One point for a well-formed response plus one point for a correct answer.
/// A malformed response has no answer to score and earns 0.
pub fn format_accuracy_reward(traj: &Trajectory, task: &Task) -> RewardRecord {
    match parse(traj) {
        Ok((mode, answer)) => {
            let correct = answer == oracle_answer(task);
            RewardRecord {
                mode: Some(mode),
                correct,
                value: 1.0 + f64::from(u8::from(correct)),
            }
        }
        Err(_) => RewardRecord {
            mode: None,
            correct: false,
            value: 0.0,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    #[default]
    Adaptive,
    FormatAccuracy,
}

impl RewardKind {
    pub fn score(self, traj: &Trajectory, task: &Task) -> Result<RewardRecord> {
        match self {
            RewardKind::Adaptive => adaptive_reward(traj, task),
            RewardKind::FormatAccuracy => Ok(format_accuracy_reward(traj, task)),
        }
    }
}
