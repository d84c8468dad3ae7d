//! Synthetic task population.
//!
//! Each task exposes a *coarse* feature that the policy always sees and a
//! *fine* feature that only a reasoning step recovers. Easy tasks are solved
//! by the coarse feature alone; hard tasks need both, since their answer is
//! `(coarse + fine) mod K`. Families own disjoint sets of coarse bins, so a
//! policy that conditions on the coarse feature can tell them apart.

use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;
use crate::rng::{StreamRng, Streams};

/// Table sizes shared by the world and the policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n_coarse: usize,
    pub n_fine: usize,
    pub n_answers: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Easy,
    Hard,
}

/// Calibrated difficulty level, `L1` (trivial) to `L5` (expert).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Level {
    L1,
    L2,
    L3,
    L4,
    L5,
}

impl Level {
    pub const ALL: [Level; 5] = [Level::L1, Level::L2, Level::L3, Level::L4, Level::L5];

    /// L1 and L2 count as easy for the precise SFT corpus.
    pub fn is_easy(self) -> bool {
        matches!(self, Level::L1 | Level::L2)
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}", self.index() + 1)
    }
}

/// One synthetic query. Field order is the on-disk record order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Task {
    pub id: String,
    pub coarse: usize,
    pub fine: usize,
    pub answer: usize,
    pub family: Family,
    pub level: Option<Level>,
}

impl Task {
    pub fn check(&self, dims: Dims) -> Result<()> {
        if self.coarse >= dims.n_coarse || self.fine >= dims.n_fine || self.answer >= dims.n_answers {
            return Err(Error::Shape(format!(
                "task {} (coarse={}, fine={}, answer={}) outside world {}x{}x{}",
                self.id, self.coarse, self.fine, self.answer, dims.n_coarse, dims.n_fine, dims.n_answers
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    pub n_coarse: usize,
    pub n_fine: usize,
    pub n_answers: usize,
    pub n_tasks: usize,
    pub easy_fraction: f64,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            n_coarse: 8,
            n_fine: 4,
            n_answers: 4,
            n_tasks: 400,
            easy_fraction: 0.5,
            seed: 7,
        }
    }
}

impl WorldConfig {
    pub fn dims(&self) -> Dims {
        Dims {
            n_coarse: self.n_coarse,
            n_fine: self.n_fine,
            n_answers: self.n_answers,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_coarse < 1 {
            return bad("world.n_coarse must be >= 1");
        }
        if self.n_fine < 2 {
            return bad("world.n_fine must be >= 2");
        }
        if self.n_answers < 2 {
            return bad("world.n_answers must be >= 2");
        }
        if self.n_tasks < 1 {
            return bad("world.n_tasks must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.easy_fraction) {
            return bad("world.easy_fraction must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn n_easy(&self) -> usize {
        (self.easy_fraction * self.n_tasks as f64).round() as usize
    }
}

/// Splits coarse bins between the families. When both families are present
/// and there are at least two bins, each family gets at least one bin.
fn split_bins(cfg: &WorldConfig, n_easy: usize, rng: &mut StreamRng) -> (Vec<usize>, Vec<usize>) {
    let mut bins: Vec<usize> = (0..cfg.n_coarse).collect();
    bins.shuffle(rng);
    let n_hard = cfg.n_tasks - n_easy;
    match (n_easy, n_hard) {
        (0, _) => (Vec::new(), bins),
        (_, 0) => (bins, Vec::new()),
        _ if cfg.n_coarse == 1 => (bins.clone(), bins),
        _ => {
            let e = ((cfg.easy_fraction * cfg.n_coarse as f64).round() as usize).clamp(1, cfg.n_coarse - 1);
            let hard = bins.split_off(e);
            (bins, hard)
        }
    }
}

/// Generates the task population. Pure function of `cfg`.
///
/// Within each family, tasks are spread round-robin over the family's bins
/// and fine values are cycled per bin, so every bin sees every fine value
/// before any repeats.
pub fn generate_world(cfg: &WorldConfig) -> Result<Vec<Task>> {
    cfg.validate()?;
    let streams = Streams::new(cfg.seed, "world");
    let mut rng = streams.rng("layout", 0);
    let n_easy = cfg.n_easy();
    let (easy_bins, hard_bins) = split_bins(cfg, n_easy, &mut rng);

    let mut easy_answer = vec![0usize; cfg.n_coarse];
    for &b in &easy_bins {
        easy_answer[b] = rng.gen_range(0..cfg.n_answers);
    }
    let fine_offset: Vec<usize> = (0..cfg.n_coarse).map(|_| rng.gen_range(0..cfg.n_fine)).collect();

    let mut raw = Vec::with_capacity(cfg.n_tasks);
    for (family, bins, count) in [
        (Family::Easy, &easy_bins, n_easy),
        (Family::Hard, &hard_bins, cfg.n_tasks - n_easy),
    ] {
        for j in 0..count {
            let coarse = bins[j % bins.len()];
            let fine = (fine_offset[coarse] + j / bins.len()) % cfg.n_fine;
            let answer = match family {
                Family::Easy => easy_answer[coarse],
                Family::Hard => (coarse + fine) % cfg.n_answers,
            };
            raw.push((coarse, fine, answer, family));
        }
    }
    raw.shuffle(&mut rng);

    let width = cfg.n_tasks.saturating_sub(1).to_string().len().max(4);
    Ok(raw
        .into_iter()
        .enumerate()
        .map(|(i, (coarse, fine, answer, family))| Task {
            id: format!("t{i:0width$}"),
            coarse,
            fine,
            answer,
            family,
            level: None,
        })
        .collect())
}

/// Ground truth for a task.
pub fn oracle_answer(task: &Task) -> usize {
    task.answer
}

/// Answers a hard task's coarse bin can carry: `(coarse + f) mod K` over all fine values.
pub fn coarse_consistent_answers(coarse: usize, dims: Dims) -> Vec<usize> {
    let mut out: Vec<usize> = (0..dims.n_fine).map(|f| (coarse + f) % dims.n_answers).collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// The three reference model tiers used for difficulty calibration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tier {
    /// Weak base model.
    M1,
    /// Specialist without reasoning: sees only the coarse feature.
    M2,
    /// Specialist reasoner.
    M3,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::M1, Tier::M2, Tier::M3];
}

/// Accuracy knobs for the tier oracles. A tier that is "correct with
/// probability p" otherwise guesses uniformly over all answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TierParams {
    pub p1_easy: f64,
    pub p1_hard: f64,
    pub p2_easy: f64,
    pub p3: f64,
}

impl Default for TierParams {
    fn default() -> Self {
        Self {
            p1_easy: 0.55,
            p1_hard: 0.0,
            p2_easy: 0.95,
            p3: 0.9,
        }
    }
}

impl TierParams {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("tiers.p1_easy", self.p1_easy),
            ("tiers.p1_hard", self.p1_hard),
            ("tiers.p2_easy", self.p2_easy),
            ("tiers.p3", self.p3),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        Ok(())
    }
}

fn noisy_answer(task: &Task, p: f64, k: usize, rng: &mut StreamRng) -> usize {
    if rng.gen_bool(p) {
        task.answer
    } else {
        rng.gen_range(0..k)
    }
}

/// Draws one answer from a tier oracle.
pub fn tier_sample(tier: Tier, task: &Task, params: &TierParams, dims: Dims, rng: &mut StreamRng) -> usize {
    let k = dims.n_answers;
    match (tier, task.family) {
        (Tier::M1, Family::Easy) => noisy_answer(task, params.p1_easy, k, rng),
        (Tier::M1, Family::Hard) => noisy_answer(task, params.p1_hard, k, rng),
        (Tier::M2, Family::Easy) => noisy_answer(task, params.p2_easy, k, rng),
        (Tier::M2, Family::Hard) => {
            let options = coarse_consistent_answers(task.coarse, dims);
            options[rng.gen_range(0..options.len())]
        }
        (Tier::M3, _) => noisy_answer(task, params.p3, k, rng),
    }
}

pub fn save_tasks(tasks: &[Task], path: &Path) -> Result<()> {
    jsonl::write(path, tasks)
}

pub fn load_tasks(path: &Path) -> Result<Vec<Task>> {
    jsonl::read(path)
}
