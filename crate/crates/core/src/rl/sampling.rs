use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::policy::{sample_trajectory, Mode, PolicyParams, Trajectory};
use crate::reward::{adaptive_reward, RewardKind};
use crate::rng::Streams;
use crate::taskworld::Task;

use super::{RejectionMode, TrainConfig};

/// Responses sampled for one query together with their rewards and the
/// subset `selected` that takes part in the update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub task_id: String,
    pub trajectories: Vec<Trajectory>,
    pub rewards: Vec<f64>,
    pub correct: Vec<bool>,
    /// Sorted indices of kept samples.
    pub selected: Vec<usize>,
    /// `mask[i]` iff `i` is in `selected`.
    pub mask: Vec<bool>,
    /// Mean reward over every sample, before rejection.
    pub r_avg: f64,
    /// First half forced think, second half forced no-think.
    pub forced: bool,
    /// Rejection fired and each half was cut to `G/2`.
    pub rejected: bool,
}

impl Group {
    fn new(task: &Task, trajectories: Vec<Trajectory>, scored: Vec<(f64, bool)>, forced: bool) -> Self {
        let n = trajectories.len();
        let (rewards, correct): (Vec<f64>, Vec<bool>) = scored.into_iter().unzip();
        Self {
            task_id: task.id.clone(),
            r_avg: rewards.iter().sum::<f64>() / n as f64,
            trajectories,
            rewards,
            correct,
            selected: (0..n).collect(),
            mask: vec![true; n],
            forced,
            rejected: false,
        }
    }

    fn select(&mut self, selected: Vec<usize>) {
        self.mask = (0..self.rewards.len())
            .map(|i| selected.binary_search(&i).is_ok())
            .collect();
        self.selected = selected;
    }
}

/// `G` free responses scored by `reward`; every sample is kept.
pub fn sample_group_vanilla(
    params_old: &PolicyParams,
    task: &Task,
    group_size: usize,
    reward: RewardKind,
    streams: &Streams,
) -> Result<Group> {
    let mut trajs = Vec::with_capacity(group_size);
    let mut scored = Vec::with_capacity(group_size);
    for i in 0..group_size {
        let tr = sample_trajectory(params_old, task, None, &mut streams.rng(&task.id, i as u64))?;
        let rec = reward.score(&tr, task)?;
        scored.push((rec.value, rec.correct));
        trajs.push(tr);
    }
    Ok(Group::new(task, trajs, scored, false))
}

/// Indices of the `k` largest rewards, ties resolved toward the lower index.
pub fn select_top_k(indices: &[usize], rewards: &[f64], k: usize) -> Vec<usize> {
    let mut order = indices.to_vec();
    // stable sort keeps index order among equal rewards
    order.sort_by(|&a, &b| rewards[b].total_cmp(&rewards[a]));
    order.truncate(k);
    order
}

/// Forced sampling of `G` think and `G` no-think responses, then rejection:
/// when the mean reward exceeds `tau` only `G/2` samples of each half are kept.
pub fn adaptive_sample(params_old: &PolicyParams, task: &Task, cfg: &TrainConfig, streams: &Streams) -> Result<Group> {
    let g = cfg.group_size;
    let mut trajs = Vec::with_capacity(2 * g);
    let mut scored = Vec::with_capacity(2 * g);
    for i in 0..2 * g {
        let force = if i < g { Mode::Think } else { Mode::NoThink };
        let tr = sample_trajectory(params_old, task, Some(force), &mut streams.rng(&task.id, i as u64))?;
        let rec = adaptive_reward(&tr, task)?;
        scored.push((rec.value, rec.correct));
        trajs.push(tr);
    }
    let mut group = Group::new(task, trajs, scored, true);
    if group.r_avg > cfg.tau {
        let k = g / 2;
        let think: Vec<usize> = (0..g).collect();
        let nothink: Vec<usize> = (g..2 * g).collect();
        let mut selected = match cfg.rejection_mode {
            RejectionMode::ArgsortTop => {
                let mut s = select_top_k(&think, &group.rewards, k);
                s.extend(select_top_k(&nothink, &group.rewards, k));
                s
            }
            RejectionMode::Random => {
                let mut rng = streams.rng(&task.id, (2 * g) as u64);
                let mut s: Vec<usize> = think.choose_multiple(&mut rng, k).copied().collect();
                s.extend(nothink.choose_multiple(&mut rng, k).copied());
                s
            }
        };
        selected.sort_unstable();
        group.select(selected);
        group.rejected = true;
    }
    Ok(group)
}
