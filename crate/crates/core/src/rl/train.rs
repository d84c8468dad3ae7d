use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{apply_step, expected_outcome, OptState, PolicyParams};
use crate::reward::RewardKind;
use crate::rng::Streams;
use crate::taskworld::Task;

use super::{adaptive_sample, masked_advantages, sample_group_vanilla, surrogate_loss_and_grad, Group, TrainConfig};

/// One record per training iteration.
///
/// `mean_reward` averages every sampled reward of the iteration. `think_rate`
/// and `acc` are the exact unforced think probability and accuracy of the
/// policy after the iteration, averaged over the training tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterLog {
    pub iter: usize,
    pub mean_reward: f64,
    pub think_rate: f64,
    pub acc: f64,
    pub n_groups: usize,
    pub n_rejected_halves: usize,
}

#[derive(Clone, Copy)]
enum Sampler {
    Adaptive,
    Vanilla(RewardKind),
}

fn with_iter(iter: usize, e: Error) -> Error {
    match e {
        Error::Numeric(m) => Error::Numeric(format!("iteration {iter}: {m}")),
        Error::Shape(m) => Error::Shape(format!("iteration {iter}: {m}")),
        other => other,
    }
}

fn run(
    mut params: PolicyParams,
    tasks: &[Task],
    cfg: &TrainConfig,
    sampler: Sampler,
) -> Result<(PolicyParams, Vec<IterLog>)> {
    cfg.validate()?;
    params.validate()?;
    if tasks.is_empty() {
        return Err(Error::Input("RL training needs at least one task".into()));
    }
    for t in tasks {
        t.check(params.dims())?;
    }
    let domain = match sampler {
        Sampler::Adaptive => "agrpo",
        Sampler::Vanilla(_) => "grpo",
    };
    let root = Streams::new(cfg.seed, domain);
    let opts = cfg.surrogate();
    let mut opt = OptState::new(cfg.lr)?;
    let mut log = Vec::with_capacity(cfg.iters);

    for iter in 0..cfg.iters {
        let streams = root.child(iter as u64);
        let params_old = params.clone();
        let mut order: Vec<usize> = (0..tasks.len()).collect();
        order.shuffle(&mut Streams::new(cfg.seed, "order").rng(domain, iter as u64));

        // Sampling only reads the frozen snapshot, so it can fan out.
        let groups: Vec<Group> = tasks
            .par_iter()
            .map(|task| match sampler {
                Sampler::Adaptive => adaptive_sample(&params_old, task, cfg, &streams),
                Sampler::Vanilla(reward) => sample_group_vanilla(&params_old, task, cfg.group_size, reward, &streams),
            })
            .collect::<Result<_>>()
            .map_err(|e| with_iter(iter, e))?;

        let mut n_groups = 0;
        for &idx in &order {
            let group = &groups[idx];
            let Ok(adv) = masked_advantages(group, cfg.advantage_scope) else {
                continue;
            };
            let (_, grad) = surrogate_loss_and_grad(&params, &params_old, &tasks[idx], group, &adv, &opts)
                .map_err(|e| with_iter(iter, e))?;
            apply_step(&mut params, &grad, &mut opt).map_err(|e| with_iter(iter, e))?;
            n_groups += 1;
        }

        let n_samples: usize = groups.iter().map(|g| g.rewards.len()).sum();
        let mean_reward = groups.iter().flat_map(|g| &g.rewards).sum::<f64>() / n_samples as f64;
        let (think, acc) = tasks
            .iter()
            .map(|t| expected_outcome(&params, t))
            .fold((0.0, 0.0), |(a, b), (t, c)| (a + t, b + c));
        log.push(IterLog {
            iter,
            mean_reward,
            think_rate: think / tasks.len() as f64,
            acc: acc / tasks.len() as f64,
            n_groups,
            n_rejected_halves: 2 * groups.iter().filter(|g| g.rejected).count(),
        });
    }
    Ok((params, log))
}

/// Adaptive GRPO: forced two-mode sampling, rejection, masked advantages.
/// The parameter snapshot used for sampling and ratios refreshes once per
/// iteration; each task then takes one ascent step in shuffled order.
pub fn train_agrpo(params: PolicyParams, tasks: &[Task], cfg: &TrainConfig) -> Result<(PolicyParams, Vec<IterLog>)> {
    run(params, tasks, cfg, Sampler::Adaptive)
}

/// Vanilla GRPO with free sampling and the given reward.
pub fn train_grpo_vanilla(
    params: PolicyParams,
    tasks: &[Task],
    cfg: &TrainConfig,
    reward: RewardKind,
) -> Result<(PolicyParams, Vec<IterLog>)> {
    run(params, tasks, cfg, Sampler::Vanilla(reward))
}
