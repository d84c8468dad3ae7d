use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{accumulate_grad, logprob, PolicyParams, Scoring};
use crate::taskworld::Task;

use super::{masked_advantages, AdvantageScope, Group, LossMean};

/// Which side of the clipped minimum is in effect.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClipBranch {
    /// `ratio * A`: carries gradient.
    Ratio,
    /// `clip(ratio) * A` is strictly smaller: constant in the parameters.
    Clipped,
}

fn clip_with_branch(ratio: f64, advantage: f64, eps: f64) -> (f64, ClipBranch) {
    let raw = ratio * advantage;
    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * advantage;
    if raw <= clipped {
        (raw, ClipBranch::Ratio)
    } else {
        (clipped, ClipBranch::Clipped)
    }
}

/// `min(ratio * A, clip(ratio, 1 - eps, 1 + eps) * A)`.
pub fn clipped_term(ratio: f64, advantage: f64, eps: f64) -> Result<f64> {
    if !ratio.is_finite() || !advantage.is_finite() || !eps.is_finite() {
        return Err(Error::Numeric(format!(
            "clipped term with ratio={ratio}, advantage={advantage}, eps={eps}"
        )));
    }
    Ok(clip_with_branch(ratio, advantage, eps).0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateOptions {
    pub eps_clip: f64,
    pub scoring: Scoring,
    pub loss_mean: LossMean,
}

/// Clipped surrogate objective of a group and its exact gradient.
///
/// Only selected trajectories contribute. Each scored token `t` of trajectory
/// `i` adds `clipped_term(exp(lp_new - lp_old), advantages[i], eps)`; the
/// gradient of a token is `A * ratio * d lp_new` when the ratio branch is in
/// effect and zero otherwise.
pub fn surrogate_loss_and_grad(
    params: &PolicyParams,
    params_old: &PolicyParams,
    task: &Task,
    group: &Group,
    advantages: &[f64],
    opts: &SurrogateOptions,
) -> Result<(f64, PolicyParams)> {
    if advantages.len() != group.trajectories.len() {
        return Err(Error::Shape(format!(
            "{} advantages for {} trajectories",
            advantages.len(),
            group.trajectories.len()
        )));
    }
    let scored_tokens = |i: usize| {
        let tr = &group.trajectories[i];
        match opts.scoring {
            Scoring::Unforced => tr.tokens.len(),
            Scoring::PromptPrefix => tr.tokens.len() - tr.forced_prefix_len,
        }
    };
    let pooled: usize = group.selected.iter().map(|&i| scored_tokens(i)).sum();

    let mut objective = 0.0;
    let mut grad = PolicyParams::zeros(params.dims());
    for &i in &group.selected {
        let tr = &group.trajectories[i];
        let n_tokens = scored_tokens(i);
        if n_tokens == 0 {
            continue;
        }
        let coef = match opts.loss_mean {
            LossMean::PerTrajectory => 1.0 / (group.selected.len() * n_tokens) as f64,
            LossMean::Pooled => 1.0 / pooled as f64,
        };
        let new = logprob(params, task, tr, opts.scoring)?;
        let old = logprob(params_old, task, tr, opts.scoring)?;
        let adv = advantages[i];
        let mut weights = vec![0.0; tr.tokens.len()];
        for t in 0..tr.tokens.len() {
            if opts.scoring == Scoring::PromptPrefix && tr.is_forced(t) {
                continue;
            }
            let ratio = (new[t] - old[t]).exp();
            if !ratio.is_finite() {
                return Err(Error::Numeric(format!(
                    "ratio {ratio} at trajectory {i}, token {t} of group {}",
                    group.task_id
                )));
            }
            let (term, branch) = clip_with_branch(ratio, adv, opts.eps_clip);
            objective += coef * term;
            if branch == ClipBranch::Ratio {
                weights[t] = coef * adv * ratio;
            }
        }
        accumulate_grad(params, task, tr, opts.scoring, |t| weights[t], &mut grad)?;
    }
    Ok((objective, grad))
}

/// Masked advantages followed by the clipped surrogate.
pub fn agrpo_loss_and_grad(
    params: &PolicyParams,
    params_old: &PolicyParams,
    group: &Group,
    task: &Task,
    scope: AdvantageScope,
    opts: &SurrogateOptions,
) -> Result<(f64, PolicyParams)> {
    let adv = masked_advantages(group, scope)?;
    surrogate_loss_and_grad(params, params_old, task, group, &adv, opts)
}
