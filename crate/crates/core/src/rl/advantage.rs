use crate::error::{Error, Result};

use super::{AdvantageScope, Group};

/// Groups whose reward standard deviation falls below this get zero advantage.
pub const DEGENERATE_STD: f64 = 1e-12;

fn mean_std<'a>(values: impl Iterator<Item = &'a f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// `(r_i - mean) / std` with population statistics.
pub fn group_advantages(rewards: &[f64]) -> Result<Vec<f64>> {
    if rewards.len() < 2 {
        return Err(Error::Input(format!(
            "group of {} rewards, need at least 2",
            rewards.len()
        )));
    }
    let (mean, std) = mean_std(rewards.iter());
    if std < DEGENERATE_STD {
        return Ok(vec![0.0; rewards.len()]);
    }
    Ok(rewards.iter().map(|r| (r - mean) / std).collect())
}

/// Advantages normalised over the selected set only; unselected entries are
/// exactly zero. Fails on fewer than two selected samples.
pub fn masked_advantages(group: &Group, scope: AdvantageScope) -> Result<Vec<f64>> {
    if group.selected.len() < 2 {
        return Err(Error::Input(format!(
            "degenerate group {}: {} selected samples",
            group.task_id,
            group.selected.len()
        )));
    }
    let mut adv = vec![0.0; group.rewards.len()];
    let parts: Vec<Vec<usize>> = match scope {
        AdvantageScope::Joint => vec![group.selected.clone()],
        AdvantageScope::PerHalf => {
            let half = group.rewards.len() / 2;
            let (a, b) = group.selected.iter().partition(|&&i| i < half);
            vec![a, b]
        }
    };
    for part in parts.iter().filter(|p| !p.is_empty()) {
        let (mean, std) = mean_std(part.iter().map(|&i| &group.rewards[i]));
        if std < DEGENERATE_STD {
            continue;
        }
        for &i in part {
            adv[i] = (group.rewards[i] - mean) / std;
        }
    }
    Ok(adv)
}
