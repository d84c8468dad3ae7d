//! Randomised invariants.

use autothink::harness::{evaluate, ModeComparison};
use autothink::policy::{log_softmax, sample_trajectory, Mode, PolicyParams, Scoring};
use autothink::rl::{
    adaptive_sample, group_advantages, masked_advantages, surrogate_loss_and_grad, AdvantageScope, RejectionMode,
    SurrogateOptions, TrainConfig,
};
use autothink::rng::Streams;
use autothink::taskworld::{generate_world, Dims, Family, Level, Task, WorldConfig};
use proptest::prelude::*;

fn dims() -> Dims {
    Dims {
        n_coarse: 3,
        n_fine: 3,
        n_answers: 3,
    }
}

fn params_from(values: &[f64]) -> PolicyParams {
    let mut p = PolicyParams::zeros(dims());
    for (v, x) in p.iter_mut().zip(values.iter().cycle()) {
        *v = *x;
    }
    p
}

fn task(coarse: usize, fine: usize, family: Family) -> Task {
    Task {
        id: format!("t{coarse}{fine}"),
        coarse,
        fine,
        answer: (coarse + fine) % 3,
        family,
        level: Some(Level::L3),
    }
}

proptest! {
    #[test]
    fn log_softmax_normalises(logits in prop::collection::vec(-50.0f64..50.0, 1..8)) {
        let total: f64 = log_softmax(&logits).iter().map(|l| l.exp()).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn advantages_are_standardised(rewards in prop::collection::vec(-3.0f64..3.0, 2..20)) {
        let adv = group_advantages(&rewards).unwrap();
        let n = adv.len() as f64;
        let mean = adv.iter().sum::<f64>() / n;
        let std = (adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
        prop_assert!(mean.abs() < 1e-9);
        prop_assert!((std - 1.0).abs() < 1e-9 || adv.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn forced_samples_are_well_formed(
        values in prop::collection::vec(-5.0f64..5.0, 1..40),
        coarse in 0usize..3,
        fine in 0usize..3,
        seed in any::<u64>(),
        think in any::<bool>(),
    ) {
        let p = params_from(&values);
        let force = if think { Mode::Think } else { Mode::NoThink };
        let t = task(coarse, fine, Family::Hard);
        let tr = sample_trajectory(&p, &t, Some(force), &mut Streams::new(seed, "prop").rng("x", 0)).unwrap();
        prop_assert!(tr.validate(dims()).is_ok());
        prop_assert_eq!(tr.mode(), Some(force));
        prop_assert_eq!(tr.logprobs[0], 0.0);
        prop_assert_eq!(tr.forced_prefix_len, 1);
    }

    #[test]
    fn rejection_bookkeeping(
        values in prop::collection::vec(-3.0f64..3.0, 1..40),
        half in 1usize..5,
        tau in -1.5f64..2.0,
        seed in any::<u64>(),
        random in any::<bool>(),
    ) {
        let g = 2 * half;
        let cfg = TrainConfig {
            group_size: g,
            tau,
            rejection_mode: if random { RejectionMode::Random } else { RejectionMode::ArgsortTop },
            ..TrainConfig::default()
        };
        let t = task(1, 2, Family::Easy);
        let p = params_from(&values);
        let group = adaptive_sample(&p, &t, &cfg, &Streams::new(seed, "prop")).unwrap();
        let think = group.selected.iter().filter(|&&i| i < g).count();
        if group.r_avg > tau {
            prop_assert_eq!(group.selected.len(), g);
            prop_assert_eq!(think, g / 2);
        } else {
            prop_assert_eq!(group.selected.len(), 2 * g);
        }
        // masked samples carry zero advantage and so no gradient
        let adv = masked_advantages(&group, AdvantageScope::Joint).unwrap();
        for (i, &m) in group.mask.iter().enumerate() {
            if !m {
                prop_assert_eq!(adv[i], 0.0);
            }
        }
    }

    #[test]
    fn masked_trajectories_do_not_move_the_objective(
        values in prop::collection::vec(-3.0f64..3.0, 1..40),
        seed in any::<u64>(),
    ) {
        let cfg = TrainConfig { group_size: 4, tau: -5.0, ..TrainConfig::default() };
        let t = task(0, 1, Family::Hard);
        let p = params_from(&values);
        let mut group = adaptive_sample(&p, &t, &cfg, &Streams::new(seed, "prop")).unwrap();
        prop_assert!(group.rejected);
        let adv = masked_advantages(&group, AdvantageScope::Joint).unwrap();
        let opts = SurrogateOptions { eps_clip: 0.2, scoring: Scoring::Unforced, loss_mean: Default::default() };
        let before = surrogate_loss_and_grad(&p, &p, &t, &group, &adv, &opts).unwrap();
        // scramble the rewards of masked samples: nothing may change
        for i in 0..group.rewards.len() {
            if !group.mask[i] {
                group.rewards[i] = 1e6;
            }
        }
        let after = surrogate_loss_and_grad(&p, &p, &t, &group, &adv, &opts).unwrap();
        prop_assert_eq!(before, after);
    }

    #[test]
    fn all_row_is_weighted_mean(seed in 0u64..50, samples in 1usize..3) {
        let world = generate_world(&WorldConfig { n_coarse: 3, n_fine: 3, n_answers: 3, n_tasks: 30, seed, ..WorldConfig::default() }).unwrap();
        let levels = [Level::L1, Level::L2, Level::L4, Level::L5];
        let tasks: Vec<Task> = world.into_iter().enumerate().map(|(i, mut t)| { t.level = Some(levels[i % 4]); t }).collect();
        let p = params_from(&[0.3, -0.7, 1.1, 0.2]);
        let rows = evaluate(&p, &tasks, samples, None, &Streams::new(seed, "eval")).unwrap();
        let (lv, all) = rows.split_at(rows.len() - 1);
        let n: usize = lv.iter().map(|r| r.n).sum();
        let acc = lv.iter().map(|r| r.acc * r.n as f64).sum::<f64>() / n as f64;
        let think = lv.iter().map(|r| r.think_rate * r.n as f64).sum::<f64>() / n as f64;
        prop_assert!((ModeComparison::overall(all).acc - acc).abs() <= 1e-12);
        prop_assert!((all[0].think_rate - think).abs() <= 1e-12);
    }
}

#[test]
fn sampling_is_schedule_independent() {
    let world = generate_world(&WorldConfig {
        n_tasks: 64,
        ..WorldConfig::default()
    })
    .unwrap();
    let p = PolicyParams::zeros(WorldConfig::default().dims());
    let cfg = TrainConfig::default();
    let s = Streams::new(3, "sched");
    let forward: Vec<_> = world
        .iter()
        .map(|t| adaptive_sample(&p, t, &cfg, &s).unwrap())
        .collect();
    let mut backward: Vec<_> = world
        .iter()
        .rev()
        .map(|t| adaptive_sample(&p, t, &cfg, &s).unwrap())
        .collect();
    backward.reverse();
    assert_eq!(forward, backward);
}
