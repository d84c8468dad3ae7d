//! Helpers shared by the integration tests.
#![allow(dead_code)]

use autothink::policy::{grad_logprob, logprob, sample_trajectory, Mode, PolicyParams, Scoring};
use autothink::rl::{adaptive_sample, agrpo_loss_and_grad, AdvantageScope, LossMean, SurrogateOptions, TrainConfig};
use autothink::rng::Streams;
use autothink::taskworld::{Dims, Family, Task};
use rand::Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-5;
pub const CASES: u64 = 100;

/// Norm-relative tolerance for gradient checks.
pub const GRAD_TOL: f64 = TOL;

pub fn random_dims(rng: &mut impl Rng) -> Dims {
    Dims {
        n_coarse: rng.gen_range(1..=4),
        n_fine: rng.gen_range(2..=4),
        n_answers: rng.gen_range(2..=4),
    }
}

pub fn random_params(dims: Dims, scale: f64, rng: &mut impl Rng) -> PolicyParams {
    let mut p = PolicyParams::zeros(dims);
    for v in p.iter_mut() {
        *v = rng.gen_range(-scale..scale);
    }
    p
}

pub fn random_task(dims: Dims, rng: &mut impl Rng) -> Task {
    Task {
        id: "q".into(),
        coarse: rng.gen_range(0..dims.n_coarse),
        fine: rng.gen_range(0..dims.n_fine),
        answer: rng.gen_range(0..dims.n_answers),
        family: if rng.gen() { Family::Easy } else { Family::Hard },
        level: None,
    }
}

/// Norm-relative error between analytic and numeric gradients of `f`.
pub fn relative_error(params: &PolicyParams, analytic: &PolicyParams, f: impl Fn(&PolicyParams) -> f64) -> f64 {
    let mut diff2 = 0.0;
    let mut norm_a = 0.0;
    let mut norm_n = 0.0;
    let n = params.len();
    for k in 0..n {
        let shifted = |d: f64| {
            let mut q = params.clone();
            *q.iter_mut().nth(k).unwrap() += d;
            f(&q)
        };
        let numeric = (shifted(H) - shifted(-H)) / (2.0 * H);
        let a = *analytic.iter().nth(k).unwrap();
        diff2 += (a - numeric).powi(2);
        norm_a += a * a;
        norm_n += numeric * numeric;
    }
    let scale = norm_a.sqrt().max(norm_n.sqrt());
    if scale < 1e-12 {
        diff2.sqrt()
    } else {
        diff2.sqrt() / scale
    }
}

/// Relative error of `grad_logprob` on random configuration `case`.
pub fn logprob_case(root: &Streams, case: u64) -> f64 {
    let mut rng = root.rng("case", case);
    let dims = random_dims(&mut rng);
    let params = random_params(dims, 2.0, &mut rng);
    let task = random_task(dims, &mut rng);
    let force = [None, Some(Mode::Think), Some(Mode::NoThink)][rng.gen_range(0..3)];
    let scoring = if rng.gen() {
        Scoring::Unforced
    } else {
        Scoring::PromptPrefix
    };
    let traj = sample_trajectory(&params, &task, force, &mut rng).unwrap();
    let g = grad_logprob(&params, &task, &traj, scoring).unwrap();
    relative_error(&params, &g, |p| logprob(p, &task, &traj, scoring).unwrap().iter().sum())
}

/// Relative error of the masked clipped objective on random configuration
/// `case`. Parameters sit away from the sampling snapshot so both clip
/// branches occur.
pub fn agrpo_case(root: &Streams, case: u64) -> f64 {
    let mut rng = root.rng("case", case);
    let dims = random_dims(&mut rng);
    let params_old = random_params(dims, 2.0, &mut rng);
    let mut params = params_old.clone();
    for v in params.iter_mut() {
        *v += rng.gen_range(-0.3..0.3);
    }
    let task = random_task(dims, &mut rng);
    let cfg = TrainConfig {
        group_size: 2 * rng.gen_range(1..=3),
        tau: [-2.0, 0.5, 1.0, 3.0][rng.gen_range(0..4)],
        score_forced_prefix: rng.gen(),
        ..TrainConfig::default()
    };
    let group = adaptive_sample(&params_old, &task, &cfg, &root.child(case)).unwrap();
    let scope = if rng.gen() {
        AdvantageScope::Joint
    } else {
        AdvantageScope::PerHalf
    };
    let opts = SurrogateOptions {
        eps_clip: cfg.eps_clip,
        scoring: cfg.scoring(),
        loss_mean: if rng.gen() {
            LossMean::PerTrajectory
        } else {
            LossMean::Pooled
        },
    };
    let (_, g) = agrpo_loss_and_grad(&params, &params_old, &group, &task, scope, &opts).unwrap();
    relative_error(&params, &g, |p| {
        agrpo_loss_and_grad(p, &params_old, &group, &task, scope, &opts)
            .unwrap()
            .0
    })
}
