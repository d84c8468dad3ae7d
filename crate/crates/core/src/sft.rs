//! Mode-tagged supervised warm-up.
//!
//! Two corpora are built from the task set. The coarse corpus tags modes at
//! random in a 2:1 think to no-think ratio, ignoring difficulty. The precise
//! corpus uses calibrated levels: L1-L2 become no-think targets, L3-L5 think
//! targets, balanced 1:1. Think targets carry the oracle reasoning token
//! (the task's fine feature). Training runs one epoch of each, in that order.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{accumulate_grad, logprob, Mode, PolicyParams, Scoring, Token, Trajectory};
use crate::rng::{StreamRng, Streams};
use crate::taskworld::Task;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SftTier {
    Coarse,
    Precise,
}

/// One supervised target. Field order is the on-disk record order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SftExample {
    pub task_id: String,
    pub mode: Mode,
    pub reason: Option<usize>,
    pub answer: usize,
    pub tier: SftTier,
}

impl SftExample {
    fn for_task(task: &Task, mode: Mode, tier: SftTier) -> Self {
        Self {
            task_id: task.id.clone(),
            mode,
            reason: (mode == Mode::Think).then_some(task.fine),
            answer: task.answer,
            tier,
        }
    }

    /// The full target response, unforced.
    pub fn target(&self) -> Trajectory {
        let mut tokens = vec![Token::mode(self.mode)];
        if let Some(r) = self.reason {
            tokens.push(Token::Reason(r));
        }
        tokens.push(Token::Answer(self.answer));
        let n = tokens.len();
        Trajectory {
            tokens,
            logprobs: vec![0.0; n],
            forced_prefix_len: 0,
        }
    }
}

/// Number of think examples in a coarse corpus of `n`: two thirds, rounded
/// toward think.
pub fn coarse_think_count(n: usize) -> usize {
    n - n / 3
}

pub fn build_coarse_corpus(tasks: &[Task], rng: &mut StreamRng) -> Result<Vec<SftExample>> {
    if tasks.is_empty() {
        return Err(Error::Input("coarse corpus needs at least one task".into()));
    }
    let mut order: Vec<usize> = (0..tasks.len()).collect();
    order.shuffle(rng);
    let mut modes = vec![Mode::NoThink; tasks.len()];
    for &i in &order[..coarse_think_count(tasks.len())] {
        modes[i] = Mode::Think;
    }
    Ok(tasks
        .iter()
        .zip(modes)
        .map(|(t, m)| SftExample::for_task(t, m, SftTier::Coarse))
        .collect())
}

pub fn build_precise_corpus(tasks: &[Task], rng: &mut StreamRng) -> Result<Vec<SftExample>> {
    let missing: Vec<&str> = tasks
        .iter()
        .filter(|t| t.level.is_none())
        .map(|t| t.id.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Input(format!("tasks without a level: {}", missing.join(", "))));
    }
    let (easy, hard): (Vec<usize>, Vec<usize>) =
        (0..tasks.len()).partition(|&i| tasks[i].level.is_some_and(|l| l.is_easy()));
    let keep_n = easy.len().min(hard.len());
    let mut keep = vec![false; tasks.len()];
    for mut side in [easy, hard] {
        side.shuffle(rng);
        for &i in &side[..keep_n] {
            keep[i] = true;
        }
    }
    Ok(tasks
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(t, _)| {
            let mode = if t.level.is_some_and(|l| l.is_easy()) {
                Mode::NoThink
            } else {
                Mode::Think
            };
            SftExample::for_task(t, mode, SftTier::Precise)
        })
        .collect())
}

/// Negative log-likelihood of the full target, mode token included.
pub fn sft_loss(params: &PolicyParams, task: &Task, example: &SftExample) -> Result<f64> {
    let lp = logprob(params, task, &example.target(), Scoring::Unforced)?;
    Ok(-lp.iter().sum::<f64>())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SftConfig {
    /// Step size of per-example gradient descent on the loss.
    pub lr: f64,
    /// No-think logit of the base policy (think logit is 0).
    pub base_nothink_logit: f64,
}

impl Default for SftConfig {
    fn default() -> Self {
        Self {
            lr: 0.03,
            base_nothink_logit: 10.0,
        }
    }
}

impl SftConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.lr.is_finite() || self.lr <= 0.0 {
            return Err(Error::Config(format!("sft.lr must be finite and > 0, got {}", self.lr)));
        }
        if !self.base_nothink_logit.is_finite() {
            return Err(Error::Config("sft.base_nothink_logit must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub tier: SftTier,
    pub examples: usize,
    /// Mean corpus loss before the epoch.
    pub loss_before: f64,
    /// Mean corpus loss after the epoch.
    pub loss_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SftReport {
    pub phases: Vec<PhaseReport>,
}

fn lookup<'a>(by_id: &HashMap<&str, &'a Task>, id: &str) -> Result<&'a Task> {
    by_id
        .get(id)
        .copied()
        .ok_or_else(|| Error::Input(format!("corpus refers to unknown task {id}")))
}

fn mean_loss(params: &PolicyParams, by_id: &HashMap<&str, &Task>, corpus: &[SftExample]) -> Result<f64> {
    let mut total = 0.0;
    for ex in corpus {
        total += sft_loss(params, lookup(by_id, &ex.task_id)?, ex)?;
    }
    Ok(total / corpus.len() as f64)
}

/// One shuffled epoch over the coarse corpus, then one over the precise corpus.
pub fn train_sft(
    mut params: PolicyParams,
    tasks: &[Task],
    coarse: &[SftExample],
    precise: &[SftExample],
    cfg: &SftConfig,
    streams: &Streams,
) -> Result<(PolicyParams, SftReport)> {
    cfg.validate()?;
    if coarse.is_empty() || precise.is_empty() {
        return Err(Error::Input("both SFT corpora must be non-empty".into()));
    }
    let by_id: HashMap<&str, &Task> = tasks.iter().map(|t| (t.id.as_str(), t)).collect();
    let mut phases = Vec::new();
    let mut step = 0usize;
    for (tier, corpus) in [(SftTier::Coarse, coarse), (SftTier::Precise, precise)] {
        let loss_before = mean_loss(&params, &by_id, corpus)?;
        let mut order: Vec<usize> = (0..corpus.len()).collect();
        order.shuffle(&mut streams.rng("epoch", tier as u64));
        for i in order {
            let ex = &corpus[i];
            let task = lookup(&by_id, &ex.task_id)?;
            let loss = sft_loss(&params, task, ex)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("SFT loss {loss} at step {step}")));
            }
            let mut grad = PolicyParams::zeros(params.dims());
            accumulate_grad(&params, task, &ex.target(), Scoring::Unforced, |_| 1.0, &mut grad)?;
            // descent on the negative log-likelihood
            params.add_scaled(&grad, cfg.lr)?;
            step += 1;
        }
        let loss_after = mean_loss(&params, &by_id, corpus)?;
        phases.push(PhaseReport {
            tier,
            examples: corpus.len(),
            loss_before,
            loss_after,
        });
    }
    params.validate()?;
    Ok((params, SftReport { phases }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taskworld::{generate_world, Dims, Family, Level, WorldConfig};
    use approx::assert_abs_diff_eq;

    fn tasks(n: usize) -> Vec<Task> {
        generate_world(&WorldConfig {
            n_tasks: n,
            ..WorldConfig::default()
        })
        .unwrap()
    }

    fn rng() -> StreamRng {
        Streams::new(7, "sft-test").rng("x", 0)
    }

    #[test]
    fn coarse_ratio() {
        let c = build_coarse_corpus(&tasks(300), &mut rng()).unwrap();
        assert_eq!(c.iter().filter(|e| e.mode == Mode::Think).count(), 200);
        assert_eq!(c.iter().filter(|e| e.mode == Mode::NoThink).count(), 100);
        let one = build_coarse_corpus(&tasks(1), &mut rng()).unwrap();
        assert_eq!(one[0].mode, Mode::Think);
        for n in 3..40 {
            let c = build_coarse_corpus(&tasks(n), &mut rng()).unwrap();
            let think = c.iter().filter(|e| e.mode == Mode::Think).count();
            assert_eq!(think, n - n / 3);
        }
        assert!(build_coarse_corpus(&[], &mut rng()).is_err());
    }

    #[test]
    fn think_targets_carry_fine() {
        let ts = tasks(120);
        let c = build_coarse_corpus(&ts, &mut rng()).unwrap();
        for (e, t) in c.iter().zip(&ts) {
            assert_eq!(e.answer, t.answer);
            match e.mode {
                Mode::Think => assert_eq!(e.reason, Some(t.fine)),
                Mode::NoThink => assert_eq!(e.reason, None),
            }
            crate::reward::parse(&e.target()).unwrap();
        }
    }

    fn leveled(easy: usize, hard: usize) -> Vec<Task> {
        (0..easy + hard)
            .map(|i| Task {
                id: format!("p{i}"),
                coarse: 0,
                fine: i % 4,
                answer: 1,
                family: Family::Easy,
                level: Some(if i < easy {
                    [Level::L1, Level::L2][i % 2]
                } else {
                    [Level::L3, Level::L4, Level::L5][i % 3]
                }),
            })
            .collect()
    }

    #[test]
    fn precise_balancing_and_modes() {
        let ts = leveled(60, 40);
        let c = build_precise_corpus(&ts, &mut rng()).unwrap();
        assert_eq!(c.len(), 80);
        assert_eq!(c.iter().filter(|e| e.mode == Mode::Think).count(), 40);
        let by_id: HashMap<&str, &Task> = ts.iter().map(|t| (t.id.as_str(), t)).collect();
        for e in &c {
            let t = by_id[e.task_id.as_str()];
            if t.level.unwrap().is_easy() {
                assert_eq!(e.mode, Mode::NoThink);
            } else {
                assert_eq!((e.mode, e.reason), (Mode::Think, Some(t.fine)));
            }
        }
    }

    #[test]
    fn precise_requires_levels() {
        let mut ts = leveled(2, 2);
        ts[1].level = None;
        ts[3].level = None;
        let err = build_precise_corpus(&ts, &mut rng()).unwrap_err().to_string();
        assert!(err.contains("p1") && err.contains("p3"), "{err}");
    }

    #[test]
    fn loss_values() {
        let dims = Dims {
            n_coarse: 2,
            n_fine: 4,
            n_answers: 4,
        };
        let t = Task {
            id: "a".into(),
            coarse: 1,
            fine: 2,
            answer: 3,
            family: Family::Hard,
            level: None,
        };
        let ex = SftExample::for_task(&t, Mode::NoThink, SftTier::Coarse);
        let uniform = PolicyParams::zeros(dims);
        assert_abs_diff_eq!(
            sft_loss(&uniform, &t, &ex).unwrap(),
            2f64.ln() + 4f64.ln(),
            epsilon = 1e-12
        );

        let mut sharp = PolicyParams::zeros(dims);
        sharp.mode_logits_mut(1).copy_from_slice(&[-800.0, 800.0]);
        sharp.nothink_answer_logits_mut(1)[3] = 800.0;
        assert_abs_diff_eq!(sft_loss(&sharp, &t, &ex).unwrap(), 0.0);
        assert!(sft_loss(&sharp, &t, &SftExample::for_task(&t, Mode::Think, SftTier::Coarse)).unwrap() > 0.0);
    }

    #[test]
    fn training_reduces_loss_and_is_deterministic() {
        let ts = tasks(400);
        let mut r = rng();
        let coarse = build_coarse_corpus(&ts, &mut r).unwrap();
        let leveled: Vec<Task> = ts
            .iter()
            .map(|t| Task {
                level: Some(if t.family == Family::Easy { Level::L2 } else { Level::L4 }),
                ..t.clone()
            })
            .collect();
        let precise = build_precise_corpus(&leveled, &mut r).unwrap();
        let cfg = SftConfig::default();
        let base = PolicyParams::base(WorldConfig::default().dims(), cfg.base_nothink_logit);
        let streams = Streams::new(7, "sft");
        let (p1, report) = train_sft(base.clone(), &ts, &coarse, &precise, &cfg, &streams).unwrap();
        for ph in &report.phases {
            assert!(ph.loss_after < ph.loss_before, "{ph:?}");
        }
        let (p2, _) = train_sft(base, &ts, &coarse, &precise, &cfg, &streams).unwrap();
        assert_eq!(p1, p2);
    }
}
