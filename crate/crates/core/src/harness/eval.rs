//! Pass@1 accuracy and thinking rate, per difficulty level.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{sample_trajectory, Mode, PolicyParams};
use crate::rng::Streams;
use crate::taskworld::{oracle_answer, Family, Level, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RowLevel {
    L1,
    L2,
    L3,
    L4,
    L5,
    #[serde(rename = "ALL")]
    All,
}

impl From<Level> for RowLevel {
    fn from(l: Level) -> Self {
        match l {
            Level::L1 => RowLevel::L1,
            Level::L2 => RowLevel::L2,
            Level::L3 => RowLevel::L3,
            Level::L4 => RowLevel::L4,
            Level::L5 => RowLevel::L5,
        }
    }
}

/// One line of an evaluation table. With one sample per task `acc` is Pass@1;
/// with more it is the mean accuracy over samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub level: RowLevel,
    pub acc: f64,
    pub think_rate: f64,
    pub n: usize,
    pub mean_trace_len: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyRow {
    pub family: Family,
    pub acc: f64,
    pub think_rate: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, Default)]
struct Outcome {
    acc: f64,
    think: f64,
    trace: f64,
}

fn outcomes(
    params: &PolicyParams,
    tasks: &[Task],
    samples_per_task: usize,
    force: Option<Mode>,
    streams: &Streams,
) -> Result<Vec<Outcome>> {
    if samples_per_task == 0 {
        return Err(Error::Config("eval.samples_per_task must be >= 1".into()));
    }
    tasks
        .par_iter()
        .map(|task| {
            let mut o = Outcome::default();
            for j in 0..samples_per_task {
                let tr = sample_trajectory(params, task, force, &mut streams.rng(&task.id, j as u64))?;
                o.acc += f64::from(u8::from(tr.answer() == Some(oracle_answer(task))));
                o.think += f64::from(u8::from(tr.mode() == Some(Mode::Think)));
                o.trace += tr.trace_len() as f64;
            }
            let s = samples_per_task as f64;
            Ok(Outcome {
                acc: o.acc / s,
                think: o.think / s,
                trace: o.trace / s,
            })
        })
        .collect()
}

fn mean_row(level: RowLevel, items: &[Outcome]) -> EvalRow {
    let n = items.len();
    let mean = |f: fn(&Outcome) -> f64| items.iter().map(f).sum::<f64>() / n as f64;
    EvalRow {
        level,
        acc: mean(|o| o.acc),
        think_rate: mean(|o| o.think),
        n,
        mean_trace_len: mean(|o| o.trace),
    }
}

/// Evaluates `params` on leveled tasks. `force` pins the mode for the
/// all-think / no-think baselines; `None` lets the policy choose. Rows for
/// populated levels come first, then the `ALL` row as their n-weighted mean.
pub fn evaluate(
    params: &PolicyParams,
    tasks: &[Task],
    samples_per_task: usize,
    force: Option<Mode>,
    streams: &Streams,
) -> Result<Vec<EvalRow>> {
    let missing: Vec<&str> = tasks
        .iter()
        .filter(|t| t.level.is_none())
        .map(|t| t.id.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Input(format!(
            "evaluation needs calibrated tasks; missing level: {}",
            missing.join(", ")
        )));
    }
    let outs = outcomes(params, tasks, samples_per_task, force, streams)?;
    let mut rows = Vec::new();
    for level in Level::ALL {
        let items: Vec<Outcome> = tasks
            .iter()
            .zip(&outs)
            .filter(|(t, _)| t.level == Some(level))
            .map(|(_, o)| *o)
            .collect();
        if !items.is_empty() {
            rows.push(mean_row(level.into(), &items));
        }
    }
    let total: usize = rows.iter().map(|r| r.n).sum();
    let weighted = |f: fn(&EvalRow) -> f64| rows.iter().map(|r| f(r) * r.n as f64).sum::<f64>() / total.max(1) as f64;
    let all = EvalRow {
        level: RowLevel::All,
        acc: weighted(|r| r.acc),
        think_rate: weighted(|r| r.think_rate),
        n: total,
        mean_trace_len: weighted(|r| r.mean_trace_len),
    };
    rows.push(all);
    Ok(rows)
}

/// Same measurements split by task family instead of level. Tasks need not
/// be calibrated.
pub fn evaluate_families(
    params: &PolicyParams,
    tasks: &[Task],
    samples_per_task: usize,
    force: Option<Mode>,
    streams: &Streams,
) -> Result<Vec<FamilyRow>> {
    let outs = outcomes(params, tasks, samples_per_task, force, streams)?;
    Ok([Family::Easy, Family::Hard]
        .into_iter()
        .filter_map(|family| {
            let items: Vec<Outcome> = tasks
                .iter()
                .zip(&outs)
                .filter(|(t, _)| t.family == family)
                .map(|(_, o)| *o)
                .collect();
            (!items.is_empty()).then(|| {
                let r = mean_row(RowLevel::All, &items);
                FamilyRow {
                    family,
                    acc: r.acc,
                    think_rate: r.think_rate,
                    n: r.n,
                }
            })
        })
        .collect())
}

/// All-think, no-think and adaptive tables for the same policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeComparison {
    pub all_think: Vec<EvalRow>,
    pub no_think: Vec<EvalRow>,
    pub adaptive: Vec<EvalRow>,
}

impl ModeComparison {
    pub fn overall(rows: &[EvalRow]) -> &EvalRow {
        rows.iter()
            .find(|r| r.level == RowLevel::All)
            .expect("ALL row is always emitted")
    }
}

pub fn compare_modes(
    params: &PolicyParams,
    tasks: &[Task],
    samples_per_task: usize,
    streams: &Streams,
) -> Result<ModeComparison> {
    Ok(ModeComparison {
        all_think: evaluate(params, tasks, samples_per_task, Some(Mode::Think), streams)?,
        no_think: evaluate(params, tasks, samples_per_task, Some(Mode::NoThink), streams)?,
        adaptive: evaluate(params, tasks, samples_per_task, None, streams)?,
    })
}

/// Writes `level,acc,think_rate,n,mean_trace_len`.
pub fn write_eval_csv(rows: &[EvalRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_eval_csv(path: &Path) -> Result<Vec<EvalRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}
