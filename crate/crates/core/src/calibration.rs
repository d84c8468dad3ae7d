//! Difficulty calibration from three reference tiers.
//!
//! Each task is answered `runs` times (8 by default) by each tier, and the
//! correct counts are pushed through a first-match rule cascade to get a level.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Streams;
use crate::taskworld::{oracle_answer, tier_sample, Dims, Level, Task, Tier, TierParams};

pub const DEFAULT_RUNS: u32 = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TierCounts {
    pub task_id: String,
    pub m1_correct: u32,
    pub m2_correct: u32,
    pub m3_correct: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Bound {
    Any,
    Above(u32),
    Below(u32),
}

impl Bound {
    fn admits(self, n: u32) -> bool {
        match self {
            Bound::Any => true,
            Bound::Above(t) => n > t,
            Bound::Below(t) => n < t,
        }
    }
}

struct Rule {
    level: Level,
    m1: Bound,
    m2: Bound,
    m3: Bound,
}

/// Checked in order; the first rule that admits all three counts wins.
const RULES: [Rule; 5] = [
    Rule {
        level: Level::L1,
        m1: Bound::Above(6),
        m2: Bound::Any,
        m3: Bound::Any,
    },
    Rule {
        level: Level::L2,
        m1: Bound::Above(3),
        m2: Bound::Above(6),
        m3: Bound::Any,
    },
    Rule {
        level: Level::L3,
        m1: Bound::Below(3),
        m2: Bound::Above(7),
        m3: Bound::Any,
    },
    Rule {
        level: Level::L4,
        m1: Bound::Any,
        m2: Bound::Below(3),
        m3: Bound::Above(6),
    },
    Rule {
        level: Level::L5,
        m1: Bound::Any,
        m2: Bound::Any,
        m3: Bound::Below(3),
    },
];

/// Level for no matching rule.
pub const FALLBACK_LEVEL: Level = Level::L3;

/// Assigns a level. The flag is `false` when no rule matched and the
/// fallback was used.
pub fn assign_level(c: &TierCounts) -> (Level, bool) {
    RULES
        .iter()
        .find(|r| r.m1.admits(c.m1_correct) && r.m2.admits(c.m2_correct) && r.m3.admits(c.m3_correct))
        .map_or((FALLBACK_LEVEL, false), |r| (r.level, true))
}

/// Counts correct tier answers over `runs` draws per task and tier. Each
/// draw has its own stream keyed by `(task id, tier, run)`.
pub fn run_tiers(tasks: &[Task], params: &TierParams, dims: Dims, runs: u32, streams: &Streams) -> Vec<TierCounts> {
    tasks
        .par_iter()
        .map(|task| {
            let count = |tier: Tier, slot: u64| {
                (0..runs)
                    .filter(|&run| {
                        let mut rng = streams.rng(&task.id, slot * u64::from(runs) + u64::from(run));
                        tier_sample(tier, task, params, dims, &mut rng) == oracle_answer(task)
                    })
                    .count() as u32
            };
            TierCounts {
                task_id: task.id.clone(),
                m1_correct: count(Tier::M1, 0),
                m2_correct: count(Tier::M2, 1),
                m3_correct: count(Tier::M3, 2),
            }
        })
        .collect()
}

/// Calibration summary. Accuracy vectors are indexed L1..L5 and hold `null`
/// for empty levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub levels: BTreeMap<Level, usize>,
    pub m1_acc_by_level: Vec<Option<f64>>,
    pub m2_acc_by_level: Vec<Option<f64>>,
    pub m3_acc_by_level: Vec<Option<f64>>,
    pub unmatched: usize,
}

impl CalibrationReport {
    pub fn total(&self) -> usize {
        self.levels.values().sum()
    }

    pub fn populated_levels(&self) -> usize {
        self.levels.values().filter(|&&n| n > 0).count()
    }

    /// True when mean M1 accuracy never increases from one populated level
    /// to the next.
    pub fn m1_monotone(&self) -> bool {
        let seq: Vec<f64> = self.m1_acc_by_level.iter().flatten().copied().collect();
        seq.windows(2).all(|w| w[1] <= w[0])
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

pub fn calibrate(
    tasks: &[Task],
    params: &TierParams,
    dims: Dims,
    runs: u32,
    streams: &Streams,
) -> Result<(Vec<Task>, CalibrationReport)> {
    if tasks.is_empty() {
        return Err(Error::Input("calibration needs at least one task".into()));
    }
    if runs == 0 {
        return Err(Error::Config("tiers.runs must be >= 1".into()));
    }
    params.validate()?;
    for t in tasks {
        t.check(dims)?;
    }
    let counts = run_tiers(tasks, params, dims, runs, streams);

    let mut levels: BTreeMap<Level, usize> = Level::ALL.iter().map(|&l| (l, 0)).collect();
    let mut sums = [[0.0f64; 3]; 5];
    let mut unmatched = 0;
    let mut out = Vec::with_capacity(tasks.len());
    for (task, c) in tasks.iter().zip(&counts) {
        let (level, matched) = assign_level(c);
        unmatched += usize::from(!matched);
        *levels.get_mut(&level).expect("all levels present") += 1;
        let r = f64::from(runs);
        let acc = [c.m1_correct, c.m2_correct, c.m3_correct].map(|n| f64::from(n) / r);
        for (s, a) in sums[level.index()].iter_mut().zip(acc) {
            *s += a;
        }
        out.push(Task {
            level: Some(level),
            ..task.clone()
        });
    }
    let by_level = |tier: usize| -> Vec<Option<f64>> {
        Level::ALL
            .iter()
            .map(|l| {
                let n = levels[l];
                (n > 0).then(|| sums[l.index()][tier] / n as f64)
            })
            .collect()
    };
    let report = CalibrationReport {
        m1_acc_by_level: by_level(0),
        m2_acc_by_level: by_level(1),
        m3_acc_by_level: by_level(2),
        levels,
        unmatched,
    };
    Ok((out, report))
}
