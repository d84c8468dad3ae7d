use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{sample_trajectory, PolicyParams};
use crate::rng::Streams;
use crate::taskworld::{oracle_answer, Task};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterRecord {
    pub task_id: String,
    pub pass: u32,
    pub retained: bool,
}

/// Keeps the tasks whose pass count over `n_samples` free responses is
/// neither zero nor perfect. Response `j` of a task uses stream `(task id, j)`,
/// so a retained task's count can be recomputed from the same seed.
pub fn filter_rl_data(
    params: &PolicyParams,
    tasks: &[Task],
    n_samples: u32,
    streams: &Streams,
) -> Result<(Vec<Task>, Vec<FilterRecord>)> {
    if n_samples < 2 {
        return Err(Error::Config(format!(
            "filter needs at least 2 samples, got {n_samples}"
        )));
    }
    let records: Vec<FilterRecord> = tasks
        .par_iter()
        .map(|task| {
            let mut pass = 0;
            for j in 0..n_samples {
                let tr = sample_trajectory(params, task, None, &mut streams.rng(&task.id, u64::from(j)))?;
                pass += u32::from(tr.answer() == Some(oracle_answer(task)));
            }
            Ok(FilterRecord {
                task_id: task.id.clone(),
                pass,
                retained: pass > 0 && pass < n_samples,
            })
        })
        .collect::<Result<_>>()?;
    let kept = tasks
        .iter()
        .zip(&records)
        .filter(|(_, r)| r.retained)
        .map(|(t, _)| t.clone())
        .collect();
    Ok((kept, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taskworld::{Dims, Family};

    fn dims() -> Dims {
        Dims {
            n_coarse: 1,
            n_fine: 2,
            n_answers: 2,
        }
    }

    fn task(id: &str, answer: usize) -> Task {
        Task {
            id: id.into(),
            coarse: 0,
            fine: 0,
            answer,
            family: Family::Easy,
            level: None,
        }
    }

    #[test]
    fn extremes_dropped_interior_kept() {
        // always no-think, always answers 0
        let mut p = PolicyParams::base(dims(), 60.0);
        p.nothink_answer_logits_mut(0)[0] = 60.0;
        let tasks = [task("right", 0), task("wrong", 1)];
        let (kept, recs) = filter_rl_data(&p, &tasks, 8, &Streams::new(1, "f")).unwrap();
        assert!(kept.is_empty());
        assert_eq!(recs[0].pass, 8);
        assert_eq!(recs[1].pass, 0);

        // coin flip answers: keep iff interior
        let p = PolicyParams::base(dims(), 60.0);
        let many: Vec<Task> = (0..50).map(|i| task(&format!("c{i}"), 0)).collect();
        let (kept, recs) = filter_rl_data(&p, &many, 8, &Streams::new(1, "f")).unwrap();
        for r in &recs {
            assert_eq!(r.retained, r.pass > 0 && r.pass < 8);
        }
        assert_eq!(kept.len(), recs.iter().filter(|r| r.retained).count());
        assert!(recs.iter().any(|r| r.pass == 3 && r.retained));
    }
}
