//! Stage runner. Every stage reads its inputs from, and writes its outputs
//! to, one run directory, so stages can be run one at a time or in sequence.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{Config, EvalCheckpoint, Stage};
use super::eval::{
    compare_modes, evaluate, evaluate_families, read_eval_csv, write_eval_csv, EvalRow, FamilyRow, ModeComparison,
};
use crate::calibration::{calibrate, CalibrationReport};
use crate::error::{Error, Result};
use crate::jsonl;
use crate::policy::{load_checkpoint, save_checkpoint, PolicyParams};
use crate::rl::{filter_rl_data, train_agrpo, train_grpo_vanilla, FilterRecord, IterLog};
use crate::rng::Streams;
use crate::sft::{build_coarse_corpus, build_precise_corpus, train_sft, SftExample, SftReport};
use crate::taskworld::{generate_world, load_tasks, save_tasks, Task};

pub const TASKS: &str = "tasks.jsonl";
pub const TASKS_CALIBRATED: &str = "tasks_calibrated.jsonl";
pub const CALIBRATION_REPORT: &str = "calibration_report.json";
pub const CORPUS_COARSE: &str = "corpus_coarse.jsonl";
pub const CORPUS_PRECISE: &str = "corpus_precise.jsonl";
pub const SFT_CHECKPOINT: &str = "sft_checkpoint.json";
pub const SFT_REPORT: &str = "sft_report.json";
pub const RL_TASKS: &str = "rl_tasks.jsonl";
pub const FILTER_RECORDS: &str = "filter_records.jsonl";
pub const GRPO_CHECKPOINT: &str = "grpo_checkpoint.json";
pub const GRPO_LOG: &str = "grpo_log.jsonl";
pub const AGRPO_CHECKPOINT: &str = "agrpo_checkpoint.json";
pub const AGRPO_LOG: &str = "agrpo_log.jsonl";
pub const EVAL_CSV: &str = "eval.csv";
pub const EVAL_FAMILIES_CSV: &str = "eval_families.csv";
pub const COMPARE_ALL_THINK: &str = "compare_all_think.csv";
pub const COMPARE_NO_THINK: &str = "compare_no_think.csv";
pub const COMPARE_ADAPTIVE: &str = "compare_adaptive.csv";
pub const REPORT: &str = "report.json";
pub const CONFIG_COPY: &str = "config.toml";
pub const FAILED: &str = "FAILED";

/// Summary assembled from whatever artifacts exist in the run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config_hash: String,
    pub seed: u64,
    pub calibration: Option<CalibrationReport>,
    pub sft: Option<SftReport>,
    pub filter: Option<FilterSummary>,
    pub grpo_final: Option<IterLog>,
    pub agrpo_final: Option<IterLog>,
    pub eval_checkpoint: EvalCheckpoint,
    pub eval: Option<Vec<EvalRow>>,
    pub eval_families: Option<Vec<FamilyRow>>,
    pub compare_all: Option<CompareSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSummary {
    pub candidates: usize,
    pub retained: usize,
}

/// `ALL` rows of the three mode-comparison tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareSummary {
    pub all_think: EvalRow,
    pub no_think: EvalRow,
    pub adaptive: EvalRow,
}

pub struct Pipeline {
    cfg: Config,
    dir: PathBuf,
}

impl Pipeline {
    pub fn new(cfg: Config, dir: impl Into<PathBuf>) -> Self {
        Self { cfg, dir: dir.into() }
    }

    /// Run directory `<out>/<config hash>-s<seed>`.
    pub fn in_run_dir(cfg: Config, out: &Path) -> Self {
        let dir = out.join(cfg.run_dir_name());
        Self::new(cfg, dir)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn config(&self) -> &Config {
        &self.cfg
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn streams(&self, domain: &str) -> Streams {
        Streams::new(self.cfg.seed(), domain)
    }

    /// Runs the configured stages in order. The first failure leaves a
    /// `FAILED` marker naming the stage; earlier outputs stay in place.
    pub fn run(&self) -> Result<()> {
        self.cfg.validate()?;
        std::fs::create_dir_all(&self.dir)?;
        let marker = self.path(FAILED);
        if marker.exists() {
            std::fs::remove_file(&marker)?;
        }
        std::fs::write(self.path(CONFIG_COPY), self.cfg.to_toml())?;
        for &stage in &self.cfg.run.stages {
            self.run_stage(stage)?;
        }
        Ok(())
    }

    /// Runs one stage, writing the failure marker if it fails.
    pub fn run_stage(&self, stage: Stage) -> Result<()> {
        std::fs::create_dir_all(&self.dir)?;
        self.stage_body(stage).map_err(|e| {
            let err = Error::Stage {
                stage: stage.name().into(),
                source: Box::new(e),
            };
            // best effort: the original error is what matters
            let _ = std::fs::write(self.path(FAILED), format!("stage: {stage}\nerror: {err}\n"));
            err
        })
    }

    fn stage_body(&self, stage: Stage) -> Result<()> {
        match stage {
            Stage::GenTasks => self.gen_tasks(),
            Stage::Calibrate => self.calibrate(),
            Stage::Sft => self.sft(),
            Stage::Filter => self.filter(),
            Stage::TrainGrpo => self.train_grpo(),
            Stage::TrainAgrpo => self.train_agrpo(),
            Stage::Eval => self.eval(),
            Stage::CompareModes => self.compare_modes(),
            Stage::Report => self.report().map(|_| ()),
        }
    }

    fn gen_tasks(&self) -> Result<()> {
        let tasks = generate_world(&self.cfg.world_config())?;
        save_tasks(&tasks, &self.path(TASKS))
    }

    fn calibrate(&self) -> Result<()> {
        let tasks = load_tasks(&self.path(TASKS))?;
        let dims = self.cfg.world_config().dims();
        let (leveled, report) = calibrate(
            &tasks,
            &self.cfg.tier_params(),
            dims,
            self.cfg.tiers.runs,
            &self.streams("calibrate"),
        )?;
        save_tasks(&leveled, &self.path(TASKS_CALIBRATED))?;
        report.save(&self.path(CALIBRATION_REPORT))
    }

    fn calibrated_tasks(&self) -> Result<Vec<Task>> {
        load_tasks(&self.path(TASKS_CALIBRATED))
    }

    fn sft(&self) -> Result<()> {
        let tasks = self.calibrated_tasks()?;
        let corpus = self.streams("corpus");
        let coarse = build_coarse_corpus(&tasks, &mut corpus.rng("coarse", 0))?;
        let precise = build_precise_corpus(&tasks, &mut corpus.rng("precise", 0))?;
        jsonl::write(&self.path(CORPUS_COARSE), &coarse)?;
        jsonl::write(&self.path(CORPUS_PRECISE), &precise)?;
        let base = PolicyParams::base(self.cfg.world_config().dims(), self.cfg.sft.base_nothink_logit);
        let (params, report) = train_sft(base, &tasks, &coarse, &precise, &self.cfg.sft, &self.streams("sft"))?;
        save_checkpoint(&params, &self.path(SFT_CHECKPOINT))?;
        std::fs::write(self.path(SFT_REPORT), serde_json::to_string_pretty(&report)? + "\n")?;
        Ok(())
    }

    fn filter(&self) -> Result<()> {
        let tasks = self.calibrated_tasks()?;
        let params = load_checkpoint(&self.path(SFT_CHECKPOINT))?;
        let (kept, records) = filter_rl_data(&params, &tasks, self.cfg.train.filter_samples, &self.streams("filter"))?;
        save_tasks(&kept, &self.path(RL_TASKS))?;
        jsonl::write(&self.path(FILTER_RECORDS), &records)
    }

    fn rl_inputs(&self) -> Result<(PolicyParams, Vec<Task>)> {
        let params = load_checkpoint(&self.path(SFT_CHECKPOINT))?;
        let tasks = load_tasks(&self.path(RL_TASKS))?;
        if tasks.is_empty() {
            return Err(Error::Input("the pass-rate filter retained no tasks".into()));
        }
        Ok((params, tasks))
    }

    fn train_grpo(&self) -> Result<()> {
        let (params, tasks) = self.rl_inputs()?;
        let cfg = self.cfg.train_config();
        let (params, log) = train_grpo_vanilla(params, &tasks, &cfg, cfg.reward)?;
        save_checkpoint(&params, &self.path(GRPO_CHECKPOINT))?;
        jsonl::write(&self.path(GRPO_LOG), &log)
    }

    fn train_agrpo(&self) -> Result<()> {
        let (params, tasks) = self.rl_inputs()?;
        let (params, log) = train_agrpo(params, &tasks, &self.cfg.train_config())?;
        save_checkpoint(&params, &self.path(AGRPO_CHECKPOINT))?;
        jsonl::write(&self.path(AGRPO_LOG), &log)
    }

    fn eval_params(&self) -> Result<PolicyParams> {
        let name = match self.cfg.eval.checkpoint {
            EvalCheckpoint::Sft => SFT_CHECKPOINT,
            EvalCheckpoint::Grpo => GRPO_CHECKPOINT,
            EvalCheckpoint::Agrpo => AGRPO_CHECKPOINT,
        };
        load_checkpoint(&self.path(name))
    }

    fn eval(&self) -> Result<()> {
        let tasks = self.calibrated_tasks()?;
        let params = self.eval_params()?;
        let n = self.cfg.eval.samples_per_task;
        let streams = self.streams("eval");
        let rows = evaluate(&params, &tasks, n, None, &streams)?;
        write_eval_csv(&rows, &self.path(EVAL_CSV))?;
        let families = evaluate_families(&params, &tasks, n, None, &streams)?;
        let mut w = csv::Writer::from_path(self.path(EVAL_FAMILIES_CSV))?;
        for r in &families {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    fn compare_modes(&self) -> Result<()> {
        let tasks = self.calibrated_tasks()?;
        let params = self.eval_params()?;
        let cmp = compare_modes(
            &params,
            &tasks,
            self.cfg.eval.samples_per_task,
            &self.streams("compare"),
        )?;
        write_eval_csv(&cmp.all_think, &self.path(COMPARE_ALL_THINK))?;
        write_eval_csv(&cmp.no_think, &self.path(COMPARE_NO_THINK))?;
        write_eval_csv(&cmp.adaptive, &self.path(COMPARE_ADAPTIVE))
    }

    fn optional<T>(&self, name: &str, load: impl FnOnce(&Path) -> Result<T>) -> Result<Option<T>> {
        let p = self.path(name);
        if p.exists() {
            load(&p).map(Some)
        } else {
            Ok(None)
        }
    }

    /// Collects the available artifacts into `report.json`.
    pub fn report(&self) -> Result<Report> {
        let json = |p: &Path| -> Result<_> { Ok(std::fs::read_to_string(p)?) };
        let last_log = |p: &Path| -> Result<Option<IterLog>> { Ok(jsonl::read::<IterLog>(p)?.pop()) };
        let compare_all = match (
            self.optional(COMPARE_ALL_THINK, read_eval_csv)?,
            self.optional(COMPARE_NO_THINK, read_eval_csv)?,
            self.optional(COMPARE_ADAPTIVE, read_eval_csv)?,
        ) {
            (Some(t), Some(n), Some(a)) => Some(CompareSummary {
                all_think: ModeComparison::overall(&t).clone(),
                no_think: ModeComparison::overall(&n).clone(),
                adaptive: ModeComparison::overall(&a).clone(),
            }),
            _ => None,
        };
        let report = Report {
            config_hash: self.cfg.hash(),
            seed: self.cfg.seed(),
            calibration: self
                .optional(CALIBRATION_REPORT, json)?
                .map(|s| serde_json::from_str(&s))
                .transpose()?,
            sft: self
                .optional(SFT_REPORT, json)?
                .map(|s| serde_json::from_str(&s))
                .transpose()?,
            filter: self
                .optional(FILTER_RECORDS, jsonl::read::<FilterRecord>)?
                .map(|r| FilterSummary {
                    candidates: r.len(),
                    retained: r.iter().filter(|r| r.retained).count(),
                }),
            grpo_final: self.optional(GRPO_LOG, last_log)?.flatten(),
            agrpo_final: self.optional(AGRPO_LOG, last_log)?.flatten(),
            eval_checkpoint: self.cfg.eval.checkpoint,
            eval: self.optional(EVAL_CSV, read_eval_csv)?,
            eval_families: self.optional(EVAL_FAMILIES_CSV, |p| {
                let mut r = csv::Reader::from_path(p)?;
                Ok(r.deserialize().collect::<std::result::Result<Vec<FamilyRow>, _>>()?)
            })?,
            compare_all,
        };
        std::fs::write(self.path(REPORT), serde_json::to_string_pretty(&report)? + "\n")?;
        Ok(report)
    }
}

/// Loads the corpora written by the `sft` stage.
pub fn load_corpora(dir: &Path) -> Result<(Vec<SftExample>, Vec<SftExample>)> {
    Ok((
        jsonl::read(&dir.join(CORPUS_COARSE))?,
        jsonl::read(&dir.join(CORPUS_PRECISE))?,
    ))
}
