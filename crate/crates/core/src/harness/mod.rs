//! Configuration, evaluation and the staged pipeline.

pub mod config;
pub mod eval;
pub mod pipeline;

pub use config::{Config, EvalCheckpoint, Stage};
pub use eval::{
    compare_modes, evaluate, evaluate_families, read_eval_csv, write_eval_csv, EvalRow, FamilyRow, ModeComparison,
    RowLevel,
};
pub use pipeline::{Pipeline, Report};
