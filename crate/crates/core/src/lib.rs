//! Adaptive think / no-think training on a synthetic task world.
//!
//! The crate trains a small tabular policy to decide, per query, whether to
//! emit a reasoning token before answering. The pipeline is:
//!
//! 1. [`taskworld`]: generate easy and hard tasks.
//! 2. [`calibration`]: label tasks L1-L5 from three reference tiers.
//! 3. [`sft`]: coarse (2:1 think) then precise (level-driven, 1:1) warm-up.
//! 4. [`rl`]: pass-rate filtering, then vanilla GRPO or Adaptive GRPO.
//! 5. [`harness`]: evaluation tables, mode comparisons, the CLI pipeline.
//!
//! The guide under `book/` walks through each stage; its code blocks are
//! compiled and run as doctests of this crate.

pub mod calibration;
pub mod error;
pub mod harness;
pub mod jsonl;
pub mod policy;
pub mod reward;
pub mod rl;
pub mod rng;
pub mod sft;
pub mod taskworld;

pub use error::{Error, Result};

#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/task-world.md")]
    mod task_world {}
    #[doc = include_str!("../../../book/src/policy.md")]
    mod policy {}
    #[doc = include_str!("../../../book/src/rewards.md")]
    mod rewards {}
    #[doc = include_str!("../../../book/src/calibration.md")]
    mod calibration {}
    #[doc = include_str!("../../../book/src/sft.md")]
    mod sft {}
    #[doc = include_str!("../../../book/src/grpo.md")]
    mod grpo {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    mod pipeline {}
}
