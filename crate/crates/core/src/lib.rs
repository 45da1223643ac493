//! Verifiable-reward engine and desk-scale GRPO trainer for 3D scene tasks.
//!
//! The crate is organized around the data path of a reinforcement-learning
//! run with rule-based verifiers:
//!
//! - [`geometry`] — oriented 3D boxes, rigid transforms, exact polytope-clipping
//!   IoU, and a Monte-Carlo IoU oracle used to verify the exact path.
//! - [`parser`] — the `<think>…</think><answer>…</answer>` response grammar and
//!   the task-specific answer schemas, plus the binary format reward.
//! - [`rewards`] — task rewards: detection (average max-IoU + F1), grounding
//!   (frame decay + global IoU), and reasoning (exact match + mean relative
//!   accuracy), composed with the format reward.
//! - [`grpo`] — group-normalized advantages, the clipped token-level surrogate,
//!   a nonnegative per-token KL estimator, the aggregate loss with analytic
//!   gradients, the chunked-loss identity, and the SFT warm-up loss.
//! - [`policy`] — a tabular categorical sequence policy over synthetic episodes
//!   that makes the SFT-then-GRPO pipeline reproducible on a desktop.
//! - [`eval`] — benchmark-protocol metrics: micro/per-class detection P/R/F1,
//!   grounding Acc@IoU, and reasoning accuracy, with versioned JSON reports.
//! - [`records`] — JSONL interchange formats shared by the CLI and library.

pub mod eval;
pub mod geometry;
pub mod grpo;
pub mod parser;
pub mod records;
pub mod rewards;

pub use geometry::{Box9DoF, RigidTransform};
