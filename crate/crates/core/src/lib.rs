//! Exam-based evaluation of retrieval and generation systems.
//!
//! The pipeline has three phases:
//!
//! 1. [`question_bank`]: build a per-query exam, by generating questions
//!    with a language model or by loading a curated bank.
//! 2. [`grader`]: ask every exam question against every pooled passage and
//!    record whether it was answered ([`model::Grade`]).
//! 3. [`metrics`]: score systems with EXAM Cover (fraction of questions
//!    answerable from the top passages) and EXAM Qrels (passage relevance
//!    labels derived from answerability, scored with Precision@k), then
//!    compare leaderboards and measure agreement with official judgments.

pub mod error;
pub mod formats;
pub mod gateway;
pub mod grader;
pub mod metrics;
pub mod model;
pub mod question_bank;
pub mod text;

pub use error::{Error, Result};
