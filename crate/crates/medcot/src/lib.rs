//! `medcot` — an evaluation harness for multiple-choice medical question
//! answering with large language models.
//!
//! The library covers the full loop from question records to analysis
//! reports:
//!
//! - [`dataset`]: JSONL question ingestion, validation, label permutation
//!   and few-shot exemplar selection.
//! - [`prompting`]: byte-stable prompt rendering for direct, two-stage
//!   chain-of-thought (CoT), few-shot and retrieval-grounded prompts, plus
//!   the catalog of CoT cue phrases.
//! - [`llm`]: interchangeable completion providers (OpenAI-compatible HTTP,
//!   replay cache, seeded synthetic generator) with a content-addressed
//!   completion cache.
//! - [`extraction`]: parsing a sampled completion into at most one option
//!   label, with an explicit inconclusive outcome.
//! - [`aggregation`]: per-option answer likelihood over k samples,
//!   majority voting, multi-prompt ensembles, and subsample accuracy
//!   curves.
//! - [`retrieval`]: sliding-window passage chunking and a two-field Okapi
//!   BM25 index queried with a composite question/option score.
//! - [`metrics`]: accuracy with Bernoulli standard error, macro/micro F1,
//!   calibration bins and ECE, answering-bias chi-square tests, prompt
//!   agreement matrices, and annotation pattern frequencies.
//! - [`harness`]: experiment configuration, cached execution, resumable
//!   runs, ensembles over prompt grids, and report emission.
//!
//! Each capability has a runnable example under `examples/`; start with
//! `cargo run -p medcot --example synthetic_run`.

pub mod aggregation;
pub mod dataset;
pub mod error;
pub mod extraction;
pub mod harness;
pub mod llm;
pub mod metrics;
pub mod prompting;
pub mod retrieval;

pub use error::{Error, Result};
