//! Experiment orchestration: configuration, cached execution, grids and
//! report emission.
//!
//! A run directory is self-describing and diff-able:
//!
//! ```text
//! <output_dir>/
//!   config.json     # the exact configuration, canonical form
//!   cache.jsonl     # every completion fetched, replayable
//!   results.jsonl   # one QuestionResult per question, sorted by id
//!   summary.json    # accuracy, F1, bias, calibration; "final": true
//!   reports/        # CSV / markdown reports on demand
//! ```
//!
//! Interrupted runs leave `"final": false` summaries behind; re-running the
//! same config resumes from the cache and converges to byte-identical final
//! output.

mod config;
mod grid;
mod report;
mod run;

pub use config::{
    DatasetConfig, ExperimentConfig, GroundingConfig, ShotConfig, SubsampleConfig, SubsampleMode,
};
pub use grid::{run_grid, GridOutcome, GridRunEntry};
pub use report::{
    read_results, read_summary, write_reports, ReportKind, SubsampleOptions, REPORT_KINDS,
};
pub use run::{run, warm, CompletionOutcome, QuestionResult, RunSummary};
