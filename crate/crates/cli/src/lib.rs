//! Scenario sweeps, result tables and figure exports around `cfn-core`.

// Range checks are written `!(x >= lo)` so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod report;
pub mod runner;
pub mod scenario;

pub use report::{export_figures, summarize, SummaryReport};
pub use runner::{load_rows, run_scenario, Approach, ResultRow, RunOptions};
pub use scenario::{InputMode, Scenario};
