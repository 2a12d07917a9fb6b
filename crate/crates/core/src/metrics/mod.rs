//! AUC, per-step gradient telemetry, convergence summaries and result tables.

pub mod auc;
pub mod report;
pub mod telemetry;

pub use auc::auc;
pub use report::{read_eval_csv, result_table, write_eval_csv, EvalReport, ResultRow, ResultTable};
pub use telemetry::{
    convergence_summary, ConvergenceSummary, RunRecord, Telemetry, MIN_SUMMARY_STEPS, TELEMETRY_COLUMNS,
};
