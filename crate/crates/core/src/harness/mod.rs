//! Experiment orchestration: configuration, single runs with artifacts,
//! benchmark tables and the ε-rate and sparsity studies.

pub mod config;
pub mod experiments;
pub mod studies;

pub use config::{ExperimentConfig, Layout, LinearMode, Method};
pub use experiments::{
    report_file, run_single, run_table, solve_with, sparsity_fraction, table_cells,
    write_artifacts, write_history_csv, write_rows_csv, BenchmarkRow, HistoryRow, ReportFile,
    RunOutcome, TableId, SCHEMA_VERSION,
};
pub use studies::{
    h1_norm, loglog_slope, pair_h1_distance, rate_study, sparsity_study, RatePoint, RateStudy,
    SparsityRow, RATE_EPS_REF,
};
