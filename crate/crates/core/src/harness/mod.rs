//! Experiment orchestration: configuration, scheme construction, metrics and
//! persistence.

pub mod experiment;
pub mod metrics;

pub use experiment::{
    aggregate, load_summary, parse_csv, records_to_csv, run_experiment, run_sweep, simulate_baseline_group, simulate_cell,
    summarize, sweep_cells, utility_table, write_cell, CellFiles, CellResult, CellSummary, CellTiming, ExperimentConfig,
    MetricWindows, SchemeAggregate, SchemeId, SweepAggregate, SweepConfig, UtilityTable, CSV_HEADER, UTILITY_WEIGHTS,
};
pub use metrics::{convergence_sd, moving_average, utility_score, MetricRecord, UtilityAttributes};
