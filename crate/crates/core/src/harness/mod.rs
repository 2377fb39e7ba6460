//! Seeded multi-replication experiments, metrics, and CSV/JSON artifacts.

mod experiment;
mod metrics;
mod protocols;
mod stats;

pub use experiment::{
    fmt_float, replication_seed, run_experiment, write_artifacts, ExperimentConfig,
    ExperimentOutcome, ReplicationResult, RunResult,
};
pub use metrics::{error_ratio_series, mse, total_cost};
pub use protocols::{
    compare_controllers, run_protocol, sweep_grid, sweep_moments, table1, table2, theory_check,
    write_comparison, ApproxSweep, ComparisonReport, Protocol, ProtocolOutcome, RunConfig,
    Table1Config, Table1Row, Table2Case, Table2Config, Table2Row, TheoryCheckConfig, TheoryReport,
};
pub use stats::{boxplot, mean_std, quantile, BoxplotStats, SummaryStats};
