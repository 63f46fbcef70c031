//! Experiment orchestration: configuration, data ingestion, replication
//! loops, metrics, and report output.

pub mod config;
pub mod csvdata;
pub mod metrics;
pub mod output;
pub mod run;

pub use config::{
    Centering, EstimatorChoice, ExperimentConfig, KRule, ScenarioKind, SchedulePoint,
    ThresholdChoice, VariantKind,
};
pub use csvdata::{load_csv_dataset, read_csv_table, split_table, CsvTable, Split, SplitData};
pub use metrics::{mse_sigma_norm, test_mse};
pub use output::{summary_json, write_records_csv, write_summary_json};
pub use run::{
    needs_reference, reference_rows, run_experiment, summarize_report, threshold_setup,
    CellSummary, ExperimentReport, ReplicationRecord, Status,
};
