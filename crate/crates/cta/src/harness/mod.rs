//! Evaluation protocols, reports, seed aggregation, and artifact emission.

pub mod chart;
pub mod csv;
pub mod protocol;
pub mod report;

pub use chart::{confidence_chart, long_term_chart, sweep_chart, MAX_CHART_SAMPLES};
pub use csv::{aggregate_csv, results_csv, sweep_csv, telemetry_csv};
pub use protocol::{
    ProtocolKind, ProtocolRun, ProtocolSpec, SweepReport, SweepRow, DEFAULT_BATCH_SIZE,
    DEFAULT_SEED_REPLICAS, DEFAULT_SWEEP_BATCH_SIZES, SWEEP_SOURCE_VAL,
};
pub use report::{
    aggregate_seeds, AggregateReport, AggregateStage, BatchTelemetry, ForgetRate, RunReport,
    StageScore, STAGE_SOURCE_POST, STAGE_SOURCE_PRE,
};
