//! Experiment configuration, the deterministic run loop, the method
//! comparison protocol, metrics files and the command line.

pub mod cli;
mod compare;
mod config;
mod metrics;
mod run;

pub use compare::{
    compare_methods, mean_std, AlphaOverride, Cell, CellStatus, ComparisonPlan, ComparisonSummary,
    MethodSummary, CELLS_TSV, SUMMARY_MD, SUMMARY_TSV,
};
pub use config::{
    ConfigMap, DataSpec, DiagConfig, ExperimentConfig, FgCadence, ObjectiveSpec, Seeds, KEYS,
    SEED_SETS,
};
pub use metrics::{
    file_digest, read_metrics, Header, Metrics, MetricsWriter, Status, StepRecord, TerminalRecord,
    SCHEMA, STEP_FIELDS, VERSION,
};
pub use run::{
    diagnose, probe_checkpoint, run_experiment, setup, Checkpoint, Due, RunOutcome, Setup,
    CHECKPOINT_FILE, CONFIG_FILE, DATASET_FILE, DIGEST_FILE, DIVERGENCE_LOSS, DIVERGENCE_PATIENCE,
    METRICS_FILE,
};
