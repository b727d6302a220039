//! Config and checkpoint formats plus the train / eval / trials / export
//! commands built on them.

mod checkpoint;
mod commands;
mod config;
mod pipeline;

pub use checkpoint::{ArrayData, Checkpoint, NamedArray, MAGIC, VERSION};
pub use commands::{
    cmd_eval, cmd_export, cmd_train, cmd_trials, ExportKind, Stat, TrialsReport, AGGREGATE_FILE, CHECKPOINT_FILE,
    EMB_FILE, HIST_BINS, HIST_FILE, METRICS_FILE, RESOLVED_CONFIG_FILE, SCORES_FILE, SPLIT_FILE, TRAIN_LOG_FILE,
};
pub use config::{DatasetSpec, RunConfig, DATA_ROOT_ENV, FULL_EPOCHS, PRESET_TRIALS};
pub use pipeline::{
    evaluate, f1_openness_sweep, f1_row, from_checkpoint, metrics_report, to_checkpoint, train, trial_split,
    EpochRecord, Evaluation, Restored, RunData, TrainOutcome,
};
