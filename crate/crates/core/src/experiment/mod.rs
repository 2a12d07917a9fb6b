//! Experiment runs: configuration, the training loops, evaluation and the
//! commands behind the CLI.

pub mod config;
pub mod run;
pub mod train;

pub use config::{DatasetSource, ExperimentConfig, Overrides};
pub use run::{
    cmd_eval, cmd_gen_data, cmd_telemetry_summary, cmd_train, load_data, summarize, train_all, train_seed,
    GenDataManifest, LoadedData, RunOutcome, CHECKPOINT_FILE, CONFIG_FILE, EVAL_FILE, FAILURE_FILE, TELEMETRY_FILE,
};
pub use train::{evaluate, predict_all, EvalContext, Trainer};
