//! The `ldmdn` command line: dataset synthesis, training, evaluation,
//! network-free recovery and diagnostics, all driven by one [`RunConfig`].

mod args;
mod commands;
mod config;
pub mod diag;
mod error;

pub use args::{run, Cli, Command};
pub use commands::{
    cmd_diag, cmd_eval, cmd_recover, cmd_synth, cmd_train, smooth_phantom, RecoverSummary, TrainSummary,
};
pub use config::{
    DiagSection, GeometrySection, KernelSection, Paths, RecoverSection, RunConfig, ScanSection, SynthSection,
    TrainSection, OUTPUT_ROOT_ENV,
};
pub use error::{CliError, Result};
