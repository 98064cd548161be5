//! Dependency-aware, content-addressed task runner.
//!
//! A pipeline is a list of tasks reading and writing files under a workspace
//! root. A task re-executes only when its inputs, parameters or the code
//! version changed, or when its recorded outputs were altered.

pub mod dag;
pub mod ledger;
pub mod lock;
pub mod runner;
pub mod stages;

use std::path::PathBuf;

use thiserror::Error;

pub use dag::{build_dag, Dag, PipelineConfig, Task, TaskSpec};
pub use ledger::{Ledger, LedgerEntry, RunLedger, TaskStatus};
pub use runner::{run, Executor, RunOptions, TaskContext};
pub use stages::{standard_config, StandardExecutor, StandardLayout};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid pipeline config: {0}")]
    Config(String),
    #[error("dependency cycle among tasks: {}", .0.join(", "))]
    CyclicDependency(Vec<String>),
    #[error("task {task:?} reads {path:?}, which is neither a file nor another task's output")]
    MissingSource { task: String, path: PathBuf },
    #[error("task {task} failed: {diagnostics}")]
    TaskFailed { task: String, diagnostics: String, ledger: Box<RunLedger> },
    #[error("workspace is locked by {holder:?} ({path:?})")]
    WorkspaceLocked { path: PathBuf, holder: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
