//! Per-task run records, persisted as JSON in the workspace.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    /// Inputs, parameters and outputs matched the last successful run.
    Skipped,
    Executed,
    Failed,
    /// Not attempted because an upstream task failed.
    Blocked,
}

impl TaskStatus {
    pub fn is_success(self) -> bool {
        matches!(self, TaskStatus::Skipped | TaskStatus::Executed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub task: String,
    pub status: TaskStatus,
    /// Hash over task name, command, parameters, code version and input hashes.
    pub key: String,
    pub params_hash: String,
    pub input_hashes: BTreeMap<String, String>,
    pub output_hashes: BTreeMap<String, String>,
    pub wall_time_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// The outcome of one run, in execution order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunLedger {
    pub entries: Vec<LedgerEntry>,
}

impl RunLedger {
    pub fn status(&self, task: &str) -> Option<TaskStatus> {
        self.entries.iter().find(|e| e.task == task).map(|e| e.status)
    }

    pub fn with_status(&self, status: TaskStatus) -> Vec<&str> {
        self.entries.iter().filter(|e| e.status == status).map(|e| e.task.as_str()).collect()
    }

    pub fn executed(&self) -> Vec<&str> {
        self.with_status(TaskStatus::Executed)
    }

    pub fn all_skipped(&self) -> bool {
        self.entries.iter().all(|e| e.status == TaskStatus::Skipped)
    }

    pub fn first_failure(&self) -> Option<&LedgerEntry> {
        self.entries.iter().find(|e| e.status == TaskStatus::Failed)
    }
}

/// What the workspace remembers between runs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Ledger {
    /// Latest entry per task; only successful entries allow skipping.
    pub tasks: BTreeMap<String, LedgerEntry>,
    #[serde(default)]
    pub last_run: RunLedger,
}

impl Ledger {
    pub fn load(path: &Path) -> io::Result<Self> {
        match fs::read(path) {
            Ok(bytes) => serde_json::from_slice(&bytes).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(e),
        }
    }

    /// Atomic replace via a temporary file.
    pub fn save(&self, path: &Path) -> io::Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let tmp = path.with_extension("json.tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&serde_json::to_vec_pretty(self).expect("ledger serialises"))?;
            f.sync_all()?;
        }
        fs::rename(tmp, path)
    }

    pub fn successful(&self, task: &str) -> Option<&LedgerEntry> {
        self.tasks.get(task).filter(|e| e.status.is_success())
    }
}
