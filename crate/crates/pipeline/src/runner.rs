//! Executes a DAG, skipping tasks whose inputs and parameters are unchanged.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use sha2::{Digest, Sha256};

use crate::dag::{Dag, Task};
use crate::ledger::{Ledger, LedgerEntry, RunLedger, TaskStatus};
use crate::lock::WorkspaceLock;
use crate::PipelineError;

pub const STATE_DIR: &str = ".noshow";
pub const LEDGER_FILE: &str = "ledger.json";
pub const LOCK_FILE: &str = "run.lock";

/// Paths handed to an executor for one task.
#[derive(Debug)]
pub struct TaskContext<'a> {
    pub task: &'a Task,
    pub root: &'a Path,
    /// Absolute input paths, in declaration order.
    pub inputs: Vec<PathBuf>,
    /// Where to write each output; renamed into place once the task succeeds.
    pub outputs: Vec<PathBuf>,
    /// Final locations of the outputs.
    pub final_outputs: Vec<PathBuf>,
}

impl TaskContext<'_> {
    pub fn input(&self, i: usize) -> Result<&Path, String> {
        self.inputs
            .get(i)
            .map(PathBuf::as_path)
            .ok_or_else(|| format!("task {:?} needs at least {} inputs", self.task.name, i + 1))
    }

    pub fn output(&self, i: usize) -> Result<&Path, String> {
        self.outputs
            .get(i)
            .map(PathBuf::as_path)
            .ok_or_else(|| format!("task {:?} needs at least {} outputs", self.task.name, i + 1))
    }
}

/// Runs the operation named by a task's `command`.
pub trait Executor {
    /// Writes every path in `ctx.outputs`. An error message becomes the
    /// task's diagnostics.
    fn execute(&self, ctx: &TaskContext<'_>) -> Result<(), String>;
}

impl<F: Fn(&TaskContext<'_>) -> Result<(), String>> Executor for F {
    fn execute(&self, ctx: &TaskContext<'_>) -> Result<(), String> {
        self(ctx)
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Folded into every task key, so a new build re-executes everything.
    pub code_version: String,
    /// Execute every task regardless of the ledger.
    pub force: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { code_version: crate::CODE_VERSION.to_string(), force: false }
    }
}

pub fn file_hash(path: &Path) -> io::Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

fn task_key(task: &Task, code_version: &str, inputs: &BTreeMap<String, String>) -> String {
    let mut h = Sha256::new();
    for part in [task.name.as_str(), task.command.as_str(), &task.params_json(), code_version] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    for (path, hash) in inputs {
        h.update((path.len() as u64).to_le_bytes());
        h.update(path.as_bytes());
        h.update(hash.as_bytes());
    }
    hex::encode(h.finalize())
}

fn partial_path(path: &Path) -> PathBuf {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("output");
    path.with_file_name(format!(".{name}.{}.partial", std::process::id()))
}

fn display(path: &Path) -> String {
    path.to_string_lossy().replace('\\', "/")
}

pub fn ledger_path(root: &Path) -> PathBuf {
    root.join(STATE_DIR).join(LEDGER_FILE)
}

/// Runs `dag` under its workspace lock and persists the ledger after every task.
///
/// A failed task blocks its descendants; independent branches still run.
/// Returns [`PipelineError::TaskFailed`] naming the first failure.
pub fn run(dag: &Dag, executor: &dyn Executor, opts: &RunOptions) -> Result<RunLedger, PipelineError> {
    let _lock = WorkspaceLock::acquire(&dag.root.join(STATE_DIR).join(LOCK_FILE))?;
    let ledger_file = ledger_path(&dag.root);
    let mut ledger = Ledger::load(&ledger_file)?;
    let mut run = RunLedger::default();
    let mut statuses: Vec<TaskStatus> = Vec::with_capacity(dag.tasks.len());

    for task in &dag.tasks {
        let started = Instant::now();
        let blocked = task.upstream.iter().any(|&u| !statuses[u].is_success());
        let entry = if blocked {
            LedgerEntry {
                task: task.name.clone(),
                status: TaskStatus::Blocked,
                key: String::new(),
                params_hash: task.params_hash(),
                input_hashes: BTreeMap::new(),
                output_hashes: BTreeMap::new(),
                wall_time_ms: 0,
                error: Some("an upstream task failed".into()),
            }
        } else {
            run_task(dag, task, executor, opts, &ledger, started)
        };
        statuses.push(entry.status);
        if entry.status != TaskStatus::Blocked {
            ledger.tasks.insert(task.name.clone(), entry.clone());
        }
        run.entries.push(entry);
        ledger.last_run = run.clone();
        ledger.save(&ledger_file)?;
    }

    match run.first_failure() {
        Some(f) => Err(PipelineError::TaskFailed {
            task: f.task.clone(),
            diagnostics: f.error.clone().unwrap_or_default(),
            ledger: Box::new(run),
        }),
        None => Ok(run),
    }
}

fn run_task(
    dag: &Dag,
    task: &Task,
    executor: &dyn Executor,
    opts: &RunOptions,
    ledger: &Ledger,
    started: Instant,
) -> LedgerEntry {
    let mut entry = LedgerEntry {
        task: task.name.clone(),
        status: TaskStatus::Failed,
        key: String::new(),
        params_hash: task.params_hash(),
        input_hashes: BTreeMap::new(),
        output_hashes: BTreeMap::new(),
        wall_time_ms: 0,
        error: None,
    };
    let fail = |mut entry: LedgerEntry, msg: String| {
        entry.status = TaskStatus::Failed;
        entry.error = Some(msg);
        entry.wall_time_ms = started.elapsed().as_millis() as u64;
        entry
    };

    for input in &task.inputs {
        match file_hash(&dag.resolve(input)) {
            Ok(h) => {
                entry.input_hashes.insert(display(input), h);
            }
            Err(e) => return fail(entry, format!("cannot read input {}: {e}", input.display())),
        }
    }
    entry.key = task_key(task, &opts.code_version, &entry.input_hashes);

    if !opts.force {
        if let Some(prev) = ledger.successful(&task.name) {
            let outputs_intact = task.outputs.iter().all(|o| {
                let recorded = prev.output_hashes.get(&display(o));
                recorded.is_some() && file_hash(&dag.resolve(o)).ok().as_ref() == recorded
            });
            if prev.key == entry.key && outputs_intact {
                entry.status = TaskStatus::Skipped;
                entry.output_hashes = prev.output_hashes.clone();
                entry.wall_time_ms = started.elapsed().as_millis() as u64;
                return entry;
            }
        }
    }

    let final_outputs: Vec<PathBuf> = task.outputs.iter().map(|o| dag.resolve(o)).collect();
    for out in &final_outputs {
        if let Some(dir) = out.parent() {
            if let Err(e) = fs::create_dir_all(dir) {
                return fail(entry, format!("cannot create {}: {e}", dir.display()));
            }
        }
    }
    let ctx = TaskContext {
        task,
        root: &dag.root,
        inputs: task.inputs.iter().map(|i| dag.resolve(i)).collect(),
        outputs: final_outputs.iter().map(|o| partial_path(o)).collect(),
        final_outputs: final_outputs.clone(),
    };
    let cleanup = |ctx: &TaskContext<'_>| {
        for p in &ctx.outputs {
            let _ = fs::remove_file(p);
        }
    };

    if let Err(msg) = executor.execute(&ctx) {
        cleanup(&ctx);
        return fail(entry, msg);
    }
    if let Some(missing) = ctx.outputs.iter().zip(&task.outputs).find(|(p, _)| !p.is_file()) {
        cleanup(&ctx);
        return fail(entry, format!("task did not write its output {}", missing.1.display()));
    }
    for (partial, (out, rel)) in ctx.outputs.iter().zip(final_outputs.iter().zip(&task.outputs)) {
        if let Err(e) = fs::rename(partial, out) {
            cleanup(&ctx);
            return fail(entry, format!("cannot move output into place: {e}"));
        }
        match file_hash(out) {
            Ok(h) => {
                entry.output_hashes.insert(display(rel), h);
            }
            Err(e) => return fail(entry, format!("cannot hash output {}: {e}", rel.display())),
        }
    }
    entry.status = TaskStatus::Executed;
    entry.wall_time_ms = started.elapsed().as_millis() as u64;
    entry
}

/// Tasks reachable from any task that reads one of `changed` (inclusive).
pub fn descendants_of_sources(dag: &Dag, changed: &[PathBuf]) -> Vec<String> {
    let mut hit = vec![false; dag.tasks.len()];
    for (i, t) in dag.tasks.iter().enumerate() {
        hit[i] = t.inputs.iter().any(|p| changed.contains(p)) || t.upstream.iter().any(|&u| hit[u]);
    }
    dag.tasks.iter().zip(hit).filter(|(_, h)| *h).map(|(t, _)| t.name.clone()).collect()
}
