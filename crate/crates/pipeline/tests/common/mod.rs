#![allow(dead_code)]

use std::collections::{BTreeSet, VecDeque};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use noshow_pipeline::{Dag, PipelineConfig, TaskContext, TaskSpec};

pub fn spec(name: &str, inputs: &[&str], outputs: &[&str]) -> TaskSpec {
    TaskSpec {
        name: name.into(),
        command: "concat".into(),
        inputs: inputs.iter().map(PathBuf::from).collect(),
        outputs: outputs.iter().map(PathBuf::from).collect(),
        depends_on: vec![],
        params: toml::Table::new(),
    }
}

/// Two independent chains joined at the end:
/// a.txt -> a1 -> a2 \
///                    join
/// b.txt -> b1 -> b2 /
pub fn two_branch(root: &Path) -> PipelineConfig {
    fs::write(root.join("a.txt"), "alpha\n").unwrap();
    fs::write(root.join("b.txt"), "beta\n").unwrap();
    PipelineConfig {
        tasks: vec![
            spec("a1", &["a.txt"], &["out/a1.txt"]),
            spec("b1", &["b.txt"], &["out/b1.txt"]),
            spec("a2", &["out/a1.txt"], &["out/a2.txt"]),
            spec("b2", &["out/b1.txt"], &["out/b2.txt"]),
            spec("join", &["out/a2.txt", "out/b2.txt"], &["out/join.txt"]),
        ],
    }
}

/// Concatenates inputs and parameters into every output, recording calls.
#[derive(Default)]
pub struct Concat {
    pub calls: Mutex<Vec<String>>,
    pub fail: Mutex<Option<String>>,
}

impl Concat {
    pub fn calls(&self) -> Vec<String> {
        self.calls.lock().unwrap().clone()
    }

    pub fn reset(&self) {
        self.calls.lock().unwrap().clear();
    }

    pub fn run(&self, ctx: &TaskContext<'_>) -> Result<(), String> {
        self.calls.lock().unwrap().push(ctx.task.name.clone());
        if self.fail.lock().unwrap().as_deref() == Some(ctx.task.name.as_str()) {
            return Err(format!("{} exploded", ctx.task.name));
        }
        let mut body = format!("[{}] {}\n", ctx.task.name, ctx.task.params_json());
        for input in &ctx.inputs {
            body.push_str(&fs::read_to_string(input).map_err(|e| e.to_string())?);
        }
        for out in &ctx.outputs {
            fs::write(out, &body).map_err(|e| e.to_string())?;
        }
        Ok(())
    }
}

/// Tasks reachable from the readers of `changed`, by breadth-first search
/// over the config's file edges.
pub fn reachable(config: &PipelineConfig, changed: &str) -> BTreeSet<String> {
    let mut seen = BTreeSet::new();
    let mut queue: VecDeque<PathBuf> = VecDeque::from([PathBuf::from(changed)]);
    while let Some(file) = queue.pop_front() {
        for t in config.tasks.iter().filter(|t| t.inputs.contains(&file)) {
            if seen.insert(t.name.clone()) {
                queue.extend(t.outputs.iter().cloned());
            }
        }
    }
    seen
}

pub fn snapshot_outputs(dag: &Dag) -> Vec<(String, Vec<u8>)> {
    dag.tasks
        .iter()
        .flat_map(|t| t.outputs.iter())
        .map(|o| (o.display().to_string(), fs::read(dag.resolve(o)).unwrap()))
        .collect()
}
