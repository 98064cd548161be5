//! Task declarations and their dependency graph.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::PipelineError;

/// One `[[task]]` entry of a pipeline config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub name: String,
    /// Operation the executor runs, e.g. `ingest`.
    pub command: String,
    #[serde(default)]
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    /// Extra ordering constraints beyond those implied by file dependencies.
    #[serde(default)]
    pub depends_on: Vec<String>,
    #[serde(default)]
    pub params: toml::Table,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    #[serde(default, rename = "task")]
    pub tasks: Vec<TaskSpec>,
}

impl PipelineConfig {
    /// Reads the `[[task]]` array of a TOML document; other tables are ignored.
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        #[derive(Deserialize)]
        struct Doc {
            #[serde(default)]
            task: Vec<TaskSpec>,
        }
        let doc: Doc = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(Self { tasks: doc.task })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("pipeline config serialises")
    }
}

/// A task with its dependencies resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub name: String,
    pub command: String,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub params: toml::Table,
    /// Indices of the tasks this one depends on, in the DAG's task order.
    pub upstream: Vec<usize>,
}

impl Task {
    /// Parameters as canonical JSON (keys sorted).
    pub fn params_json(&self) -> String {
        serde_json::to_string(&self.params).expect("params serialise")
    }

    pub fn params_hash(&self) -> String {
        hex::encode(Sha256::digest(self.params_json()))
    }

    pub fn param_str(&self, key: &str) -> Option<&str> {
        self.params.get(key).and_then(|v| v.as_str())
    }

    pub fn param_f64(&self, key: &str) -> Option<f64> {
        self.params.get(key).and_then(|v| v.as_float().or_else(|| v.as_integer().map(|i| i as f64)))
    }

    pub fn param_int(&self, key: &str) -> Option<i64> {
        self.params.get(key).and_then(|v| v.as_integer())
    }
}

/// Tasks in a topological order under a workspace root.
#[derive(Debug, Clone)]
pub struct Dag {
    pub root: PathBuf,
    pub tasks: Vec<Task>,
}

impl Dag {
    pub fn task(&self, name: &str) -> Option<&Task> {
        self.tasks.iter().find(|t| t.name == name)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.tasks.iter().position(|t| t.name == name)
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        self.root.join(path)
    }

    /// Source files: inputs not produced by any task.
    pub fn sources(&self) -> Vec<PathBuf> {
        let produced: Vec<&PathBuf> = self.tasks.iter().flat_map(|t| &t.outputs).collect();
        let mut out: Vec<PathBuf> = self
            .tasks
            .iter()
            .flat_map(|t| &t.inputs)
            .filter(|p| !produced.contains(p))
            .cloned()
            .collect();
        out.sort();
        out.dedup();
        out
    }
}

/// Reads a config file and builds its DAG rooted at `root`.
pub fn build_dag(config_path: &Path, root: &Path) -> Result<Dag, PipelineError> {
    let text = std::fs::read_to_string(config_path)
        .map_err(|e| PipelineError::Config(format!("{}: {e}", config_path.display())))?;
    Dag::from_config(&PipelineConfig::from_toml(&text)?, root)
}

impl Dag {
    /// Resolves dependencies and orders tasks topologically. Among tasks
    /// that are ready at the same time, declaration order wins.
    pub fn from_config(config: &PipelineConfig, root: &Path) -> Result<Dag, PipelineError> {
        let specs = &config.tasks;
        let mut by_name = HashMap::new();
        for (i, t) in specs.iter().enumerate() {
            if t.name.is_empty() {
                return Err(PipelineError::Config(format!("task #{} has no name", i + 1)));
            }
            if by_name.insert(t.name.as_str(), i).is_some() {
                return Err(PipelineError::Config(format!("task {:?} is declared twice", t.name)));
            }
            if t.outputs.is_empty() {
                return Err(PipelineError::Config(format!("task {:?} declares no outputs", t.name)));
            }
        }
        let mut producer: HashMap<&Path, usize> = HashMap::new();
        for (i, t) in specs.iter().enumerate() {
            for out in &t.outputs {
                if let Some(j) = producer.insert(out.as_path(), i) {
                    return Err(PipelineError::Config(format!(
                        "{} is an output of both {:?} and {:?}",
                        out.display(),
                        specs[j].name,
                        t.name
                    )));
                }
            }
        }

        let mut upstream: Vec<Vec<usize>> = vec![Vec::new(); specs.len()];
        for (i, t) in specs.iter().enumerate() {
            for input in &t.inputs {
                match producer.get(input.as_path()) {
                    Some(&j) => upstream[i].push(j),
                    None if root.join(input).exists() => {}
                    None => {
                        return Err(PipelineError::MissingSource { task: t.name.clone(), path: input.clone() })
                    }
                }
            }
            for dep in &t.depends_on {
                let j = *by_name
                    .get(dep.as_str())
                    .ok_or_else(|| PipelineError::Config(format!("task {:?} depends on unknown task {dep:?}", t.name)))?;
                upstream[i].push(j);
            }
            upstream[i].sort();
            upstream[i].dedup();
        }

        // Kahn's algorithm; the queue is kept in declaration order.
        let mut indegree: Vec<usize> = upstream.iter().map(Vec::len).collect();
        let mut downstream: Vec<Vec<usize>> = vec![Vec::new(); specs.len()];
        for (i, ups) in upstream.iter().enumerate() {
            for &j in ups {
                downstream[j].push(i);
            }
        }
        let mut ready: VecDeque<usize> = (0..specs.len()).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(specs.len());
        while let Some(i) = ready.pop_front() {
            order.push(i);
            for &k in &downstream[i] {
                indegree[k] -= 1;
                if indegree[k] == 0 {
                    let pos = ready.partition_point(|&r| r < k);
                    ready.insert(pos, k);
                }
            }
        }
        if order.len() < specs.len() {
            let mut stuck: Vec<String> =
                (0..specs.len()).filter(|&i| indegree[i] > 0).map(|i| specs[i].name.clone()).collect();
            stuck.sort();
            return Err(PipelineError::CyclicDependency(stuck));
        }

        let position: BTreeMap<usize, usize> = order.iter().enumerate().map(|(pos, &i)| (i, pos)).collect();
        let tasks = order
            .iter()
            .map(|&i| {
                let t = &specs[i];
                let mut ups: Vec<usize> = upstream[i].iter().map(|j| position[j]).collect();
                ups.sort();
                Task {
                    name: t.name.clone(),
                    command: t.command.clone(),
                    inputs: t.inputs.clone(),
                    outputs: t.outputs.clone(),
                    params: t.params.clone(),
                    upstream: ups,
                }
            })
            .collect();
        Ok(Dag { root: root.to_path_buf(), tasks })
    }
}
