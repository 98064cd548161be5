use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use noshow_core::datagen::GeneratorConfig;
use noshow_core::ingest::DEFAULT_PSEUDO_COUNT;
use noshow_core::model::{FitOptions, ForestHyperparams};
use noshow_core::schema::ClinicCalendar;
use noshow_pipeline::{PipelineConfig, StandardLayout, TaskSpec};
use serde::Deserialize;

/// Name looked up in the workspace when `--config` is not given.
pub const DEFAULT_CONFIG: &str = "noshow.toml";

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub generator: GeneratorConfig,
    pub forest: ForestHyperparams,
    pub fit: FitOptions,
    pub pipeline: PipelineSection,
    pub simulate: SimulateSection,
    pub serve: ServeSection,
    /// Replaces the standard pipeline when present.
    #[serde(rename = "task")]
    pub tasks: Vec<TaskSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub export: PathBuf,
    pub mapping: Option<PathBuf>,
    pub model: PathBuf,
    pub work_dir: PathBuf,
    pub publish_dir: PathBuf,
    pub pseudo_count: f64,
    pub evaluate: bool,
    pub calendar: ClinicCalendar,
}

impl Default for PipelineSection {
    fn default() -> Self {
        let layout = StandardLayout::default();
        Self {
            export: layout.export,
            mapping: layout.mapping,
            model: layout.model,
            work_dir: layout.work_dir,
            publish_dir: layout.publish_dir,
            pseudo_count: DEFAULT_PSEUDO_COUNT,
            evaluate: false,
            calendar: ClinicCalendar::default(),
        }
    }
}

impl PipelineSection {
    pub fn layout(&self) -> StandardLayout {
        StandardLayout {
            export: self.export.clone(),
            mapping: self.mapping.clone(),
            model: self.model.clone(),
            work_dir: self.work_dir.clone(),
            publish_dir: self.publish_dir.clone(),
            calendar: self.calendar.clone(),
            pseudo_count: self.pseudo_count,
            evaluate: self.evaluate,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub policies: Vec<String>,
    pub replications: usize,
    pub seed: u64,
    /// Scores with this model; without one the historical-rate baseline is used.
    pub model: Option<PathBuf>,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            policies: ["no_overbook", "baseline_rate_floor", "model_expectation_floor", "oracle_floor"]
                .map(String::from)
                .to_vec(),
            replications: 200,
            seed: 99,
            model: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeSection {
    pub bind: String,
    pub port: u16,
    pub poll_ms: u64,
}

impl Default for ServeSection {
    fn default() -> Self {
        Self { bind: "127.0.0.1".into(), port: 8080, poll_ms: 2000 }
    }
}

impl AppConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: AppConfig = toml::from_str(text)?;
        cfg.generator.validate().context("[generator]")?;
        cfg.pipeline.calendar.validate().map_err(anyhow::Error::msg).context("[pipeline.calendar]")?;
        Ok(cfg)
    }

    /// Reads `explicit`, or the workspace default file if it exists.
    pub fn load(explicit: Option<&Path>, workspace: &Path) -> Result<Self> {
        let path = match explicit {
            Some(p) => p.to_path_buf(),
            None => {
                let p = workspace.join(DEFAULT_CONFIG);
                if !p.exists() {
                    return Ok(Self::default());
                }
                p
            }
        };
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn override_seed(&mut self, seed: u64) {
        self.generator.seed = seed;
        self.forest.seed = seed;
        self.simulate.seed = seed;
    }

    pub fn pipeline_config(&self) -> Result<PipelineConfig> {
        if self.tasks.is_empty() {
            return Ok(noshow_pipeline::standard_config(&self.pipeline.layout()));
        }
        if self.tasks.iter().any(|t| t.name.is_empty()) {
            bail!("every [[task]] needs a name");
        }
        Ok(PipelineConfig { tasks: self.tasks.clone() })
    }
}
