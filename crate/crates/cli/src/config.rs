use std::path::{Path, PathBuf};

use adi_core::llm::{LlmBackend, NullBackend, RemoteBackend, RemoteConfig, ScriptedBackend};
use adi_core::planner::PlannerConfig;
use adi_core::synth::SynthConfig;
use adi_core::toolkit::ToolConfig;
use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Remote,
    Scripted,
    #[default]
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlannerChoice {
    /// Rule-based without a backend, the language-model planner otherwise.
    #[default]
    Auto,
    RuleBased,
    Llm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummarizerChoice {
    #[default]
    Template,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ScriptedConfig {
    /// JSON file of the form `{"responses": {"<key>": "<completion>"}}`.
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentSection {
    pub planner: PlannerChoice,
    pub summarizer: SummarizerChoice,
    pub summary_temperature: f64,
    /// Grade answers with the backend as a judge.
    pub judge: bool,
}

impl Default for AgentSection {
    fn default() -> Self {
        Self { planner: PlannerChoice::Auto, summarizer: SummarizerChoice::Template, summary_temperature: 0.0, judge: false }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct AppConfig {
    pub backend: BackendKind,
    /// Worker threads for evaluation and synthesis; 0 picks a default.
    pub jobs: usize,
    pub remote: RemoteConfig,
    pub scripted: ScriptedConfig,
    pub planner: PlannerConfig,
    pub tools: ToolConfig,
    pub agent: AgentSection,
    pub synth: SynthConfig,
}

impl AppConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut config: AppConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        // Relative paths inside the config are relative to the config file.
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        if let Some(p) = &config.scripted.path {
            config.scripted.path = Some(base.join(p));
        }
        if let Some(p) = &config.tools.adapter_dir {
            config.tools.adapter_dir = Some(base.join(p));
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        match self.backend {
            BackendKind::Remote if self.remote.url.trim().is_empty() => bail!("remote backend requires remote.url"),
            BackendKind::Scripted if self.scripted.path.is_none() => bail!("scripted backend requires scripted.path"),
            _ => {}
        }
        self.planner.validate().map_err(anyhow::Error::msg)?;
        self.tools.validate().map_err(anyhow::Error::msg)?;
        if !(0.0..=2.0).contains(&self.agent.summary_temperature) {
            bail!("agent.summary_temperature must lie in [0, 2]");
        }
        if self.backend == BackendKind::None {
            if self.agent.planner == PlannerChoice::Llm {
                bail!("agent.planner = \"llm\" needs a backend");
            }
            if self.agent.summarizer == SummarizerChoice::Llm {
                bail!("agent.summarizer = \"llm\" needs a backend");
            }
            if self.agent.judge {
                bail!("agent.judge needs a backend");
            }
        }
        Ok(())
    }

    pub fn backend(&self) -> Result<Box<dyn LlmBackend>> {
        Ok(match self.backend {
            BackendKind::None => Box::new(NullBackend),
            BackendKind::Remote => Box::new(RemoteBackend::new(self.remote.clone())),
            BackendKind::Scripted => {
                let path = self.scripted.path.as_deref().context("scripted backend requires scripted.path")?;
                Box::new(ScriptedBackend::from_file(path)?)
            }
        })
    }

    pub fn uses_llm_planner(&self) -> bool {
        match self.agent.planner {
            PlannerChoice::Auto => self.backend != BackendKind::None,
            PlannerChoice::RuleBased => false,
            PlannerChoice::Llm => true,
        }
    }
}
