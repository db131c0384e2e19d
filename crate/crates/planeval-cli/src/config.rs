//! Run configuration: one TOML file describing the suite, the experiment,
//! the agents, and execution.
//!
//! The parsed [`RunConfig`] is kept exactly as written, so echoing it into a
//! run manifest is byte-stable. Relative paths inside the file (output
//! directory, script and template directories) resolve against the config
//! file's own directory at use time, so a config behaves identically from
//! any working directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use planeval::agents::{LlmEndpointConfig, NoisyConfig, NoisyVerifier, ScriptMode};
use planeval::blocksworld::{MAX_BLOCKS, MIN_BLOCKS};
use planeval::orchestrator::{ExperimentMode, LoopConfig, DEFAULT_MAX_ITERATIONS};
use planeval::validator::FeedbackLevel;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read `{path}`: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config `{path}`: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub suite: SuiteSection,
    pub experiment: ExperimentSection,
    pub execution: ExecutionSection,
    pub generator: AgentSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verifier: Option<AgentSection>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteSection {
    pub count: usize,
    pub n_blocks: usize,
    pub master_seed: u64,
}

fn default_max_iterations() -> usize {
    DEFAULT_MAX_ITERATIONS
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub mode: ExperimentMode,
    pub feedback_level: FeedbackLevel,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    pub seed: u64,
    #[serde(default)]
    pub accumulate_history: bool,
}

fn default_parallelism() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExecutionSection {
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    pub out_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_dir: Option<PathBuf>,
}

/// One agent, externally tagged: `[generator.llm]`, `[verifier.sound]`, and
/// so on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentSection {
    Llm(LlmEndpointConfig),
    Scripted(ScriptedSection),
    Sound(SoundSection),
    Noisy(NoisySection),
}

impl AgentSection {
    fn kind(&self) -> &'static str {
        match self {
            AgentSection::Llm(_) => "llm",
            AgentSection::Scripted(_) => "scripted",
            AgentSection::Sound(_) => "sound",
            AgentSection::Noisy(_) => "noisy",
        }
    }
}

/// Replays per-instance scripts named `<instance_id>.gen.jsonl` (generator)
/// or `<instance_id>.ver.jsonl` (verifier) under `script_dir`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedSection {
    pub script_dir: PathBuf,
    #[serde(default)]
    pub mode: ScriptMode,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SoundSection {}

/// Rates for the synthetic unsound verifier. Its per-instance seed derives
/// from the experiment seed and the instance id, never from config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoisySection {
    pub false_positive_rate: f64,
    pub false_negative_rate: f64,
}

/// A validated config plus the directory its relative paths resolve against.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: RunConfig,
    base: PathBuf,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<LoadedConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_owned(),
            source,
        })?;
        let config: RunConfig = toml::from_str(&text).map_err(|err| ConfigError::Parse {
            path: path.to_owned(),
            message: err.to_string(),
        })?;
        config.validate()?;
        let base = match path.parent() {
            Some(parent) if !parent.as_os_str().is_empty() => parent.to_owned(),
            _ => PathBuf::from("."),
        };
        Ok(LoadedConfig { config, base })
    }

    pub fn out_dir(&self) -> PathBuf {
        self.base.join(&self.config.execution.out_dir)
    }

    pub fn template_dir(&self) -> Option<PathBuf> {
        self.config
            .execution
            .template_dir
            .as_ref()
            .map(|dir| self.base.join(dir))
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        self.base.join(path)
    }
}

impl RunConfig {
    pub fn loop_config(&self) -> LoopConfig {
        LoopConfig {
            mode: self.experiment.mode,
            feedback_level: self.experiment.feedback_level,
            max_iterations: self.experiment.max_iterations,
            seed: self.experiment.seed,
            accumulate_history: self.experiment.accumulate_history,
        }
    }

    /// Structural checks that need no filesystem access: section presence
    /// and agent kinds must agree with the experiment mode.
    fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |message: String| Err(ConfigError::Invalid(message));
        if self.suite.count == 0 {
            return invalid("suite.count must be at least 1".to_owned());
        }
        if !(MIN_BLOCKS..=MAX_BLOCKS).contains(&self.suite.n_blocks) {
            return invalid(format!(
                "suite.n_blocks must lie in {MIN_BLOCKS}..={MAX_BLOCKS}, got {}",
                self.suite.n_blocks
            ));
        }
        if self.experiment.max_iterations == 0 {
            return invalid("experiment.max_iterations must be at least 1".to_owned());
        }
        if self.execution.parallelism == 0 {
            return invalid("execution.parallelism must be at least 1".to_owned());
        }
        if !matches!(
            self.generator,
            AgentSection::Llm(_) | AgentSection::Scripted(_)
        ) {
            return invalid(format!(
                "the generator must be an llm or scripted agent, got {}",
                self.generator.kind()
            ));
        }
        match (self.experiment.mode, &self.verifier) {
            (ExperimentMode::GeneratorOnly, None) => {}
            (ExperimentMode::GeneratorOnly, Some(v)) => {
                return invalid(format!(
                    "mode generator_only takes no verifier section, got {}",
                    v.kind()
                ));
            }
            (ExperimentMode::LlmPlusLlm, Some(AgentSection::Llm(_)))
            | (ExperimentMode::LlmPlusLlm, Some(AgentSection::Scripted(_))) => {}
            (ExperimentMode::LlmPlusSound, Some(AgentSection::Sound(_))) => {}
            (ExperimentMode::LlmPlusNoisy, Some(AgentSection::Noisy(section))) => {
                // Rates are range-checked by the verifier constructor; fail
                // here, before any instance runs.
                NoisyVerifier::new(NoisyConfig {
                    false_positive_rate: section.false_positive_rate,
                    false_negative_rate: section.false_negative_rate,
                    seed: 0,
                })
                .map_err(|err| ConfigError::Invalid(format!("verifier.noisy: {err}")))?;
            }
            (mode, Some(v)) => {
                return invalid(format!(
                    "mode {mode} does not accept a {} verifier",
                    v.kind()
                ));
            }
            (mode, None) => {
                return invalid(format!("mode {mode} requires a verifier section"));
            }
        }
        Ok(())
    }
}
