//! Builds per-instance agents from the config's agent sections.

use std::path::PathBuf;

use planeval::agents::{
    derive_instance_seed, AgentError, Generator, LlmClient, LlmGenerator, LlmVerifier,
    NoisyConfig, NoisyVerifier, Script, ScriptMode, ScriptedGenerator, ScriptedVerifier,
    SoundVerifier, Verifier,
};
use planeval::blocksworld::InstanceSpec;
use planeval::orchestrator::AgentFactory;
use planeval::prompt::TemplateSet;

use crate::config::{AgentSection, LoadedConfig};

/// One agent's runtime form. LLM endpoints share a single client (and its
/// concurrency gate); scripted agents load one script file per instance.
enum AgentSpec {
    Llm(LlmClient),
    Scripted { dir: PathBuf, mode: ScriptMode },
    Sound,
    Noisy {
        false_positive_rate: f64,
        false_negative_rate: f64,
    },
}

impl AgentSpec {
    /// Resolves a section, performing the startup work that should fail
    /// before any instance runs: constructing the HTTP client (which reads
    /// the API key) and checking that a script directory exists.
    fn build(section: &AgentSection, loaded: &LoadedConfig) -> Result<AgentSpec, AgentError> {
        match section {
            AgentSection::Llm(endpoint) => Ok(AgentSpec::Llm(LlmClient::new(endpoint.clone())?)),
            AgentSection::Scripted(scripted) => {
                let dir = loaded.resolve(&scripted.script_dir);
                if !dir.is_dir() {
                    return Err(AgentError::InvalidConfig(format!(
                        "script directory `{}` does not exist",
                        dir.display()
                    )));
                }
                Ok(AgentSpec::Scripted {
                    dir,
                    mode: scripted.mode,
                })
            }
            AgentSection::Sound(_) => Ok(AgentSpec::Sound),
            AgentSection::Noisy(noisy) => Ok(AgentSpec::Noisy {
                false_positive_rate: noisy.false_positive_rate,
                false_negative_rate: noisy.false_negative_rate,
            }),
        }
    }

    fn script(&self, file_name: String) -> Result<Script, AgentError> {
        match self {
            AgentSpec::Scripted { dir, mode } => Script::from_jsonl(&dir.join(file_name), *mode),
            _ => unreachable!("script() is only called on scripted agents"),
        }
    }
}

pub struct CliAgentFactory {
    generator: AgentSpec,
    verifier: Option<AgentSpec>,
    templates: TemplateSet,
    run_seed: u64,
}

impl CliAgentFactory {
    pub fn new(loaded: &LoadedConfig, templates: TemplateSet) -> Result<Self, AgentError> {
        let generator = AgentSpec::build(&loaded.config.generator, loaded)?;
        let verifier = loaded
            .config
            .verifier
            .as_ref()
            .map(|section| AgentSpec::build(section, loaded))
            .transpose()?;
        Ok(CliAgentFactory {
            generator,
            verifier,
            templates,
            run_seed: loaded.config.experiment.seed,
        })
    }
}

impl AgentFactory for CliAgentFactory {
    fn generator(&self, instance: &InstanceSpec) -> Result<Box<dyn Generator>, AgentError> {
        match &self.generator {
            AgentSpec::Llm(client) => Ok(Box::new(LlmGenerator::new(client.clone()))),
            AgentSpec::Scripted { .. } => {
                let script = self.generator.script(format!("{}.gen.jsonl", instance.id))?;
                Ok(Box::new(ScriptedGenerator::new(script)))
            }
            _ => Err(AgentError::InvalidConfig(
                "a verifier-kind agent cannot generate plans".to_owned(),
            )),
        }
    }

    fn verifier(&self, instance: &InstanceSpec) -> Result<Box<dyn Verifier>, AgentError> {
        let spec = self.verifier.as_ref().ok_or_else(|| {
            AgentError::InvalidConfig("this mode has no verifier section".to_owned())
        })?;
        match spec {
            AgentSpec::Llm(client) => Ok(Box::new(LlmVerifier::new(
                client.clone(),
                self.templates.clone(),
            ))),
            AgentSpec::Scripted { .. } => {
                let script = spec.script(format!("{}.ver.jsonl", instance.id))?;
                Ok(Box::new(ScriptedVerifier::new(
                    script,
                    self.templates.clone(),
                )))
            }
            AgentSpec::Sound => Ok(Box::new(SoundVerifier::new())),
            AgentSpec::Noisy {
                false_positive_rate,
                false_negative_rate,
            } => Ok(Box::new(NoisyVerifier::new(NoisyConfig {
                false_positive_rate: *false_positive_rate,
                false_negative_rate: *false_negative_rate,
                seed: derive_instance_seed(self.run_seed, &instance.id),
            })?)),
        }
    }
}
