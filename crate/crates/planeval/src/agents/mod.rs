//! Generator and verifier agents.
//!
//! The orchestrator talks to two trait objects: a [`Generator`] that turns a
//! prompt into response text, and a [`Verifier`] that judges a candidate
//! plan. Implementations here cover the four experimental regimes: a real
//! LLM over HTTP, a sound verifier backed by the validator, a noisy verifier
//! with calibrated error rates, and scripted replay agents for deterministic
//! runs and tests.

mod llm;
mod scripted;

pub use llm::{LlmClient, LlmEndpointConfig, LlmGenerator, LlmVerifier};
pub use scripted::{Script, ScriptEntry, ScriptMode, ScriptedGenerator, ScriptedVerifier};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::pddl::{Domain, Plan, Problem};
use crate::prompt::{PromptBundle, PromptError};
use crate::validator::{
    feedback_to_text, open_conditions, render_feedback, validate, verdict_sentence,
    FeedbackLevel,
};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("endpoint returned status {status}: {message}")]
    Endpoint { status: u16, message: String },
    #[error("request timed out (limit {seconds}s)")]
    Timeout { seconds: u64 },
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("malformed endpoint response: {0}")]
    MalformedResponse(String),
    #[error("environment variable `{0}` is not set")]
    MissingApiKey(String),
    #[error("invalid agent configuration: {0}")]
    InvalidConfig(String),
    #[error("script exhausted after {0} response(s)")]
    ScriptExhausted(usize),
    #[error("scripted response {index} answers a different prompt (expected digest {expected}, got {actual})")]
    PromptMismatch {
        index: usize,
        expected: String,
        actual: String,
    },
    #[error("script line {line}: {message}")]
    ScriptFormat { line: usize, message: String },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Produces free-form response text for a rendered prompt.
pub trait Generator: Send {
    fn generate(&mut self, prompt: &PromptBundle) -> Result<String, AgentError>;
}

/// Judges a candidate plan and produces feedback at the requested level.
pub trait Verifier: Send {
    fn verify(
        &mut self,
        domain: &Domain,
        problem: &Problem,
        plan: &Plan,
        level: FeedbackLevel,
    ) -> Result<VerifierReply, AgentError>;
}

/// What a verifier hands back to the loop. `verdict` is `None` when a
/// natural-language verifier never committed to one; the loop treats that
/// as not approved.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VerifierReply {
    pub verdict: Option<bool>,
    pub feedback_text: String,
}

/// Restricts a natural-language verifier's output to the requested level:
/// `none` forwards nothing, `binary` forwards just the verdict sentence,
/// and the richer levels forward the whole critique.
fn feedback_at_level(level: FeedbackLevel, verdict: Option<bool>, critique: &str) -> String {
    match (level, verdict) {
        (FeedbackLevel::None, _) => String::new(),
        (FeedbackLevel::Binary, Some(verdict)) => verdict_sentence(verdict).to_owned(),
        _ => critique.to_owned(),
    }
}

/// A verifier that validates the plan under the real execution semantics
/// and reports exactly what the validator saw. Never wrong, by construction.
#[derive(Clone, Copy, Debug, Default)]
pub struct SoundVerifier;

impl SoundVerifier {
    pub fn new() -> Self {
        SoundVerifier
    }
}

/// Renders the sound feedback text for a validated plan at `level`.
fn sound_feedback(
    domain: &Domain,
    problem: &Problem,
    plan: &Plan,
    level: FeedbackLevel,
) -> Result<(bool, String), AgentError> {
    let result = validate(domain, problem, plan).map_err(PromptError::from)?;
    let open = if level == FeedbackLevel::OpenConditions {
        Some(open_conditions(domain, problem, plan).map_err(PromptError::from)?)
    } else {
        None
    };
    let feedback = render_feedback(&result, open.as_ref(), level)
        .expect("open-conditions report is supplied exactly when required");
    Ok((result.valid, feedback_to_text(&feedback, domain)))
}

impl Verifier for SoundVerifier {
    fn verify(
        &mut self,
        domain: &Domain,
        problem: &Problem,
        plan: &Plan,
        level: FeedbackLevel,
    ) -> Result<VerifierReply, AgentError> {
        let (valid, feedback_text) = sound_feedback(domain, problem, plan, level)?;
        Ok(VerifierReply {
            verdict: Some(valid),
            feedback_text,
        })
    }
}

/// Derives a per-instance seed from a run seed, so stochastic agents are
/// deterministic per instance whatever order instances execute in.
pub fn derive_instance_seed(run_seed: u64, instance_id: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(run_seed.to_le_bytes());
    hasher.update(instance_id.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Error rates for [`NoisyVerifier`], both in `[0, 1]`.
///
/// `false_positive_rate` is the probability an invalid plan is approved;
/// `false_negative_rate` is the probability a valid plan is rejected.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoisyConfig {
    pub false_positive_rate: f64,
    pub false_negative_rate: f64,
    pub seed: u64,
}

/// A synthetic unsound verifier: it computes the true verdict, then flips it
/// with the configured per-class probabilities. One uniform draw is consumed
/// per call whatever the outcome, so decision sequences depend only on the
/// seed and the call order, not on the plans seen.
#[derive(Clone, Debug)]
pub struct NoisyVerifier {
    config: NoisyConfig,
    rng: ChaCha8Rng,
}

impl NoisyVerifier {
    pub fn new(config: NoisyConfig) -> Result<Self, AgentError> {
        for (name, value) in [
            ("false_positive_rate", config.false_positive_rate),
            ("false_negative_rate", config.false_negative_rate),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(AgentError::InvalidConfig(format!(
                    "{name} must lie in [0, 1], got {value}"
                )));
            }
        }
        Ok(NoisyVerifier {
            config,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
        })
    }
}

impl Verifier for NoisyVerifier {
    fn verify(
        &mut self,
        domain: &Domain,
        problem: &Problem,
        plan: &Plan,
        level: FeedbackLevel,
    ) -> Result<VerifierReply, AgentError> {
        let truth = validate(domain, problem, plan)
            .map_err(PromptError::from)?
            .valid;
        let draw: f64 = self.rng.gen();
        let emitted = if truth {
            draw >= self.config.false_negative_rate
        } else {
            draw < self.config.false_positive_rate
        };
        // A false rejection of a truly valid plan has no defect to describe,
        // so it degrades to the bare verdict sentence. True rejections reuse
        // the sound text for the level.
        let feedback_text = match (level, emitted, truth) {
            (FeedbackLevel::None, _, _) => String::new(),
            (_, true, _) => verdict_sentence(true).to_owned(),
            (_, false, false) => sound_feedback(domain, problem, plan, level)?.1,
            (_, false, true) => verdict_sentence(false).to_owned(),
        };
        Ok(VerifierReply {
            verdict: Some(emitted),
            feedback_text,
        })
    }
}
