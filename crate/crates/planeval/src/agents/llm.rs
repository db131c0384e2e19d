//! HTTP client for chat-completion endpoints.
//!
//! The wire format is the common chat API: POST a JSON body with `model`,
//! `messages` (one system and one user message), and `temperature`; read
//! `choices[0].message.content` back. `base_url` is the full endpoint URL,
//! typically ending in `/v1/chat/completions`.

use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use ureq::Agent;

use crate::pddl::{Domain, Plan, Problem};
use crate::prompt::{parse_verifier_response, verification_prompt, PromptBundle, TemplateSet};
use crate::validator::FeedbackLevel;

use super::{feedback_at_level, AgentError, Generator, Verifier, VerifierReply};

fn default_timeout_secs() -> u64 {
    60
}

fn default_max_retries() -> u32 {
    2
}

fn default_max_concurrent() -> usize {
    4
}

fn default_backoff_ms() -> u64 {
    250
}

/// Connection settings for one endpoint. The API key is never written in
/// configuration; `api_key_env` names an environment variable to read it
/// from at startup.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmEndpointConfig {
    pub base_url: String,
    pub model: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_max_concurrent")]
    pub max_concurrent_requests: usize,
    #[serde(default = "default_backoff_ms")]
    pub retry_backoff_ms: u64,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 2],
    temperature: f64,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatResponseMessage,
}

#[derive(Deserialize)]
struct ChatResponseMessage {
    content: String,
}

/// Counting semaphore bounding in-flight requests across clones.
#[derive(Debug)]
struct Gate {
    permits: Mutex<usize>,
    available: Condvar,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn new(permits: usize) -> Self {
        Gate {
            permits: Mutex::new(permits),
            available: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut permits = self.permits.lock().unwrap();
        while *permits == 0 {
            permits = self.available.wait(permits).unwrap();
        }
        *permits -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().unwrap() += 1;
        self.0.available.notify_one();
    }
}

enum Attempt {
    Fatal(AgentError),
    Transient(AgentError),
}

/// A shareable endpoint client. Clones share one connection pool and one
/// concurrency gate, so `max_concurrent_requests` holds across worker
/// threads that each own a clone.
#[derive(Clone)]
pub struct LlmClient {
    agent: Agent,
    config: LlmEndpointConfig,
    api_key: Option<String>,
    gate: Arc<Gate>,
}

impl std::fmt::Debug for LlmClient {
    // Never prints the API key.
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LlmClient")
            .field("config", &self.config)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .finish_non_exhaustive()
    }
}

impl LlmClient {
    /// Builds a client, reading the API key from the configured environment
    /// variable. A missing key fails here, not at the first request.
    pub fn new(config: LlmEndpointConfig) -> Result<Self, AgentError> {
        if config.max_concurrent_requests == 0 {
            return Err(AgentError::InvalidConfig(
                "max_concurrent_requests must be at least 1".to_owned(),
            ));
        }
        let api_key = match &config.api_key_env {
            Some(var) => Some(
                std::env::var(var).map_err(|_| AgentError::MissingApiKey(var.clone()))?,
            ),
            None => None,
        };
        let agent_config = Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .build();
        Ok(LlmClient {
            agent: Agent::new_with_config(agent_config),
            gate: Arc::new(Gate::new(config.max_concurrent_requests)),
            config,
            api_key,
        })
    }

    /// Sends one prompt and returns the raw completion text. Transport
    /// failures, timeouts, 429 and 5xx responses are retried up to
    /// `max_retries` extra attempts with doubling backoff; other statuses
    /// fail immediately.
    pub fn chat(&self, prompt: &PromptBundle) -> Result<String, AgentError> {
        let _permit = self.gate.acquire();
        let request = ChatRequest {
            model: &self.config.model,
            messages: [
                ChatMessage {
                    role: "system",
                    content: &prompt.system_text,
                },
                ChatMessage {
                    role: "user",
                    content: &prompt.user_text,
                },
            ],
            temperature: self.config.temperature,
        };
        let mut last = None;
        for attempt in 0..=self.config.max_retries as usize {
            if attempt > 0 {
                let backoff = self
                    .config
                    .retry_backoff_ms
                    .saturating_mul(1u64 << (attempt - 1).min(4));
                std::thread::sleep(Duration::from_millis(backoff));
            }
            match self.try_once(&request) {
                Ok(text) => return Ok(text),
                Err(Attempt::Fatal(err)) => return Err(err),
                Err(Attempt::Transient(err)) => last = Some(err),
            }
        }
        Err(last.expect("at least one attempt was made"))
    }

    fn try_once(&self, request: &ChatRequest<'_>) -> Result<String, Attempt> {
        let mut builder = self.agent.post(&self.config.base_url);
        if let Some(key) = &self.api_key {
            builder = builder.header("authorization", format!("Bearer {key}"));
        }
        match builder.send_json(request) {
            Ok(mut response) => {
                let status = response.status();
                if status.is_success() {
                    let parsed: ChatResponse =
                        response.body_mut().read_json().map_err(|err| {
                            Attempt::Fatal(AgentError::MalformedResponse(err.to_string()))
                        })?;
                    match parsed.choices.into_iter().next() {
                        Some(choice) => Ok(choice.message.content),
                        None => Err(Attempt::Fatal(AgentError::MalformedResponse(
                            "response contains no choices".to_owned(),
                        ))),
                    }
                } else {
                    let message = response
                        .body_mut()
                        .read_to_string()
                        .unwrap_or_default()
                        .chars()
                        .take(200)
                        .collect();
                    let err = AgentError::Endpoint {
                        status: status.as_u16(),
                        message,
                    };
                    if status.as_u16() == 429 || status.is_server_error() {
                        Err(Attempt::Transient(err))
                    } else {
                        Err(Attempt::Fatal(err))
                    }
                }
            }
            Err(ureq::Error::Timeout(_)) => Err(Attempt::Transient(AgentError::Timeout {
                seconds: self.config.timeout_secs,
            })),
            Err(err) => Err(Attempt::Transient(AgentError::Transport(err.to_string()))),
        }
    }
}

/// Plan generation over a live endpoint.
#[derive(Clone)]
pub struct LlmGenerator {
    client: LlmClient,
}

impl LlmGenerator {
    pub fn new(client: LlmClient) -> Self {
        LlmGenerator { client }
    }
}

impl Generator for LlmGenerator {
    fn generate(&mut self, prompt: &PromptBundle) -> Result<String, AgentError> {
        self.client.chat(prompt)
    }
}

/// Plan verification over a live endpoint: renders the zero-shot
/// verification prompt, asks the model, and reads a verdict out of the
/// reply. The critique reaches the generator only as far as the feedback
/// level allows.
#[derive(Clone)]
pub struct LlmVerifier {
    client: LlmClient,
    templates: TemplateSet,
}

impl LlmVerifier {
    pub fn new(client: LlmClient, templates: TemplateSet) -> Self {
        LlmVerifier { client, templates }
    }
}

impl Verifier for LlmVerifier {
    fn verify(
        &mut self,
        domain: &Domain,
        problem: &Problem,
        plan: &Plan,
        level: FeedbackLevel,
    ) -> Result<VerifierReply, AgentError> {
        let bundle = verification_prompt(&self.templates, domain, problem, plan)?;
        let raw = self.client.chat(&bundle)?;
        let parsed = parse_verifier_response(&raw);
        Ok(VerifierReply {
            verdict: parsed.verdict,
            feedback_text: feedback_at_level(level, parsed.verdict, &parsed.critique),
        })
    }
}
