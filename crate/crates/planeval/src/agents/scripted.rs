//! Scripted replay agents.
//!
//! A script is an ordered list of canned responses, optionally pinned to the
//! SHA-256 digest of the exact prompt each response answers. Scripts make
//! whole experiment runs reproducible without a live endpoint and drive the
//! loop tests.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::pddl::{Domain, Plan, Problem};
use crate::prompt::{parse_verifier_response, verification_prompt, PromptBundle, TemplateSet};
use crate::validator::FeedbackLevel;

use super::{feedback_at_level, AgentError, Generator, Verifier, VerifierReply};

/// One canned response. `prompt_sha256`, when present, must equal
/// [`PromptBundle::sha256_hex`] of the prompt being answered.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEntry {
    pub response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_sha256: Option<String>,
}

/// Whether digest pins are enforced. Lenient replay is for reusing a script
/// against deliberately changed prompts (for example, new templates).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptMode {
    #[default]
    Strict,
    Lenient,
}

/// An ordered supply of canned responses with a replay cursor.
#[derive(Clone, Debug)]
pub struct Script {
    entries: Vec<ScriptEntry>,
    cursor: usize,
    mode: ScriptMode,
}

impl Script {
    pub fn new(entries: Vec<ScriptEntry>, mode: ScriptMode) -> Self {
        Script {
            entries,
            cursor: 0,
            mode,
        }
    }

    /// Builds an unpinned script from plain response strings.
    pub fn from_responses<I>(responses: I) -> Self
    where
        I: IntoIterator,
        I::Item: Into<String>,
    {
        Script::new(
            responses
                .into_iter()
                .map(|response| ScriptEntry {
                    response: response.into(),
                    prompt_sha256: None,
                })
                .collect(),
            ScriptMode::Strict,
        )
    }

    /// Loads a script from a JSONL file, one [`ScriptEntry`] object per
    /// line. Blank lines are skipped.
    pub fn from_jsonl(path: &Path, mode: ScriptMode) -> Result<Self, AgentError> {
        let text = fs::read_to_string(path)?;
        let mut entries = Vec::new();
        for (number, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: ScriptEntry =
                serde_json::from_str(line).map_err(|err| AgentError::ScriptFormat {
                    line: number + 1,
                    message: err.to_string(),
                })?;
            entries.push(entry);
        }
        Ok(Script::new(entries, mode))
    }

    pub fn remaining(&self) -> usize {
        self.entries.len() - self.cursor
    }

    /// Yields the next response. In strict mode a pinned entry must match
    /// the digest of `prompt`; a mismatch does not consume the entry.
    pub fn next_response(&mut self, prompt: &PromptBundle) -> Result<String, AgentError> {
        let index = self.cursor;
        let Some(entry) = self.entries.get(index) else {
            return Err(AgentError::ScriptExhausted(self.entries.len()));
        };
        if self.mode == ScriptMode::Strict {
            if let Some(expected) = &entry.prompt_sha256 {
                let actual = prompt.sha256_hex();
                if *expected != actual {
                    return Err(AgentError::PromptMismatch {
                        index,
                        expected: expected.clone(),
                        actual,
                    });
                }
            }
        }
        self.cursor += 1;
        Ok(entry.response.clone())
    }
}

/// Replays scripted text as generation responses.
#[derive(Clone, Debug)]
pub struct ScriptedGenerator {
    script: Script,
}

impl ScriptedGenerator {
    pub fn new(script: Script) -> Self {
        ScriptedGenerator { script }
    }
}

impl Generator for ScriptedGenerator {
    fn generate(&mut self, prompt: &PromptBundle) -> Result<String, AgentError> {
        self.script.next_response(prompt)
    }
}

/// Replays scripted text as verifier critiques. The verdict is read out of
/// the canned text with the same grammar used for live LLM verifiers, and
/// the feedback is gated by the requested level.
#[derive(Clone, Debug)]
pub struct ScriptedVerifier {
    script: Script,
    templates: TemplateSet,
}

impl ScriptedVerifier {
    pub fn new(script: Script, templates: TemplateSet) -> Self {
        ScriptedVerifier { script, templates }
    }
}

impl Verifier for ScriptedVerifier {
    fn verify(
        &mut self,
        domain: &Domain,
        problem: &Problem,
        plan: &Plan,
        level: FeedbackLevel,
    ) -> Result<VerifierReply, AgentError> {
        let bundle = verification_prompt(&self.templates, domain, problem, plan)?;
        let raw = self.script.next_response(&bundle)?;
        let parsed = parse_verifier_response(&raw);
        Ok(VerifierReply {
            verdict: parsed.verdict,
            feedback_text: feedback_at_level(level, parsed.verdict, &parsed.critique),
        })
    }
}
