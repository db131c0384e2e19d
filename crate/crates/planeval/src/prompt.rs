//! Prompt rendering and response parsing.
//!
//! Prompts are assembled from plain-text templates with `{placeholder}`
//! slots. The built-in templates are compiled into the library; a directory
//! of replacement templates can be loaded at run time, which changes the
//! reported template version so that transcripts record what was sent.
//!
//! The inverse direction, turning free-form model output back into a [`Plan`]
//! or a verdict, is deliberately forgiving about prose and formatting but
//! strict about the actions themselves: an action line that names a known
//! action with bad arguments is a parse failure, not prose.

use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::nl::{describe_domain, describe_problem, phrase_book_for};
use crate::pddl::{print_plan, Domain, GroundAction, ModelError, Plan, Problem, Symbol};
use crate::validator::validate;

/// Version tag of the compiled-in templates, recorded in run manifests.
pub const TEMPLATE_VERSION: &str = "builtin-1";

/// Literal a response may use to state that the empty plan is intended.
/// The same literal is what an empty plan renders to inside a prompt.
pub const EMPTY_PLAN_MARKER: &str = "; no actions needed";

/// Sentence that introduces the worked example in the generation prompt.
/// Verification prompts must not contain it: the verifier is zero-shot.
pub const EXAMPLE_SECTION_MARKER: &str = "Here is an example problem.";

const TEMPLATE_FILES: [&str; 5] = [
    "generation_system.txt",
    "generation_user.txt",
    "verification_system.txt",
    "verification_user.txt",
    "backprompt_user.txt",
];

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("template `{name}` references unknown placeholder `{{{placeholder}}}`")]
    UnknownPlaceholder { name: String, placeholder: String },
    #[error("failed to read template `{name}`: {source}")]
    Io {
        name: String,
        #[source]
        source: std::io::Error,
    },
}

/// The five prompt templates used by the loop. `backprompt` reuses the
/// generation system text: the generator keeps its role across attempts.
#[derive(Clone, Debug)]
pub struct TemplateSet {
    version: String,
    generation_system: String,
    generation_user: String,
    verification_system: String,
    verification_user: String,
    backprompt_user: String,
}

static BUILTIN: LazyLock<TemplateSet> = LazyLock::new(|| TemplateSet {
    version: TEMPLATE_VERSION.to_owned(),
    generation_system: include_str!("../templates/generation_system.txt").to_owned(),
    generation_user: include_str!("../templates/generation_user.txt").to_owned(),
    verification_system: include_str!("../templates/verification_system.txt").to_owned(),
    verification_user: include_str!("../templates/verification_user.txt").to_owned(),
    backprompt_user: include_str!("../templates/backprompt_user.txt").to_owned(),
});

impl TemplateSet {
    pub fn builtin() -> &'static TemplateSet {
        &BUILTIN
    }

    /// Loads replacement templates from a directory containing the same five
    /// file names the built-in set uses. The version tag is derived from the
    /// file contents, so two directories with identical templates report the
    /// same version.
    pub fn from_dir(dir: &Path) -> Result<TemplateSet, TemplateError> {
        let mut texts = Vec::with_capacity(TEMPLATE_FILES.len());
        let mut digest = Sha256::new();
        for name in TEMPLATE_FILES {
            let text = fs::read_to_string(dir.join(name)).map_err(|source| TemplateError::Io {
                name: name.to_owned(),
                source,
            })?;
            digest.update(text.as_bytes());
            digest.update([0u8]);
            texts.push(text);
        }
        let tag = hex::encode(&digest.finalize()[..8]);
        let mut texts = texts.into_iter();
        Ok(TemplateSet {
            version: format!("dir-{tag}"),
            generation_system: texts.next().unwrap(),
            generation_user: texts.next().unwrap(),
            verification_system: texts.next().unwrap(),
            verification_user: texts.next().unwrap(),
            backprompt_user: texts.next().unwrap(),
        })
    }

    pub fn version(&self) -> &str {
        &self.version
    }
}

/// Which stage of the loop a prompt belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Generation,
    Verification,
    Backprompt,
}

/// A fully rendered prompt: one system message and one user message.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub kind: PromptKind,
    pub system_text: String,
    pub user_text: String,
}

impl PromptBundle {
    /// Content digest used by scripted agents to pin a response to the exact
    /// prompt it answers. The NUL separator keeps (system, user) unambiguous.
    pub fn sha256_hex(&self) -> String {
        let mut digest = Sha256::new();
        digest.update(self.system_text.as_bytes());
        digest.update([0u8]);
        digest.update(self.user_text.as_bytes());
        hex::encode(digest.finalize())
    }
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("ill-grounded input: {0}")]
    Grounding(#[from] ModelError),
    #[error("the one-shot example plan does not solve the example problem")]
    ExampleInvalid,
    #[error("the one-shot example has the same initial state and goal as the query")]
    ExampleIsQuery,
}

/// Substitutes `{placeholder}` slots. Values are trimmed of trailing
/// whitespace so the template alone controls vertical spacing; runs of blank
/// lines left behind by empty values collapse to a single blank line.
fn render(name: &str, template: &str, values: &[(&str, &str)]) -> Result<String, TemplateError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after.find('}');
        let key = close.map(|c| &after[..c]).filter(|key| {
            !key.is_empty()
                && key
                    .chars()
                    .all(|c| c.is_ascii_lowercase() || c == '_')
        });
        match key {
            Some(key) => {
                match values.iter().find(|(k, _)| *k == key) {
                    Some((_, value)) => out.push_str(value.trim_end()),
                    None => {
                        return Err(TemplateError::UnknownPlaceholder {
                            name: name.to_owned(),
                            placeholder: key.to_owned(),
                        })
                    }
                }
                rest = &after[close.unwrap() + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    Ok(collapse_blank_runs(&out))
}

fn collapse_blank_runs(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut newlines = 0usize;
    for c in text.chars() {
        if c == '\n' {
            newlines += 1;
            if newlines <= 2 {
                out.push(c);
            }
        } else {
            newlines = 0;
            out.push(c);
        }
    }
    out
}

/// How a plan appears inside a prompt. The empty plan is spelled out rather
/// than rendered as nothing, so the model sees the convention it may use.
fn plan_text(plan: &Plan) -> String {
    if plan.is_empty() {
        EMPTY_PLAN_MARKER.to_owned()
    } else {
        print_plan(plan)
    }
}

/// Renders the one-shot generation prompt. The example must be a different
/// problem than the query and its plan must actually solve it; shipping a
/// broken example would poison every attempt downstream.
pub fn generation_prompt(
    templates: &TemplateSet,
    domain: &Domain,
    example_problem: &Problem,
    example_plan: &Plan,
    query: &Problem,
) -> Result<PromptBundle, PromptError> {
    if example_problem.init() == query.init() && example_problem.goal() == query.goal() {
        return Err(PromptError::ExampleIsQuery);
    }
    let checked = validate(domain, example_problem, example_plan)?;
    if !checked.valid {
        return Err(PromptError::ExampleInvalid);
    }
    let book = phrase_book_for(domain);
    let values = [
        ("domain_description", describe_domain(domain, &book)),
        ("example_problem", describe_problem(example_problem, &book)),
        ("example_plan", plan_text(example_plan)),
        ("query_problem", describe_problem(query, &book)),
    ];
    let values: Vec<(&str, &str)> = values.iter().map(|(k, v)| (*k, v.as_str())).collect();
    Ok(PromptBundle {
        kind: PromptKind::Generation,
        system_text: render("generation_system", &templates.generation_system, &[])?,
        user_text: render("generation_user", &templates.generation_user, &values)?,
    })
}

/// Renders the zero-shot verification prompt for a candidate plan. The plan
/// must ground against the domain and problem; free-form candidate text is
/// handled by [`parse_plan_response`] before it gets here.
pub fn verification_prompt(
    templates: &TemplateSet,
    domain: &Domain,
    problem: &Problem,
    plan: &Plan,
) -> Result<PromptBundle, PromptError> {
    for step in &plan.steps {
        problem.check_grounding(domain, step)?;
    }
    let book = phrase_book_for(domain);
    let values = [
        ("domain_description", describe_domain(domain, &book)),
        ("query_problem", describe_problem(problem, &book)),
        ("query_plan", plan_text(plan)),
    ];
    let values: Vec<(&str, &str)> = values.iter().map(|(k, v)| (*k, v.as_str())).collect();
    Ok(PromptBundle {
        kind: PromptKind::Verification,
        system_text: render("verification_system", &templates.verification_system, &[])?,
        user_text: render("verification_user", &templates.verification_user, &values)?,
    })
}

/// Renders a backprompt carrying verifier feedback. `feedback_text` may be
/// empty (the no-feedback regime still re-prompts); the template collapses
/// the hole cleanly in that case.
pub fn backprompt(
    templates: &TemplateSet,
    domain: &Domain,
    query: &Problem,
    feedback_text: &str,
) -> Result<PromptBundle, PromptError> {
    let book = phrase_book_for(domain);
    let query_text = describe_problem(query, &book);
    let values = [
        ("feedback", feedback_text),
        ("query_problem", query_text.as_str()),
    ];
    Ok(PromptBundle {
        kind: PromptKind::Backprompt,
        system_text: render("generation_system", &templates.generation_system, &[])?,
        user_text: render("backprompt_user", &templates.backprompt_user, &values)?,
    })
}

/// Why a response could not be read as a plan. Offsets are 1-based line
/// numbers into the raw response.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParseFailureReason {
    /// No line of the response looks like an action or the empty-plan marker.
    NoPlanFound,
    /// A parenthesized line names an action the domain does not declare.
    UnknownAction { line: usize, name: String },
    /// An action argument is not an object of the problem.
    UnknownObject { line: usize, name: String },
    /// An action line has the wrong number of arguments.
    WrongArity {
        line: usize,
        action: String,
        expected: usize,
        got: usize,
    },
}

impl fmt::Display for ParseFailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseFailureReason::NoPlanFound => f.write_str("no plan found in the response"),
            ParseFailureReason::UnknownAction { line, name } => {
                write!(f, "line {line}: unknown action `{name}`")
            }
            ParseFailureReason::UnknownObject { line, name } => {
                write!(f, "line {line}: unknown object `{name}`")
            }
            ParseFailureReason::WrongArity {
                line,
                action,
                expected,
                got,
            } => write!(
                f,
                "line {line}: action `{action}` takes {expected} argument(s), got {got}"
            ),
        }
    }
}

/// A response that could not be read as a plan. The raw text rides along for
/// diagnostics but is not serialized; transcripts already store it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseFailure {
    #[serde(flatten)]
    pub reason: ParseFailureReason,
    #[serde(skip)]
    pub raw_text: String,
}

impl fmt::Display for ParseFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.reason.fmt(f)
    }
}

impl std::error::Error for ParseFailure {}

fn symbolish(token: &str) -> bool {
    Symbol::new(token).is_ok()
}

/// Strips one leading bullet (`-`, `*`, `•`) or one numeric enumerator of
/// the form `3.`, `3)` or `3:` from a line.
fn strip_enumerator(line: &str) -> &str {
    let trimmed = line.trim_start();
    if let Some(rest) = trimmed.strip_prefix(['-', '*', '•']) {
        return rest.trim_start();
    }
    let digits = trimmed
        .find(|c: char| !c.is_ascii_digit())
        .unwrap_or(trimmed.len());
    if digits > 0 {
        if let Some(rest) = trimmed[digits..].strip_prefix(['.', ')', ':']) {
            return rest.trim_start();
        }
    }
    trimmed
}

enum LineItem {
    Blank,
    Prose,
    /// The explicit empty-plan marker: an action line contributing no steps.
    Marker,
    /// Lowercased tokens of one action, name first.
    Action(Vec<String>),
}

/// Classifies one response line. Parenthesized lines are taken at face
/// value: a known action name, or an unknown head short enough to be an
/// attempted action, is an action line even if malformed (the caller turns
/// that into a parse failure). Bare lines are only accepted when they match
/// a known action name and its exact arity, because prose frequently starts
/// with an action word ("pickup a block from the table").
fn classify_line(line: &str, domain: &Domain, max_action_len: usize) -> LineItem {
    if line.trim().is_empty() {
        return LineItem::Blank;
    }
    let stripped = strip_enumerator(line).trim();
    if stripped.is_empty() {
        return LineItem::Prose;
    }
    let lower = stripped.to_lowercase();
    let marker = lower
        .trim_start_matches(';')
        .trim()
        .trim_end_matches('.')
        .trim_end();
    if marker == "no actions needed" {
        return LineItem::Marker;
    }
    let stripped = stripped.trim_end_matches(['.', ',', ';', '!']).trim_end();
    if let Some(inner) = stripped.strip_prefix('(') {
        let Some(inner) = inner.strip_suffix(')') else {
            return LineItem::Prose;
        };
        let tokens: Vec<String> = inner
            .split_whitespace()
            .map(str::to_lowercase)
            .collect();
        if tokens.is_empty() || !tokens.iter().all(|t| symbolish(t)) {
            return LineItem::Prose;
        }
        let known = Symbol::new(&tokens[0])
            .is_ok_and(|name| domain.action(&name).is_some());
        if known || tokens.len() <= max_action_len {
            return LineItem::Action(tokens);
        }
        return LineItem::Prose;
    }
    let tokens: Vec<String> = stripped
        .split_whitespace()
        .map(str::to_lowercase)
        .collect();
    if !tokens.iter().all(|t| symbolish(t)) {
        return LineItem::Prose;
    }
    if let Ok(name) = Symbol::new(&tokens[0]) {
        if let Some(schema) = domain.action(&name) {
            if tokens.len() == 1 + schema.params.len() {
                return LineItem::Action(tokens);
            }
        }
    }
    LineItem::Prose
}

/// Extracts a plan from free-form model output.
///
/// The response is scanned line by line for action-like lines; consecutive
/// action lines form a block (blank lines do not break a block, prose does)
/// and the last block wins, so models that restate their reasoning and then
/// print a final plan are read correctly. Bullets and numeric enumerators
/// are stripped. A line consisting of the empty-plan marker is a block that
/// contributes zero steps. Action lines with unknown names, unknown objects
/// or wrong arity fail parsing rather than being skipped.
pub fn parse_plan_response(
    text: &str,
    domain: &Domain,
    problem: &Problem,
) -> Result<Plan, ParseFailure> {
    let failure = |reason| ParseFailure {
        reason,
        raw_text: text.to_owned(),
    };
    let max_action_len = 1 + domain
        .actions()
        .map(|schema| schema.params.len())
        .max()
        .unwrap_or(0);
    let mut blocks: Vec<Vec<(usize, Vec<String>)>> = Vec::new();
    let mut current: Vec<(usize, Vec<String>)> = Vec::new();
    for (index, line) in text.lines().enumerate() {
        match classify_line(line, domain, max_action_len) {
            LineItem::Blank => {}
            LineItem::Prose => {
                if !current.is_empty() {
                    blocks.push(std::mem::take(&mut current));
                }
            }
            LineItem::Marker => current.push((index + 1, Vec::new())),
            LineItem::Action(tokens) => current.push((index + 1, tokens)),
        }
    }
    if !current.is_empty() {
        blocks.push(current);
    }
    let Some(block) = blocks.pop() else {
        return Err(failure(ParseFailureReason::NoPlanFound));
    };
    let mut steps = Vec::new();
    for (line, tokens) in block {
        let Some((head, args)) = tokens.split_first() else {
            continue; // empty-plan marker
        };
        let name = Symbol::new(head).expect("action tokens are validated symbols");
        let Some(schema) = domain.action(&name) else {
            return Err(failure(ParseFailureReason::UnknownAction {
                line,
                name: head.clone(),
            }));
        };
        if args.len() != schema.params.len() {
            return Err(failure(ParseFailureReason::WrongArity {
                line,
                action: head.clone(),
                expected: schema.params.len(),
                got: args.len(),
            }));
        }
        let mut ground_args = Vec::with_capacity(args.len());
        for arg in args {
            let object = Symbol::new(arg).expect("action tokens are validated symbols");
            if !problem.has_object(&object) {
                return Err(failure(ParseFailureReason::UnknownObject {
                    line,
                    name: arg.clone(),
                }));
            }
            ground_args.push(object);
        }
        steps.push(GroundAction::new(name, ground_args));
    }
    Ok(Plan::new(steps))
}

/// A verifier response reduced to a verdict plus its critique text.
/// `verdict` is `None` when the response never commits to one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParsedVerdict {
    pub verdict: Option<bool>,
    pub critique: String,
}

const NEGATORS: [&str; 14] = [
    "not", "no", "never", "cannot", "can't", "isn't", "aren't", "wasn't", "weren't", "doesn't",
    "don't", "won't", "couldn't", "shouldn't",
];

/// Reads a verdict out of free-form verifier output.
///
/// The text is lowercased and split into word tokens (apostrophes stay
/// inside words so contractions survive). Each occurrence of a marker word
/// (`valid`, `correct`, `invalid`, `incorrect`) yields a verdict, flipped
/// when a negator appears within the three preceding tokens; the last
/// occurrence wins, matching the convention that a verifier states its
/// conclusion at the end.
pub fn parse_verifier_response(text: &str) -> ParsedVerdict {
    let lowered = text.to_lowercase();
    let tokens: Vec<&str> = lowered
        .split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .filter(|t| !t.is_empty())
        .collect();
    let mut verdict = None;
    for (i, token) in tokens.iter().enumerate() {
        let base = match token.trim_matches('\'') {
            "valid" | "correct" => true,
            "invalid" | "incorrect" => false,
            _ => continue,
        };
        let negated = tokens[i.saturating_sub(3)..i]
            .iter()
            .any(|w| NEGATORS.contains(w));
        verdict = Some(base != negated);
    }
    ParsedVerdict {
        verdict,
        critique: text.trim().to_owned(),
    }
}
