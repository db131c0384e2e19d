//! The bounded generate/verify/backprompt loop and suite execution.
//!
//! One instance runs as: render the one-shot generation prompt, ask the
//! generator, parse the response, ask the verifier, and either stop on
//! approval or backprompt with the verifier's feedback, up to
//! `max_iterations` attempts. Every iteration also records the ground-truth
//! verdict from the sound validator, whatever the verifier said; reports are
//! built from that pairing.
//!
//! Transcripts are deterministic given the configuration: agents are
//! constructed per instance from seeds derived ahead of the parallel phase,
//! and the store writes transcripts in suite order whatever the thread
//! interleaving, so a run with eight workers is byte-identical to a run with
//! one.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{AgentError, Generator, Verifier};
use crate::blocksworld::{bfs_plan, random_instance, InstanceError, InstanceSpec};
use crate::pddl::{print_plan, Domain, Plan, Problem};
use crate::prompt::{
    backprompt, generation_prompt, parse_plan_response, ParseFailureReason, PromptBundle,
    TemplateSet,
};
use crate::validator::{validate, FeedbackLevel};

/// Default iteration cap for backprompting runs.
pub const DEFAULT_MAX_ITERATIONS: usize = 15;

/// Mixing constant for deriving per-instance seeds from the run seed.
const SEED_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Seed perturbation used to derive a one-shot example when the suite has a
/// single instance and no sibling can serve as the example.
const SINGLETON_EXAMPLE_SALT: u64 = 0xA076_1D64_78BD_642F;

/// Which pair of agents drives the loop.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentMode {
    /// One generation attempt per instance, no verifier at all.
    GeneratorOnly,
    /// LLM generator criticized by an LLM (or scripted) verifier.
    LlmPlusLlm,
    /// LLM generator criticized by the sound validator.
    LlmPlusSound,
    /// LLM generator criticized by the calibrated noisy verifier.
    LlmPlusNoisy,
}

impl ExperimentMode {
    pub fn uses_verifier(self) -> bool {
        !matches!(self, ExperimentMode::GeneratorOnly)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentMode::GeneratorOnly => "generator_only",
            ExperimentMode::LlmPlusLlm => "llm_plus_llm",
            ExperimentMode::LlmPlusSound => "llm_plus_sound",
            ExperimentMode::LlmPlusNoisy => "llm_plus_noisy",
        }
    }
}

impl std::fmt::Display for ExperimentMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

fn default_max_iterations() -> usize {
    DEFAULT_MAX_ITERATIONS
}

/// Loop parameters shared by every instance of a run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopConfig {
    pub mode: ExperimentMode,
    pub feedback_level: FeedbackLevel,
    /// Attempt cap per instance; clamped to at least 1.
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    /// Run seed. Example selection and per-instance agent seeds derive from
    /// it, so two runs with equal configuration are identical.
    pub seed: u64,
    /// When set, each backprompt carries all previous attempts and their
    /// feedback instead of only the latest feedback.
    #[serde(default)]
    pub accumulate_history: bool,
}

/// One generate/verify exchange.
///
/// Exactly one of `plan` and `parse_failure` is present. A parse failure
/// consumes an iteration: the verifier is not consulted, the recorded
/// verdict is a pinned rejection, and the feedback tells the generator to
/// use the plan format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Iteration {
    /// 1-based attempt number.
    pub index: usize,
    pub prompt: PromptBundle,
    pub raw_response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<Plan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parse_failure: Option<ParseFailureReason>,
    /// What the verifier claimed; `None` when no verdict was produced
    /// (generator-only mode, or a free-form verifier that never committed).
    pub verifier_verdict: Option<bool>,
    /// Feedback text at the configured level; empty at level `none`.
    pub verifier_feedback: String,
    /// The sound validator's verdict on this attempt, recorded every
    /// iteration regardless of mode.
    pub ground_truth_valid: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// The verifier approved an attempt.
    Approved,
    /// The iteration cap elapsed without approval.
    Exhausted,
    /// A generator, verifier, or prompt failure ended the run early.
    AgentError,
}

/// The full record of one instance run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub instance_id: String,
    pub config: LoopConfig,
    pub iterations: Vec<Iteration>,
    pub stop_reason: StopReason,
    /// The last attempt's plan, if it parsed.
    pub final_plan: Option<Plan>,
    /// The last attempt's claimed verdict.
    pub final_verifier_verdict: Option<bool>,
    /// The last attempt's ground-truth verdict; false when nothing ran.
    pub final_ground_truth: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Wall-clock duration of the run. Excluded from serialization so that
    /// transcript files are byte-identical across machines; timings go to a
    /// sidecar file instead.
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

impl Transcript {
    fn from_iterations(
        instance_id: &str,
        config: &LoopConfig,
        iterations: Vec<Iteration>,
        stop_reason: StopReason,
        error: Option<String>,
    ) -> Transcript {
        let last = iterations.last();
        Transcript {
            instance_id: instance_id.to_owned(),
            config: config.clone(),
            final_plan: last.and_then(|it| it.plan.clone()),
            final_verifier_verdict: last.and_then(|it| it.verifier_verdict),
            final_ground_truth: last.is_some_and(|it| it.ground_truth_valid),
            iterations,
            stop_reason,
            error,
            wall_clock_secs: 0.0,
        }
    }
}

/// Everything the loop needs to run one instance.
pub struct InstanceTask<'a> {
    pub domain: &'a Domain,
    pub problem: &'a Problem,
    pub instance_id: &'a str,
    pub example_problem: &'a Problem,
    pub example_plan: &'a Plan,
    pub templates: &'a TemplateSet,
}

fn unparseable_feedback(reason: &ParseFailureReason) -> String {
    format!(
        "The response could not be read as a plan ({reason}). \
         Write one action per line in the form (action object ...)."
    )
}

/// The feedback hole of the next backprompt: either the latest feedback or,
/// with history accumulation, every attempt so far with its feedback.
fn feedback_for_backprompt(config: &LoopConfig, iterations: &[Iteration]) -> String {
    let latest = iterations
        .last()
        .map(|it| it.verifier_feedback.as_str())
        .unwrap_or_default();
    if !config.accumulate_history {
        return latest.to_owned();
    }
    let mut blocks = Vec::with_capacity(iterations.len());
    for it in iterations {
        let plan_text = match &it.plan {
            Some(plan) if plan.is_empty() => "; no actions needed".to_owned(),
            Some(plan) => print_plan(plan).trim_end().to_owned(),
            None => "(unparseable response)".to_owned(),
        };
        let mut block = format!("Attempt {} plan:\n{plan_text}", it.index);
        if !it.verifier_feedback.is_empty() {
            block.push_str("\nFeedback: ");
            block.push_str(&it.verifier_feedback);
        }
        blocks.push(block);
    }
    blocks.join("\n\n")
}

/// Runs the loop for one instance. Never fails: agent and prompt errors end
/// the run with [`StopReason::AgentError`] and an explanatory message, with
/// every completed iteration preserved. An iteration in flight when the
/// verifier fails is not recorded.
pub fn run_instance(
    task: &InstanceTask<'_>,
    config: &LoopConfig,
    generator: &mut dyn Generator,
    mut verifier: Option<&mut dyn Verifier>,
) -> Transcript {
    let cap = if config.mode.uses_verifier() {
        config.max_iterations.max(1)
    } else {
        1
    };
    let mut iterations: Vec<Iteration> = Vec::new();
    let finish = |iterations: Vec<Iteration>, stop: StopReason, error: Option<String>| {
        Transcript::from_iterations(task.instance_id, config, iterations, stop, error)
    };

    for index in 1..=cap {
        let prompt = if index == 1 {
            generation_prompt(
                task.templates,
                task.domain,
                task.example_problem,
                task.example_plan,
                task.problem,
            )
        } else {
            let feedback = feedback_for_backprompt(config, &iterations);
            backprompt(task.templates, task.domain, task.problem, &feedback)
        };
        let prompt = match prompt {
            Ok(prompt) => prompt,
            Err(err) => {
                let message = format!("prompt rendering failed at iteration {index}: {err}");
                return finish(iterations, StopReason::AgentError, Some(message));
            }
        };
        let raw_response = match generator.generate(&prompt) {
            Ok(text) => text,
            Err(err) => {
                let message = format!("generator failed at iteration {index}: {err}");
                return finish(iterations, StopReason::AgentError, Some(message));
            }
        };
        let iteration = match parse_plan_response(&raw_response, task.domain, task.problem) {
            Ok(plan) => {
                let ground_truth_valid = validate(task.domain, task.problem, &plan)
                    .expect("parsed plans are grounded")
                    .valid;
                let (verifier_verdict, verifier_feedback) = match verifier.as_deref_mut() {
                    Some(verifier) => {
                        match verifier.verify(
                            task.domain,
                            task.problem,
                            &plan,
                            config.feedback_level,
                        ) {
                            Ok(reply) => (reply.verdict, reply.feedback_text),
                            Err(err) => {
                                let message =
                                    format!("verifier failed at iteration {index}: {err}");
                                return finish(iterations, StopReason::AgentError, Some(message));
                            }
                        }
                    }
                    None => (None, String::new()),
                };
                Iteration {
                    index,
                    prompt,
                    raw_response,
                    plan: Some(plan),
                    parse_failure: None,
                    verifier_verdict,
                    verifier_feedback,
                    ground_truth_valid,
                }
            }
            Err(failure) => Iteration {
                index,
                prompt,
                raw_response,
                plan: None,
                verifier_verdict: config.mode.uses_verifier().then_some(false),
                verifier_feedback: if config.mode.uses_verifier() {
                    unparseable_feedback(&failure.reason)
                } else {
                    String::new()
                },
                parse_failure: Some(failure.reason),
                ground_truth_valid: false,
            },
        };
        let approved = iteration.verifier_verdict == Some(true);
        iterations.push(iteration);
        if approved {
            return finish(iterations, StopReason::Approved, None);
        }
    }
    finish(iterations, StopReason::Exhausted, None)
}

/// Builds generator and verifier agents for each instance. Implementations
/// must be deterministic in the instance spec so that reruns and resumed
/// runs see identical agents.
pub trait AgentFactory: Sync {
    fn generator(&self, instance: &InstanceSpec) -> Result<Box<dyn Generator>, AgentError>;
    /// Only called for modes with a verifier.
    fn verifier(&self, instance: &InstanceSpec) -> Result<Box<dyn Verifier>, AgentError>;
}

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("failed to {action} `{path}`: {source}")]
    Io {
        action: &'static str,
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt transcript store `{path}` at line {line}: {message}")]
    CorruptStore {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("the suite has no instances")]
    EmptySuite,
    #[error("instance `{0}` appears twice in the suite")]
    DuplicateInstance(String),
    #[error("could not derive a distinct one-shot example for instance `{0}`")]
    ExampleDerivation(String),
    #[error(transparent)]
    Instance(#[from] InstanceError),
}

/// Append-only JSONL store for transcripts, with an in-order writer and
/// resume support.
///
/// `transcripts.jsonl` holds one canonical transcript per line, in suite
/// order; `timings.jsonl` holds wall-clock durations keyed by instance id,
/// one line per freshly executed instance. Keeping timings out of the
/// transcript file keeps the latter byte-identical across reruns.
pub struct TranscriptStore {
    dir: PathBuf,
    existing: BTreeMap<String, Transcript>,
    inner: Mutex<StoreInner>,
}

struct StoreInner {
    pending: BTreeMap<usize, Option<(Transcript, f64)>>,
    next_to_write: usize,
    transcripts: BufWriter<File>,
    timings: BufWriter<File>,
}

/// Reads a transcript JSONL file in file order. Blank lines are skipped;
/// anything else that does not parse as a transcript is a corrupt store.
pub fn load_transcripts(path: &Path) -> Result<Vec<Transcript>, OrchestratorError> {
    let file = File::open(path).map_err(|source| OrchestratorError::Io {
        action: "open",
        path: path.to_owned(),
        source,
    })?;
    let mut transcripts = Vec::new();
    for (number, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| OrchestratorError::Io {
            action: "read",
            path: path.to_owned(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let transcript: Transcript =
            serde_json::from_str(&line).map_err(|err| OrchestratorError::CorruptStore {
                path: path.to_owned(),
                line: number + 1,
                message: err.to_string(),
            })?;
        transcripts.push(transcript);
    }
    Ok(transcripts)
}

impl TranscriptStore {
    pub fn transcripts_path(dir: &Path) -> PathBuf {
        dir.join("transcripts.jsonl")
    }

    pub fn timings_path(dir: &Path) -> PathBuf {
        dir.join("timings.jsonl")
    }

    /// Opens (creating if needed) the store in `dir`. Existing transcripts
    /// are loaded for resume and new ones are appended after them.
    pub fn open(dir: &Path) -> Result<TranscriptStore, OrchestratorError> {
        std::fs::create_dir_all(dir).map_err(|source| OrchestratorError::Io {
            action: "create directory",
            path: dir.to_owned(),
            source,
        })?;
        let transcripts_path = Self::transcripts_path(dir);
        let mut existing = BTreeMap::new();
        if transcripts_path.exists() {
            for transcript in load_transcripts(&transcripts_path)? {
                existing.insert(transcript.instance_id.clone(), transcript);
            }
        }
        let open_append = |path: &Path| {
            OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|source| OrchestratorError::Io {
                    action: "open",
                    path: path.to_owned(),
                    source,
                })
        };
        let transcripts = BufWriter::new(open_append(&transcripts_path)?);
        let timings = BufWriter::new(open_append(&Self::timings_path(dir))?);
        Ok(TranscriptStore {
            dir: dir.to_owned(),
            existing,
            inner: Mutex::new(StoreInner {
                pending: BTreeMap::new(),
                next_to_write: 0,
                transcripts,
                timings,
            }),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// A transcript recorded by a previous run, if any.
    pub fn completed(&self, instance_id: &str) -> Option<&Transcript> {
        self.existing.get(instance_id)
    }

    /// Submits the outcome for suite position `index`: a fresh transcript
    /// with its wall-clock seconds, or `None` for an instance reused from a
    /// previous run. Lines reach the files strictly in index order.
    fn submit(
        &self,
        index: usize,
        outcome: Option<(Transcript, f64)>,
    ) -> Result<(), OrchestratorError> {
        let io_err = |source| OrchestratorError::Io {
            action: "write",
            path: Self::transcripts_path(&self.dir),
            source,
        };
        let mut inner = self.inner.lock().unwrap();
        inner.pending.insert(index, outcome);
        loop {
            let key = inner.next_to_write;
            let Some(slot) = inner.pending.remove(&key) else {
                break;
            };
            if let Some((transcript, wall_clock_secs)) = slot {
                let line =
                    serde_json::to_string(&transcript).expect("transcripts serialize to JSON");
                writeln!(inner.transcripts, "{line}").map_err(io_err)?;
                let timing = serde_json::json!({
                    "instance_id": transcript.instance_id,
                    "wall_clock_secs": wall_clock_secs,
                });
                writeln!(inner.timings, "{timing}").map_err(io_err)?;
            }
            inner.next_to_write += 1;
        }
        Ok(())
    }

    fn flush(&self) -> Result<(), OrchestratorError> {
        let mut inner = self.inner.lock().unwrap();
        debug_assert!(inner.pending.is_empty(), "unflushed out-of-order slots");
        let io_err = |source| OrchestratorError::Io {
            action: "flush",
            path: Self::transcripts_path(&self.dir),
            source,
        };
        inner.transcripts.flush().map_err(io_err)?;
        inner.timings.flush().map_err(io_err)
    }
}

/// One-shot examples for every instance, selected ahead of the parallel
/// phase so the choice depends only on the run seed.
///
/// Each instance borrows a sibling instance (never itself) as its example,
/// solved optimally by breadth-first search. A singleton suite derives a
/// fresh example instance from the instance seed instead.
fn select_examples(
    domain: &Domain,
    specs: &[InstanceSpec],
    problems: &[Problem],
    config: &LoopConfig,
) -> Result<Vec<(Problem, Plan)>, OrchestratorError> {
    let mut plans_by_index: BTreeMap<usize, Plan> = BTreeMap::new();
    let mut examples = Vec::with_capacity(specs.len());
    for (i, spec) in specs.iter().enumerate() {
        let budget = 4 * spec.n_blocks;
        if specs.len() == 1 {
            let (problem, plan) =
                derive_singleton_example(domain, spec, &problems[i], budget)?;
            examples.push((problem, plan));
            continue;
        }
        let mut rng =
            ChaCha8Rng::seed_from_u64(config.seed ^ SEED_GAMMA.wrapping_mul(i as u64 + 1));
        let draw = rng.gen_range(0..specs.len() - 1);
        let j = if draw >= i { draw + 1 } else { draw };
        if !plans_by_index.contains_key(&j) {
            let plan = bfs_plan(domain, &problems[j], 4 * specs[j].n_blocks)
                .expect("suite instances are solvable within the 4n budget");
            plans_by_index.insert(j, plan);
        }
        examples.push((problems[j].clone(), plans_by_index[&j].clone()));
    }
    Ok(examples)
}

fn derive_singleton_example(
    domain: &Domain,
    spec: &InstanceSpec,
    query: &Problem,
    budget: usize,
) -> Result<(Problem, Plan), OrchestratorError> {
    for attempt in 0..32u64 {
        let derived = InstanceSpec {
            id: format!("{}-example", spec.id),
            n_blocks: spec.n_blocks,
            seed: (spec.seed ^ SINGLETON_EXAMPLE_SALT).wrapping_add(attempt),
        };
        let problem = random_instance(&derived)?;
        if problem.init() != query.init() || problem.goal() != query.goal() {
            let plan = bfs_plan(domain, &problem, budget)
                .expect("generated instances are solvable within the 4n budget");
            return Ok((problem, plan));
        }
    }
    Err(OrchestratorError::ExampleDerivation(spec.id.clone()))
}

/// Runs a whole suite and returns the transcripts in suite order.
///
/// Instances already present in the store are not re-executed; their stored
/// transcripts are returned in place. Fresh transcripts are appended to the
/// store as they complete. Worker threads pull instances from a shared
/// queue, so `parallelism` changes scheduling but not output.
pub fn run_suite(
    domain: &Domain,
    specs: &[InstanceSpec],
    config: &LoopConfig,
    templates: &TemplateSet,
    parallelism: usize,
    factory: &dyn AgentFactory,
    store: &TranscriptStore,
) -> Result<Vec<Transcript>, OrchestratorError> {
    if specs.is_empty() {
        return Err(OrchestratorError::EmptySuite);
    }
    {
        let mut seen = std::collections::BTreeSet::new();
        for spec in specs {
            if !seen.insert(&spec.id) {
                return Err(OrchestratorError::DuplicateInstance(spec.id.clone()));
            }
        }
    }
    let problems: Vec<Problem> = specs
        .iter()
        .map(random_instance)
        .collect::<Result<_, _>>()?;
    let examples = select_examples(domain, specs, &problems, config)?;

    let results: Vec<Mutex<Option<Transcript>>> =
        specs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = parallelism.max(1).min(specs.len());
    let failure: Mutex<Option<OrchestratorError>> = Mutex::new(None);

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let index = next.fetch_add(1, Ordering::Relaxed);
                if index >= specs.len() {
                    break;
                }
                let spec = &specs[index];
                let outcome = if let Some(done) = store.completed(&spec.id) {
                    *results[index].lock().unwrap() = Some(done.clone());
                    None
                } else {
                    let started = Instant::now();
                    let transcript = execute_instance(
                        domain,
                        spec,
                        &problems[index],
                        &examples[index],
                        config,
                        templates,
                        factory,
                    );
                    let wall = started.elapsed().as_secs_f64();
                    *results[index].lock().unwrap() = Some(transcript.clone());
                    Some((transcript, wall))
                };
                if let Err(err) = store.submit(index, outcome) {
                    *failure.lock().unwrap() = Some(err);
                    break;
                }
            });
        }
    });

    if let Some(err) = failure.into_inner().unwrap() {
        return Err(err);
    }
    store.flush()?;
    Ok(results
        .into_iter()
        .map(|slot| slot.into_inner().unwrap().expect("every index was run"))
        .collect())
}

/// Builds agents and runs one instance. Factory failures become zero- or
/// few-iteration transcripts with [`StopReason::AgentError`], so one broken
/// instance cannot abort the suite.
fn execute_instance(
    domain: &Domain,
    spec: &InstanceSpec,
    problem: &Problem,
    example: &(Problem, Plan),
    config: &LoopConfig,
    templates: &TemplateSet,
    factory: &dyn AgentFactory,
) -> Transcript {
    let agent_failure = |stage: &str, err: AgentError| Transcript {
        instance_id: spec.id.clone(),
        config: config.clone(),
        iterations: Vec::new(),
        stop_reason: StopReason::AgentError,
        final_plan: None,
        final_verifier_verdict: None,
        final_ground_truth: false,
        error: Some(format!("could not construct the {stage}: {err}")),
        wall_clock_secs: 0.0,
    };
    let mut generator = match factory.generator(spec) {
        Ok(generator) => generator,
        Err(err) => return agent_failure("generator", err),
    };
    let mut verifier = if config.mode.uses_verifier() {
        match factory.verifier(spec) {
            Ok(verifier) => Some(verifier),
            Err(err) => return agent_failure("verifier", err),
        }
    } else {
        None
    };
    let task = InstanceTask {
        domain,
        problem,
        instance_id: &spec.id,
        example_problem: &example.0,
        example_plan: &example.1,
        templates,
    };
    match verifier.as_mut() {
        Some(verifier) => run_instance(&task, config, generator.as_mut(), Some(&mut **verifier)),
        None => run_instance(&task, config, generator.as_mut(), None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{Script, ScriptedGenerator, ScriptedVerifier, SoundVerifier, VerifierReply};
    use crate::blocksworld;
    use crate::pddl::{parse_plan, parse_problem};
    use crate::prompt::{PromptKind, EXAMPLE_SECTION_MARKER};

    fn domain_and_problems() -> (Domain, Problem, Problem, Plan) {
        let domain = blocksworld::domain();
        let example = parse_problem(
            "(define (problem ex) (:domain blocksworld)\n\
             (:objects a b)\n\
             (:init (clear a) (ontable a) (clear b) (ontable b) (handempty))\n\
             (:goal (and (on a b) (ontable b))))",
            &domain,
        )
        .unwrap();
        let example_plan = parse_plan("(pickup a)\n(stack a b)\n", &domain, &example).unwrap();
        let query = parse_problem(
            "(define (problem q) (:domain blocksworld)\n\
             (:objects a b)\n\
             (:init (clear b) (on b a) (ontable a) (handempty))\n\
             (:goal (and (ontable a) (ontable b) (clear a) (clear b))))",
            &domain,
        )
        .unwrap();
        (domain, example, query, example_plan)
    }

    fn config(mode: ExperimentMode, level: FeedbackLevel) -> LoopConfig {
        LoopConfig {
            mode,
            feedback_level: level,
            max_iterations: 15,
            seed: 0,
            accumulate_history: false,
        }
    }

    fn task<'a>(
        domain: &'a Domain,
        query: &'a Problem,
        example: &'a Problem,
        example_plan: &'a Plan,
    ) -> InstanceTask<'a> {
        InstanceTask {
            domain,
            problem: query,
            instance_id: "t-000",
            example_problem: example,
            example_plan,
            templates: TemplateSet::builtin(),
        }
    }

    #[test]
    fn a_correct_first_attempt_is_approved_immediately() {
        let (domain, example, query, example_plan) = domain_and_problems();
        let mut generator =
            ScriptedGenerator::new(Script::from_responses(["(unstack b a)\n(putdown b)"]));
        let mut verifier = SoundVerifier::new();
        let transcript = run_instance(
            &task(&domain, &query, &example, &example_plan),
            &config(ExperimentMode::LlmPlusSound, FeedbackLevel::Binary),
            &mut generator,
            Some(&mut verifier),
        );
        assert_eq!(transcript.stop_reason, StopReason::Approved);
        assert_eq!(transcript.iterations.len(), 1);
        assert_eq!(transcript.final_verifier_verdict, Some(true));
        assert!(transcript.final_ground_truth);
        assert!(transcript.error.is_none());
        let first = &transcript.iterations[0];
        assert_eq!(first.index, 1);
        assert_eq!(first.prompt.kind, PromptKind::Generation);
        assert!(first.prompt.user_text.contains(EXAMPLE_SECTION_MARKER));
        assert!(first.ground_truth_valid);
    }

    #[test]
    fn feedback_is_embedded_in_the_next_backprompt() {
        let (domain, example, query, example_plan) = domain_and_problems();
        let mut generator = ScriptedGenerator::new(Script::from_responses([
            "(pickup b)",
            "(unstack b a)\n(putdown b)",
        ]));
        let mut verifier = SoundVerifier::new();
        let transcript = run_instance(
            &task(&domain, &query, &example, &example_plan),
            &config(ExperimentMode::LlmPlusSound, FeedbackLevel::FirstError),
            &mut generator,
            Some(&mut verifier),
        );
        assert_eq!(transcript.stop_reason, StopReason::Approved);
        assert_eq!(transcript.iterations.len(), 2);
        let first = &transcript.iterations[0];
        assert_eq!(first.verifier_verdict, Some(false));
        assert!(first
            .verifier_feedback
            .starts_with("The plan is invalid. The first inexecutable action is action 1"));
        let second = &transcript.iterations[1];
        assert_eq!(second.prompt.kind, PromptKind::Backprompt);
        assert!(second.prompt.user_text.contains(&first.verifier_feedback));
        assert!(!second.prompt.user_text.contains(EXAMPLE_SECTION_MARKER));
    }

    #[test]
    fn an_unhelpful_generator_exhausts_the_cap() {
        let (domain, example, query, example_plan) = domain_and_problems();
        let mut generator = ScriptedGenerator::new(Script::from_responses(vec!["(pickup b)"; 15]));
        let mut verifier = SoundVerifier::new();
        let transcript = run_instance(
            &task(&domain, &query, &example, &example_plan),
            &config(ExperimentMode::LlmPlusSound, FeedbackLevel::None),
            &mut generator,
            Some(&mut verifier),
        );
        assert_eq!(transcript.stop_reason, StopReason::Exhausted);
        assert_eq!(transcript.iterations.len(), 15);
        assert_eq!(transcript.final_verifier_verdict, Some(false));
        assert!(!transcript.final_ground_truth);
        // Level none: every backprompt carries no feedback text at all.
        for it in &transcript.iterations[1..] {
            assert!(!it.prompt.user_text.contains("The plan is invalid."));
        }
    }

    #[test]
    fn a_parse_failure_consumes_an_iteration_without_calling_the_verifier() {
        let (domain, example, query, example_plan) = domain_and_problems();
        let mut generator = ScriptedGenerator::new(Script::from_responses([
            "I refuse to answer in the requested format.",
            "(unstack b a)\n(putdown b)",
        ]));
        // One canned verifier response: if the first attempt consulted the
        // verifier, the second would exhaust the script and error out.
        let script = Script::from_responses(["The plan is valid."]);
        let mut verifier = ScriptedVerifier::new(script, TemplateSet::builtin().clone());
        let transcript = run_instance(
            &task(&domain, &query, &example, &example_plan),
            &config(ExperimentMode::LlmPlusLlm, FeedbackLevel::Binary),
            &mut generator,
            Some(&mut verifier),
        );
        assert_eq!(transcript.stop_reason, StopReason::Approved);
        assert_eq!(transcript.iterations.len(), 2);
        let first = &transcript.iterations[0];
        assert!(first.plan.is_none());
        assert_eq!(
            first.parse_failure,
            Some(ParseFailureReason::NoPlanFound)
        );
        assert_eq!(first.verifier_verdict, Some(false));
        assert!(first
            .verifier_feedback
            .starts_with("The response could not be read as a plan"));
        assert!(!first.ground_truth_valid);
        // The pinned feedback reaches the backprompt.
        assert!(transcript.iterations[1]
            .prompt
            .user_text
            .contains("could not be read as a plan"));
    }

    #[test]
    fn generator_failures_preserve_completed_iterations() {
        let (domain, example, query, example_plan) = domain_and_problems();
        let mut generator = ScriptedGenerator::new(Script::from_responses(["(pickup b)"]));
        let mut verifier = SoundVerifier::new();
        let transcript = run_instance(
            &task(&domain, &query, &example, &example_plan),
            &config(ExperimentMode::LlmPlusSound, FeedbackLevel::Binary),
            &mut generator,
            Some(&mut verifier),
        );
        assert_eq!(transcript.stop_reason, StopReason::AgentError);
        assert_eq!(transcript.iterations.len(), 1);
        assert_eq!(
            transcript.error.as_deref(),
            Some("generator failed at iteration 2: script exhausted after 1 response(s)")
        );
    }

    #[test]
    fn verifier_failures_do_not_record_the_iteration_in_flight() {
        let (domain, example, query, example_plan) = domain_and_problems();
        let mut generator =
            ScriptedGenerator::new(Script::from_responses(["(unstack b a)\n(putdown b)"]));
        let mut verifier =
            ScriptedVerifier::new(Script::from_responses(Vec::<String>::new()), TemplateSet::builtin().clone());
        let transcript = run_instance(
            &task(&domain, &query, &example, &example_plan),
            &config(ExperimentMode::LlmPlusLlm, FeedbackLevel::Binary),
            &mut generator,
            Some(&mut verifier),
        );
        assert_eq!(transcript.stop_reason, StopReason::AgentError);
        assert!(transcript.iterations.is_empty());
        assert_eq!(
            transcript.error.as_deref(),
            Some("verifier failed at iteration 1: script exhausted after 0 response(s)")
        );
    }

    #[test]
    fn generator_only_runs_exactly_one_iteration() {
        let (domain, example, query, example_plan) = domain_and_problems();
        let mut generator = ScriptedGenerator::new(Script::from_responses([
            "(unstack b a)\n(putdown b)",
            "(never used)",
        ]));
        let transcript = run_instance(
            &task(&domain, &query, &example, &example_plan),
            &config(ExperimentMode::GeneratorOnly, FeedbackLevel::None),
            &mut generator,
            None,
        );
        assert_eq!(transcript.stop_reason, StopReason::Exhausted);
        assert_eq!(transcript.iterations.len(), 1);
        assert_eq!(transcript.final_verifier_verdict, None);
        assert!(transcript.final_ground_truth);
        assert_eq!(transcript.iterations[0].verifier_verdict, None);
        assert_eq!(transcript.iterations[0].verifier_feedback, "");
    }

    #[test]
    fn an_unsound_approval_still_records_the_ground_truth() {
        struct AlwaysYes;
        impl crate::agents::Verifier for AlwaysYes {
            fn verify(
                &mut self,
                _domain: &Domain,
                _problem: &Problem,
                _plan: &Plan,
                _level: FeedbackLevel,
            ) -> Result<VerifierReply, AgentError> {
                Ok(VerifierReply {
                    verdict: Some(true),
                    feedback_text: "The plan is valid.".to_owned(),
                })
            }
        }
        let (domain, example, query, example_plan) = domain_and_problems();
        let mut generator = ScriptedGenerator::new(Script::from_responses(["(pickup b)"]));
        let mut verifier = AlwaysYes;
        let transcript = run_instance(
            &task(&domain, &query, &example, &example_plan),
            &config(ExperimentMode::LlmPlusNoisy, FeedbackLevel::Binary),
            &mut generator,
            Some(&mut verifier),
        );
        assert_eq!(transcript.stop_reason, StopReason::Approved);
        assert_eq!(transcript.final_verifier_verdict, Some(true));
        assert!(!transcript.final_ground_truth, "approval was a false positive");
    }

    #[test]
    fn accumulated_history_lists_every_attempt() {
        let (domain, example, query, example_plan) = domain_and_problems();
        let mut generator = ScriptedGenerator::new(Script::from_responses([
            "(pickup b)",
            "no plan here, sorry",
            "(unstack b a)\n(putdown b)",
        ]));
        let mut verifier = SoundVerifier::new();
        let mut cfg = config(ExperimentMode::LlmPlusSound, FeedbackLevel::Binary);
        cfg.accumulate_history = true;
        let transcript = run_instance(
            &task(&domain, &query, &example, &example_plan),
            &cfg,
            &mut generator,
            Some(&mut verifier),
        );
        assert_eq!(transcript.stop_reason, StopReason::Approved);
        let third = &transcript.iterations[2].prompt.user_text;
        assert!(third.contains("Attempt 1 plan:\n(pickup b)\nFeedback: The plan is invalid."));
        assert!(third.contains("Attempt 2 plan:\n(unparseable response)\nFeedback: The response could not be read as a plan"));

        // Without accumulation the same run shows only the latest feedback.
        let mut generator = ScriptedGenerator::new(Script::from_responses([
            "(pickup b)",
            "no plan here, sorry",
            "(unstack b a)\n(putdown b)",
        ]));
        cfg.accumulate_history = false;
        let plain = run_instance(
            &task(&domain, &query, &example, &example_plan),
            &cfg,
            &mut generator,
            Some(&mut verifier),
        );
        let third = &plain.iterations[2].prompt.user_text;
        assert!(!third.contains("Attempt 1 plan:"));
        assert!(third.contains("could not be read as a plan"));
        assert!(!third.contains("The plan is invalid."));
    }

    #[test]
    fn transcripts_survive_a_serde_round_trip_without_wall_clock() {
        let (domain, example, query, example_plan) = domain_and_problems();
        let mut generator = ScriptedGenerator::new(Script::from_responses(["(pickup b)"]));
        let mut verifier = SoundVerifier::new();
        let mut transcript = run_instance(
            &task(&domain, &query, &example, &example_plan),
            &config(ExperimentMode::LlmPlusSound, FeedbackLevel::Binary),
            &mut generator,
            Some(&mut verifier),
        );
        transcript.wall_clock_secs = 12.5;
        let json = serde_json::to_string(&transcript).unwrap();
        assert!(!json.contains("wall_clock_secs"));
        let back: Transcript = serde_json::from_str(&json).unwrap();
        assert_eq!(back.wall_clock_secs, 0.0);
        assert_eq!(back.instance_id, transcript.instance_id);
        assert_eq!(back.iterations, transcript.iterations);
        assert_eq!(back.stop_reason, transcript.stop_reason);
    }

    /// Scripted factory: every instance's generator replays the responses
    /// configured for its id; verifiers are sound.
    struct SuiteFactory {
        scripts: BTreeMap<String, Vec<String>>,
        fail_for: Option<String>,
    }

    impl AgentFactory for SuiteFactory {
        fn generator(&self, instance: &InstanceSpec) -> Result<Box<dyn Generator>, AgentError> {
            if self.fail_for.as_deref() == Some(instance.id.as_str()) {
                return Err(AgentError::InvalidConfig("deliberately broken".to_owned()));
            }
            let responses = self
                .scripts
                .get(&instance.id)
                .cloned()
                .unwrap_or_else(|| vec!["nothing useful".to_owned(); 15]);
            Ok(Box::new(ScriptedGenerator::new(Script::from_responses(
                responses,
            ))))
        }

        fn verifier(&self, _instance: &InstanceSpec) -> Result<Box<dyn Verifier>, AgentError> {
            Ok(Box::new(SoundVerifier::new()))
        }
    }

    fn small_specs(count: usize) -> Vec<InstanceSpec> {
        (0..count)
            .map(|i| InstanceSpec {
                id: format!("bw3-{i:03}"),
                n_blocks: 3,
                seed: 1000 + i as u64,
            })
            .collect()
    }

    fn solve_script_for(spec: &InstanceSpec) -> Vec<String> {
        let domain = blocksworld::domain();
        let problem = random_instance(spec).unwrap();
        let plan = bfs_plan(&domain, &problem, 4 * spec.n_blocks).unwrap();
        let text = if plan.is_empty() {
            "; no actions needed".to_owned()
        } else {
            print_plan(&plan)
        };
        vec![text]
    }

    fn suite_factory(specs: &[InstanceSpec]) -> SuiteFactory {
        SuiteFactory {
            scripts: specs
                .iter()
                .map(|spec| (spec.id.clone(), solve_script_for(spec)))
                .collect(),
            fail_for: None,
        }
    }

    #[test]
    fn suite_output_is_identical_across_parallelism_levels() {
        let domain = blocksworld::domain();
        let specs = small_specs(6);
        let factory = suite_factory(&specs);
        let cfg = config(ExperimentMode::LlmPlusSound, FeedbackLevel::FirstError);
        let mut outputs = Vec::new();
        for parallelism in [1, 4] {
            let dir = tempfile::tempdir().unwrap();
            let store = TranscriptStore::open(dir.path()).unwrap();
            let transcripts = run_suite(
                &domain,
                &specs,
                &cfg,
                TemplateSet::builtin(),
                parallelism,
                &factory,
                &store,
            )
            .unwrap();
            assert_eq!(transcripts.len(), specs.len());
            assert!(transcripts
                .iter()
                .all(|t| t.stop_reason == StopReason::Approved));
            outputs.push(
                std::fs::read(TranscriptStore::transcripts_path(dir.path())).unwrap(),
            );
        }
        assert_eq!(outputs[0], outputs[1], "transcripts differ by parallelism");
        // Suite order is preserved in the file.
        let text = String::from_utf8(outputs[0].clone()).unwrap();
        let ids: Vec<String> = text
            .lines()
            .map(|line| {
                serde_json::from_str::<Transcript>(line)
                    .unwrap()
                    .instance_id
            })
            .collect();
        assert_eq!(
            ids,
            specs.iter().map(|s| s.id.clone()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn resumed_runs_skip_completed_instances_and_append_nothing_twice() {
        let domain = blocksworld::domain();
        let specs = small_specs(4);
        let factory = suite_factory(&specs);
        let cfg = config(ExperimentMode::LlmPlusSound, FeedbackLevel::Binary);
        let dir = tempfile::tempdir().unwrap();

        // First run covers only the first two instances.
        let store = TranscriptStore::open(dir.path()).unwrap();
        run_suite(
            &domain,
            &specs[..2],
            &cfg,
            TemplateSet::builtin(),
            2,
            &factory,
            &store,
        )
        .unwrap();
        drop(store);
        let after_first =
            std::fs::read_to_string(TranscriptStore::transcripts_path(dir.path())).unwrap();
        assert_eq!(after_first.lines().count(), 2);

        // Second run covers all four; the first two are reused, not rerun.
        let store = TranscriptStore::open(dir.path()).unwrap();
        let transcripts = run_suite(
            &domain,
            &specs,
            &cfg,
            TemplateSet::builtin(),
            2,
            &factory,
            &store,
        )
        .unwrap();
        assert_eq!(transcripts.len(), 4);
        let after_second =
            std::fs::read_to_string(TranscriptStore::transcripts_path(dir.path())).unwrap();
        assert_eq!(after_second.lines().count(), 4);
        assert!(after_second.starts_with(&after_first));
        // Timings has one line per executed instance, no duplicates.
        let timings =
            std::fs::read_to_string(TranscriptStore::timings_path(dir.path())).unwrap();
        assert_eq!(timings.lines().count(), 4);
    }

    #[test]
    fn a_broken_factory_yields_an_error_transcript_and_the_suite_continues() {
        let domain = blocksworld::domain();
        let specs = small_specs(3);
        let mut factory = suite_factory(&specs);
        factory.fail_for = Some(specs[1].id.clone());
        let cfg = config(ExperimentMode::LlmPlusSound, FeedbackLevel::Binary);
        let dir = tempfile::tempdir().unwrap();
        let store = TranscriptStore::open(dir.path()).unwrap();
        let transcripts = run_suite(
            &domain,
            &specs,
            &cfg,
            TemplateSet::builtin(),
            1,
            &factory,
            &store,
        )
        .unwrap();
        assert_eq!(transcripts[0].stop_reason, StopReason::Approved);
        assert_eq!(transcripts[1].stop_reason, StopReason::AgentError);
        assert!(transcripts[1]
            .error
            .as_deref()
            .unwrap()
            .contains("could not construct the generator"));
        assert!(transcripts[1].iterations.is_empty());
        assert_eq!(transcripts[2].stop_reason, StopReason::Approved);
    }

    #[test]
    fn suite_validation_rejects_duplicates_and_emptiness() {
        let domain = blocksworld::domain();
        let cfg = config(ExperimentMode::LlmPlusSound, FeedbackLevel::Binary);
        let dir = tempfile::tempdir().unwrap();
        let store = TranscriptStore::open(dir.path()).unwrap();
        let factory = suite_factory(&[]);
        let err = run_suite(
            &domain,
            &[],
            &cfg,
            TemplateSet::builtin(),
            1,
            &factory,
            &store,
        )
        .unwrap_err();
        assert!(matches!(err, OrchestratorError::EmptySuite));
        let mut specs = small_specs(2);
        specs[1].id = specs[0].id.clone();
        let err = run_suite(
            &domain,
            &specs,
            &cfg,
            TemplateSet::builtin(),
            1,
            &factory,
            &store,
        )
        .unwrap_err();
        assert!(matches!(err, OrchestratorError::DuplicateInstance(_)));
    }

    #[test]
    fn examples_are_siblings_and_never_the_query_itself() {
        let domain = blocksworld::domain();
        let specs = small_specs(5);
        let problems: Vec<Problem> = specs.iter().map(|s| random_instance(s).unwrap()).collect();
        let cfg = config(ExperimentMode::LlmPlusSound, FeedbackLevel::Binary);
        let examples = select_examples(&domain, &specs, &problems, &cfg).unwrap();
        assert_eq!(examples.len(), specs.len());
        for (i, (example, plan)) in examples.iter().enumerate() {
            // The example is some suite problem, but not instance i.
            assert!(problems.iter().any(|p| p == example));
            assert_ne!(example, &problems[i]);
            let checked = validate(&domain, example, plan).unwrap();
            assert!(checked.valid, "example plan must solve its problem");
        }
        // Deterministic in the seed.
        let again = select_examples(&domain, &specs, &problems, &cfg).unwrap();
        assert_eq!(examples, again);
        let mut other = cfg.clone();
        other.seed = 1;
        let shifted = select_examples(&domain, &specs, &problems, &other).unwrap();
        assert_ne!(examples, shifted, "seed changes example selection");
    }

    #[test]
    fn singleton_suites_derive_a_distinct_example() {
        let domain = blocksworld::domain();
        let specs = small_specs(1);
        let problems = vec![random_instance(&specs[0]).unwrap()];
        let cfg = config(ExperimentMode::LlmPlusSound, FeedbackLevel::Binary);
        let examples = select_examples(&domain, &specs, &problems, &cfg).unwrap();
        let (example, plan) = &examples[0];
        assert!(
            example.init() != problems[0].init() || example.goal() != problems[0].goal(),
            "derived example must differ from the query"
        );
        assert!(validate(&domain, example, plan).unwrap().valid);
    }
}
