//! A toolkit for evaluating LLM planners on STRIPS planning problems.
//!
//! The crate is organized around a small pipeline:
//!
//! * [`pddl`] - a parser, printer, and execution semantics for an untyped
//!   STRIPS subset of PDDL.
//! * [`validator`] - plan validation with graded feedback (binary,
//!   first-error, open-conditions).
//! * [`blocksworld`] - the built-in Blocksworld domain, a uniform random
//!   instance sampler, and a breadth-first search planner used as an oracle.
//! * [`prompt`] - prompt rendering for plan generation, plan verification,
//!   and backprompting, plus tolerant parsers for model responses.
//! * [`agents`] - generator and verifier implementations: an HTTP LLM
//!   client, a sound verifier, a calibrated noisy verifier, and scripted
//!   replay agents.
//! * [`orchestrator`] - the bounded generate/verify/backprompt loop and
//!   suite execution with deterministic transcripts.
//! * [`report`] - exact-rational accuracy and confusion-matrix summaries
//!   rendered as markdown or CSV.

pub mod agents;
pub mod blocksworld;
pub mod orchestrator;
pub mod nl;
pub mod pddl;
pub mod prompt;
pub mod report;
pub mod validator;
