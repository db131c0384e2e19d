//! Plan validation with graded feedback.
//!
//! One walk over the plan serves two execution regimes. The sound regime
//! decides the verdict: execution halts at the first inapplicable action and
//! the goal is evaluated in the state reached so far. The optimistic regime
//! applies every action's effects whether or not its precondition held; the
//! open-conditions feedback level inspects that continuation. The regimes
//! agree up to and including the first failing step, so a single trace
//! records both.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nl;
use crate::pddl::{
    applicable, apply, satisfies, Domain, GroundAction, GroundAtom, ModelError, Plan, Problem,
    State,
};

/// How much a verifier reveals about an invalid plan.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackLevel {
    /// No explanation at all; rejection carries an empty message.
    None,
    /// A bare valid/invalid verdict sentence.
    Binary,
    /// The first inexecutable action and its unmet preconditions, or the
    /// unmet goals if every action executes.
    FirstError,
    /// Every step whose precondition fails under optimistic execution, plus
    /// the goals unmet in the final optimistic state.
    OpenConditions,
}

impl FeedbackLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            FeedbackLevel::None => "none",
            FeedbackLevel::Binary => "binary",
            FeedbackLevel::FirstError => "first_error",
            FeedbackLevel::OpenConditions => "open_conditions",
        }
    }
}

impl std::fmt::Display for FeedbackLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One step of the optimistic walk: applicability is judged in the state the
/// previous effects produced, and effects are applied regardless.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepRecord {
    pub index: usize,
    pub action: GroundAction,
    pub applicable: bool,
    pub unmet_preconditions: BTreeSet<GroundAtom>,
    pub state_before: State,
    pub state_after: State,
}

/// The verdict and supporting evidence for one plan.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValidationResult {
    /// Sound verdict: every action executable and the goal holds afterwards.
    pub valid: bool,
    /// Whether every action's precondition held when it was reached.
    pub executable: bool,
    /// Index of the first inapplicable action, if any.
    pub first_error_index: Option<usize>,
    /// Goal atoms unmet in the sound halt state: the final state if the plan
    /// executed fully, otherwise the state before the first failing action.
    pub unmet_goals: BTreeSet<GroundAtom>,
    /// Optimistic per-step trace covering the whole plan.
    pub trace: Vec<StepRecord>,
}

/// Partial-order style diagnosis: all failing steps under optimistic
/// execution plus the goals unmet in the final optimistic state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OpenConditionsReport {
    pub steps: Vec<OpenStep>,
    pub unmet_goals: BTreeSet<GroundAtom>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OpenStep {
    pub index: usize,
    pub action: GroundAction,
    pub unmet_preconditions: BTreeSet<GroundAtom>,
}

struct Walk {
    trace: Vec<StepRecord>,
    first_error_index: Option<usize>,
    final_state: State,
}

fn walk(domain: &Domain, problem: &Problem, plan: &Plan) -> Result<Walk, ModelError> {
    let mut state = problem.init().clone();
    let mut trace = Vec::with_capacity(plan.len());
    let mut first_error_index = None;
    for (index, action) in plan.steps.iter().enumerate() {
        problem.check_grounding(domain, action)?;
        let (ok, unmet_preconditions) = applicable(domain, &state, action)?;
        let after = apply(domain, &state, action)?;
        if !ok && first_error_index.is_none() {
            first_error_index = Some(index);
        }
        trace.push(StepRecord {
            index,
            action: action.clone(),
            applicable: ok,
            unmet_preconditions,
            state_before: state.clone(),
            state_after: after.clone(),
        });
        state = after;
    }
    Ok(Walk {
        trace,
        first_error_index,
        final_state: state,
    })
}

/// Validates `plan` against `problem` under sound execution semantics.
///
/// Fails only if a step does not ground against the domain and problem; a
/// grounded plan always produces a result, valid or not.
pub fn validate(domain: &Domain, problem: &Problem, plan: &Plan) -> Result<ValidationResult, ModelError> {
    let walk = walk(domain, problem, plan)?;
    let halt_state = match walk.first_error_index {
        Some(index) => &walk.trace[index].state_before,
        None => &walk.final_state,
    };
    let (goals_met, unmet_goals) = satisfies(halt_state, problem.goal());
    let executable = walk.first_error_index.is_none();
    Ok(ValidationResult {
        valid: executable && goals_met,
        executable,
        first_error_index: walk.first_error_index,
        unmet_goals,
        trace: walk.trace,
    })
}

/// Runs the optimistic regime and collects every step with unmet
/// preconditions plus the goals unmet in the final optimistic state.
pub fn open_conditions(
    domain: &Domain,
    problem: &Problem,
    plan: &Plan,
) -> Result<OpenConditionsReport, ModelError> {
    let walk = walk(domain, problem, plan)?;
    let steps = walk
        .trace
        .iter()
        .filter(|step| !step.applicable)
        .map(|step| OpenStep {
            index: step.index,
            action: step.action.clone(),
            unmet_preconditions: step.unmet_preconditions.clone(),
        })
        .collect();
    let (_, unmet_goals) = satisfies(&walk.final_state, problem.goal());
    Ok(OpenConditionsReport { steps, unmet_goals })
}

/// Structured feedback at a chosen level. The verdict is always the sound
/// one; the detail is what a verifier would reveal.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Feedback {
    pub verdict: bool,
    pub detail: FeedbackDetail,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FeedbackDetail {
    /// Level `none`: no message at all.
    Nothing,
    /// Just the verdict sentence; also used for valid plans at the richer
    /// levels, which have nothing further to report.
    Verdict,
    FirstError {
        index: usize,
        action: GroundAction,
        unmet_preconditions: BTreeSet<GroundAtom>,
    },
    UnmetGoals {
        unmet_goals: BTreeSet<GroundAtom>,
    },
    OpenConditions {
        steps: Vec<OpenStep>,
        unmet_goals: BTreeSet<GroundAtom>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FeedbackError {
    #[error("open-conditions feedback requires an open-conditions report")]
    MissingOpenConditions,
}

/// Selects the detail to reveal for `result` at `level`. `open` is required
/// exactly when `level` is [`FeedbackLevel::OpenConditions`].
pub fn render_feedback(
    result: &ValidationResult,
    open: Option<&OpenConditionsReport>,
    level: FeedbackLevel,
) -> Result<Feedback, FeedbackError> {
    let verdict = result.valid;
    let detail = match level {
        FeedbackLevel::None => FeedbackDetail::Nothing,
        FeedbackLevel::Binary => FeedbackDetail::Verdict,
        FeedbackLevel::FirstError => {
            if verdict {
                FeedbackDetail::Verdict
            } else if let Some(index) = result.first_error_index {
                let step = &result.trace[index];
                FeedbackDetail::FirstError {
                    index,
                    action: step.action.clone(),
                    unmet_preconditions: step.unmet_preconditions.clone(),
                }
            } else {
                FeedbackDetail::UnmetGoals {
                    unmet_goals: result.unmet_goals.clone(),
                }
            }
        }
        FeedbackLevel::OpenConditions => {
            let report = open.ok_or(FeedbackError::MissingOpenConditions)?;
            if verdict {
                FeedbackDetail::Verdict
            } else {
                FeedbackDetail::OpenConditions {
                    steps: report.steps.clone(),
                    unmet_goals: report.unmet_goals.clone(),
                }
            }
        }
    };
    Ok(Feedback { verdict, detail })
}

pub fn verdict_sentence(valid: bool) -> &'static str {
    if valid {
        "The plan is valid."
    } else {
        "The plan is invalid."
    }
}

/// Renders feedback as the English text a backprompt embeds. Levels beyond
/// `none` describe unmet atoms with the domain's phrase book; step numbers
/// are 1-based.
pub fn feedback_to_text(feedback: &Feedback, domain: &Domain) -> String {
    let book = nl::phrase_book_for(domain);
    let phrases =
        |atoms: &BTreeSet<GroundAtom>| nl::clause_list(atoms.iter().map(|a| book.atom(a)));
    match &feedback.detail {
        FeedbackDetail::Nothing => String::new(),
        FeedbackDetail::Verdict => verdict_sentence(feedback.verdict).to_owned(),
        FeedbackDetail::FirstError {
            index,
            action,
            unmet_preconditions,
        } => format!(
            "The plan is invalid. The first inexecutable action is action {}, {}. \
             The following preconditions are not satisfied: {}.",
            index + 1,
            action,
            phrases(unmet_preconditions)
        ),
        FeedbackDetail::UnmetGoals { unmet_goals } => format!(
            "The plan is invalid. All actions are executable, but the following goal \
             conditions are not satisfied: {}.",
            phrases(unmet_goals)
        ),
        FeedbackDetail::OpenConditions { steps, unmet_goals } => {
            let mut text = String::from("The plan is invalid.");
            for step in steps {
                text.push_str(&format!(
                    " Action {}, {}, has unsatisfied preconditions: {}.",
                    step.index + 1,
                    step.action,
                    phrases(&step.unmet_preconditions)
                ));
            }
            if !unmet_goals.is_empty() {
                text.push_str(&format!(
                    " The following goal conditions are not satisfied: {}.",
                    phrases(unmet_goals)
                ));
            }
            text
        }
    }
}
