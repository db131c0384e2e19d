//! Byte-for-byte golden tests for rendered prompts.
//!
//! Transcripts are compared byte-identically across runs, so any drift in
//! prompt rendering is a breaking change. These fixtures pin the exact text
//! produced by the built-in templates for a small two-block problem pair.

use planeval::blocksworld;
use planeval::pddl::{parse_plan, parse_problem, Domain, Plan, Problem};
use planeval::prompt::{backprompt, generation_prompt, verification_prompt, TemplateSet};

fn fixtures() -> (Domain, Problem, Plan, Problem) {
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
         (:goal (and (ontable a) (ontable b))))",
        &domain,
    )
    .unwrap();
    (domain, example, example_plan, query)
}

#[test]
fn generation_prompt_matches_golden_file() {
    let (domain, example, example_plan, query) = fixtures();
    let bundle = generation_prompt(
        TemplateSet::builtin(),
        &domain,
        &example,
        &example_plan,
        &query,
    )
    .unwrap();
    assert_eq!(bundle.user_text, include_str!("golden/generation_user.txt"));
}

#[test]
fn verification_prompt_matches_golden_file() {
    let (domain, _, _, query) = fixtures();
    let plan = parse_plan("(unstack b a)\n(putdown b)\n", &domain, &query).unwrap();
    let bundle = verification_prompt(TemplateSet::builtin(), &domain, &query, &plan).unwrap();
    assert_eq!(
        bundle.user_text,
        include_str!("golden/verification_user.txt")
    );
}

#[test]
fn backprompt_matches_golden_file() {
    let (domain, _, _, query) = fixtures();
    let feedback = "The plan is invalid. The first inexecutable action is action 1, \
                    (pickup a). The following preconditions are not satisfied: \
                    block a is clear.";
    let bundle = backprompt(TemplateSet::builtin(), &domain, &query, feedback).unwrap();
    assert_eq!(bundle.user_text, include_str!("golden/backprompt_user.txt"));
}
