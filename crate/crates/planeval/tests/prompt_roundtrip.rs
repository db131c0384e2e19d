//! Property: a plan printed in canonical form survives being wrapped in
//! prose, bullets, and enumerators, and parses back to exactly itself.

use planeval::blocksworld::{self, InstanceSpec};
use planeval::pddl::{all_ground_actions, Plan};
use planeval::prompt::parse_plan_response;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn embedded_plans_round_trip(
        n_blocks in 2usize..=5,
        seed in 0u64..10_000,
        picks in prop::collection::vec(0usize..1000, 0..6),
        style in 0usize..4,
        lead in 0usize..3,
        trail in 0usize..3,
    ) {
        let domain = blocksworld::domain();
        let spec = InstanceSpec { id: "case".to_owned(), n_blocks, seed };
        let problem = blocksworld::random_instance(&spec).unwrap();
        let objects: Vec<_> = problem.objects().cloned().collect();
        let actions = all_ground_actions(&domain, &objects);
        let plan = Plan::new(
            picks.iter().map(|p| actions[p % actions.len()].clone()).collect(),
        );

        let leads = [
            "",
            "Let me think about the towers first.\n\nThe goal needs work.\n",
            "Plan attempt: (this one should work)\n",
        ];
        let trails = ["", "\nThat should reach the goal.", "\nDone."];
        let mut body = String::new();
        if plan.is_empty() {
            body.push_str("; no actions needed\n");
        } else {
            for (i, step) in plan.steps.iter().enumerate() {
                match style {
                    0 => body.push_str(&format!("{step}\n")),
                    1 => body.push_str(&format!("{}. {step}\n", i + 1)),
                    2 => body.push_str(&format!("- {step}\n")),
                    _ => body.push_str(&format!("{}) {step}.\n", i + 1)),
                }
            }
        }
        let text = format!("{}{}{}", leads[lead], body, trails[trail]);

        let parsed = parse_plan_response(&text, &domain, &problem).unwrap();
        prop_assert_eq!(parsed, plan);
    }
}
