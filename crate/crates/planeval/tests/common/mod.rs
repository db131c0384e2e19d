//! Brute-force reference semantics for the acceptance suite.
//!
//! Everything here is deliberately written against the grain of the library:
//! atoms are plain rendered strings, states are sorted `Vec<String>` with
//! linear membership scans, and schema binding is redone from scratch by
//! positional lookup over the parameter list. The point is to have a second,
//! independent opinion about what a plan does, so none of the library's
//! validator internals are reused.

use std::collections::BTreeMap;

use planeval::pddl::{Domain, GroundAction, GroundAtom, Plan, Symbol};

/// A ground atom rendered as `(pred a b)`. The same spelling the library
/// prints, rebuilt here from raw parts so the comparison does not lean on
/// the library's `Display` impl.
pub type Fact = String;

pub fn show<'a, I: IntoIterator<Item = &'a str>>(head: &str, args: I) -> Fact {
    let mut out = String::from("(");
    out.push_str(head);
    for arg in args {
        out.push(' ');
        out.push_str(arg);
    }
    out.push(')');
    out
}

pub fn fact_of(atom: &GroundAtom) -> Fact {
    show(
        atom.predicate.as_str(),
        atom.args.iter().map(|arg| arg.as_str()),
    )
}

/// Renders and sorts a collection of library atoms for comparison against
/// oracle output.
pub fn facts<'a, I: IntoIterator<Item = &'a GroundAtom>>(atoms: I) -> Vec<Fact> {
    let mut out: Vec<Fact> = atoms.into_iter().map(fact_of).collect();
    out.sort();
    out
}

/// One ground operator: precondition, add, and delete lists as facts.
pub struct OracleOp {
    pub pre: Vec<Fact>,
    pub add: Vec<Fact>,
    pub del: Vec<Fact>,
}

/// Every ground operator of a domain over a fixed object set, keyed by the
/// rendered action head `(stack a b)`. Argument tuples range over all
/// objects with repetition; nonsense bindings are left for the precondition
/// check to reject, exactly as the library's grounding does.
pub struct OracleDomain {
    ops: BTreeMap<String, OracleOp>,
}

impl OracleDomain {
    pub fn op(&self, action: &GroundAction) -> &OracleOp {
        let key = show(
            action.name.as_str(),
            action.args.iter().map(|arg| arg.as_str()),
        );
        self.ops
            .get(&key)
            .unwrap_or_else(|| panic!("no ground operator for {key}"))
    }
}

pub fn oracle_domain(domain: &Domain, objects: &[Symbol]) -> OracleDomain {
    let names: Vec<&str> = objects.iter().map(|o| o.as_str()).collect();
    let mut ops = BTreeMap::new();
    for schema in domain.actions() {
        let params: Vec<&str> = schema.params.iter().map(|p| p.as_str()).collect();
        for args in tuples(&names, params.len()) {
            let bind = |var: &str| -> &str {
                let at = params
                    .iter()
                    .position(|p| *p == var)
                    .unwrap_or_else(|| panic!("unbound schema variable ?{var}"));
                args[at]
            };
            let ground = |atoms: &std::collections::BTreeSet<planeval::pddl::SchemaAtom>| {
                let mut out: Vec<Fact> = atoms
                    .iter()
                    .map(|atom| {
                        show(
                            atom.predicate.as_str(),
                            atom.args.iter().map(|v| bind(v.as_str())),
                        )
                    })
                    .collect();
                out.sort();
                out
            };
            let key = show(schema.name.as_str(), args.iter().copied());
            ops.insert(
                key,
                OracleOp {
                    pre: ground(&schema.precondition),
                    add: ground(&schema.add),
                    del: ground(&schema.del),
                },
            );
        }
    }
    OracleDomain { ops }
}

/// All argument tuples of the given length over `names`, with repetition.
fn tuples<'a>(names: &[&'a str], len: usize) -> Vec<Vec<&'a str>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                names.iter().map(move |name| {
                    let mut next = prefix.clone();
                    next.push(*name);
                    next
                })
            })
            .collect();
    }
    out
}

fn holds(state: &[Fact], fact: &Fact) -> bool {
    state.iter().any(|f| f == fact)
}

fn missing_from(state: &[Fact], wanted: &[Fact]) -> Vec<Fact> {
    wanted
        .iter()
        .filter(|fact| !holds(state, fact))
        .cloned()
        .collect()
}

/// One step of the optimistic walk: the state it saw, whether it could run,
/// and which preconditions it was missing.
pub struct SimStep {
    pub applicable: bool,
    pub unmet: Vec<Fact>,
    pub before: Vec<Fact>,
}

/// The oracle's full account of a plan. Sound-regime answers (`valid`,
/// `executable`, `first_error`, `unmet_goals`) come from halting at the
/// first inapplicable step; the per-step trace and `final_state` come from
/// the optimistic walk that applies every effect regardless.
pub struct Sim {
    pub valid: bool,
    pub executable: bool,
    pub first_error: Option<usize>,
    /// Goal atoms false in the sound halt state.
    pub unmet_goals: Vec<Fact>,
    pub steps: Vec<SimStep>,
    /// Optimistic state after the whole plan.
    pub final_state: Vec<Fact>,
    /// Goal atoms false in the optimistic final state.
    pub optimistic_unmet_goals: Vec<Fact>,
}

pub fn simulate(od: &OracleDomain, init: &[Fact], goal: &[Fact], plan: &Plan) -> Sim {
    let mut state: Vec<Fact> = init.to_vec();
    state.sort();
    state.dedup();

    let mut steps = Vec::with_capacity(plan.steps.len());
    let mut first_error = None;
    for (index, action) in plan.steps.iter().enumerate() {
        let op = od.op(action);
        let unmet = missing_from(&state, &op.pre);
        if !unmet.is_empty() && first_error.is_none() {
            first_error = Some(index);
        }
        steps.push(SimStep {
            applicable: unmet.is_empty(),
            unmet,
            before: state.clone(),
        });
        state.retain(|fact| !holds(&op.del, fact));
        for fact in &op.add {
            if !holds(&state, fact) {
                state.push(fact.clone());
            }
        }
        state.sort();
    }

    let final_state = state;
    let halt_state = match first_error {
        Some(index) => &steps[index].before,
        None => &final_state,
    };
    let unmet_goals = missing_from(halt_state, goal);
    let optimistic_unmet_goals = missing_from(&final_state, goal);
    let executable = first_error.is_none();
    Sim {
        valid: executable && unmet_goals.is_empty(),
        executable,
        first_error,
        unmet_goals,
        steps,
        final_state,
        optimistic_unmet_goals,
    }
}

/// Length of a shortest action sequence from `init` to a state satisfying
/// `goal`, found by breadth-first search over oracle states. `None` if no
/// solution exists within `max_depth` steps.
pub fn shortest_solution(
    od: &OracleDomain,
    init: &[Fact],
    goal: &[Fact],
    max_depth: usize,
) -> Option<usize> {
    let mut start: Vec<Fact> = init.to_vec();
    start.sort();
    start.dedup();
    if missing_from(&start, goal).is_empty() {
        return Some(0);
    }
    let mut visited: std::collections::BTreeSet<Vec<Fact>> = std::collections::BTreeSet::new();
    visited.insert(start.clone());
    let mut frontier = vec![start];
    for depth in 1..=max_depth {
        let mut next_frontier = Vec::new();
        for state in &frontier {
            for op in od.ops.values() {
                if !missing_from(state, &op.pre).is_empty() {
                    continue;
                }
                let mut next: Vec<Fact> = state
                    .iter()
                    .filter(|fact| !holds(&op.del, fact))
                    .cloned()
                    .collect();
                for fact in &op.add {
                    if !holds(&next, fact) {
                        next.push(fact.clone());
                    }
                }
                next.sort();
                if !visited.insert(next.clone()) {
                    continue;
                }
                if missing_from(&next, goal).is_empty() {
                    return Some(depth);
                }
                next_frontier.push(next);
            }
        }
        frontier = next_frontier;
        if frontier.is_empty() {
            break;
        }
    }
    None
}

/// All hand-empty configurations of the named blocks, each rendered as the
/// full fact set (`ontable`/`on`/`clear`/`handempty`). Enumerated by brute
/// force over support assignments: every block rests on the table or on
/// exactly one distinct block, supports are injective, and support chains
/// terminate at the table.
pub fn all_configurations(blocks: &[&str]) -> Vec<Vec<Fact>> {
    const TABLE: usize = usize::MAX;
    let n = blocks.len();
    let mut out = Vec::new();
    let mut supports = vec![TABLE; n];
    loop {
        if consistent(&supports) {
            out.push(render_configuration(blocks, &supports));
        }
        // Odometer over support choices: TABLE, then each other block.
        let mut i = 0;
        loop {
            if i == n {
                out.sort();
                return out;
            }
            supports[i] = match supports[i] {
                TABLE => 0,
                prev => prev + 1,
            };
            if supports[i] == i {
                supports[i] += 1;
            }
            if supports[i] < n {
                break;
            }
            supports[i] = TABLE;
            i += 1;
        }
    }

    fn consistent(supports: &[usize]) -> bool {
        let n = supports.len();
        for i in 0..n {
            for j in 0..i {
                if supports[i] != TABLE && supports[i] == supports[j] {
                    return false;
                }
            }
            let mut hops = 0;
            let mut at = i;
            while supports[at] != TABLE {
                at = supports[at];
                hops += 1;
                if hops > n {
                    return false;
                }
            }
        }
        true
    }

    fn render_configuration(blocks: &[&str], supports: &[usize]) -> Vec<Fact> {
        let n = blocks.len();
        let mut facts = vec![show("handempty", [])];
        for i in 0..n {
            if supports[i] == TABLE {
                facts.push(show("ontable", [blocks[i]]));
            } else {
                facts.push(show("on", [blocks[i], blocks[supports[i]]]));
            }
            if (0..n).all(|j| supports[j] != i) {
                facts.push(show("clear", [blocks[i]]));
            }
        }
        facts.sort();
        facts
    }
}

/// The goal view of a configuration: only the `on`/`ontable` facts, which
/// pin the arrangement down completely.
pub fn goal_view(configuration: &[Fact]) -> Vec<Fact> {
    configuration
        .iter()
        .filter(|fact| fact.starts_with("(on ") || fact.starts_with("(ontable "))
        .cloned()
        .collect()
}
