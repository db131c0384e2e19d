//! Canonical text rendering for domains, problems, and plans.
//!
//! The output is deterministic (sets print in their sorted order) and parses
//! back to an equal value, which the round-trip tests rely on.

use std::fmt::Write;

use super::{Domain, Plan, Problem, SchemaAtom};

/// Variable names used when printing predicate declarations, which only
/// store arities. Predicates wider than the list get numbered variables.
const DECL_VARS: [&str; 6] = ["x", "y", "z", "u", "v", "w"];

fn decl_var(index: usize) -> String {
    DECL_VARS
        .get(index)
        .map(|v| (*v).to_owned())
        .unwrap_or_else(|| format!("x{index}"))
}

fn write_schema_atoms<'a>(out: &mut String, atoms: impl IntoIterator<Item = SchemaAtomRef<'a>>) {
    for atom in atoms {
        match atom {
            SchemaAtomRef::Positive(a) => {
                let _ = write!(out, " {a}");
            }
            SchemaAtomRef::Negated(a) => {
                let _ = write!(out, " (not {a})");
            }
        }
    }
}

enum SchemaAtomRef<'a> {
    Positive(&'a SchemaAtom),
    Negated(&'a SchemaAtom),
}

/// Renders a domain in the section order the parser requires.
pub fn print_domain(domain: &Domain) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "(define (domain {})", domain.name());
    let _ = writeln!(out, "  (:requirements :strips)");
    let _ = writeln!(out, "  (:predicates");
    let mut predicates = domain.predicates().peekable();
    while let Some((name, arity)) = predicates.next() {
        let _ = write!(out, "    ({name}");
        for i in 0..arity {
            let _ = write!(out, " ?{}", decl_var(i));
        }
        out.push(')');
        if predicates.peek().is_some() {
            out.push('\n');
        }
    }
    out.push_str(")\n");
    let mut actions = domain.actions().peekable();
    while let Some(schema) = actions.next() {
        let _ = writeln!(out, "  (:action {}", schema.name);
        let _ = write!(out, "    :parameters (");
        let params: Vec<String> = schema.params.iter().map(|p| format!("?{p}")).collect();
        out.push_str(&params.join(" "));
        out.push_str(")\n");
        out.push_str("    :precondition (and");
        write_schema_atoms(
            &mut out,
            schema.precondition.iter().map(SchemaAtomRef::Positive),
        );
        out.push_str(")\n");
        out.push_str("    :effect (and");
        write_schema_atoms(&mut out, schema.add.iter().map(SchemaAtomRef::Positive));
        write_schema_atoms(&mut out, schema.del.iter().map(SchemaAtomRef::Negated));
        out.push_str("))");
        if actions.peek().is_some() {
            out.push('\n');
        }
    }
    out.push_str(")\n");
    out
}

/// Renders a problem file for the domain it was validated against.
pub fn print_problem(problem: &Problem) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "(define (problem {})", problem.name());
    let _ = writeln!(out, "  (:domain {})", problem.domain_name());
    let objects: Vec<String> = problem.objects().map(|o| o.to_string()).collect();
    if objects.is_empty() {
        out.push_str("  (:objects)\n");
    } else {
        let _ = writeln!(out, "  (:objects {})", objects.join(" "));
    }
    out.push_str("  (:init");
    for atom in problem.init().atoms() {
        let _ = write!(out, " {atom}");
    }
    out.push_str(")\n");
    out.push_str("  (:goal (and");
    for atom in problem.goal() {
        let _ = write!(out, " {atom}");
    }
    out.push_str(")))\n");
    out
}

/// Renders a plan as one action per line. The empty plan renders as the
/// empty string, which parses back to an empty plan.
pub fn print_plan(plan: &Plan) -> String {
    let mut out = String::new();
    for step in &plan.steps {
        let _ = writeln!(out, "{step}");
    }
    out
}
