//! English rendering of atoms, domains, and problems, shared by verifier
//! feedback and prompt construction so both speak the same language.

use std::collections::BTreeMap;

use crate::pddl::{Domain, GroundAtom, Problem, SchemaAtom, Symbol};

/// Sentence templates per predicate; `{0}`, `{1}`, ... are argument slots.
/// Atoms without a template fall back to their PDDL text, so unknown domains
/// still produce usable (if dry) descriptions.
#[derive(Clone, Debug, Default)]
pub struct PhraseBook {
    templates: BTreeMap<Symbol, String>,
}

impl PhraseBook {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Phrasing for the built-in Blocksworld predicates.
    pub fn blocksworld() -> Self {
        let mut book = PhraseBook::empty();
        for (predicate, template) in [
            ("on", "block {0} is on block {1}"),
            ("ontable", "block {0} is on the table"),
            ("clear", "block {0} is clear"),
            ("holding", "the hand is holding block {0}"),
            ("handempty", "the hand is empty"),
        ] {
            book.insert(
                Symbol::new(predicate).expect("static predicate name"),
                template.to_owned(),
            );
        }
        book
    }

    pub fn insert(&mut self, predicate: Symbol, template: String) {
        self.templates.insert(predicate, template);
    }

    pub fn atom(&self, atom: &GroundAtom) -> String {
        match self.templates.get(&atom.predicate) {
            Some(template) => fill(template, atom.args.iter().map(|a| a.to_string())),
            None => atom.to_string(),
        }
    }

    /// Schema atoms keep the `?` sigil so variables stay recognizable.
    pub fn schema_atom(&self, atom: &SchemaAtom) -> String {
        match self.templates.get(&atom.predicate) {
            Some(template) => fill(template, atom.args.iter().map(|a| format!("?{a}"))),
            None => atom.to_string(),
        }
    }
}

fn fill(template: &str, args: impl Iterator<Item = String>) -> String {
    let mut text = template.to_owned();
    for (i, arg) in args.enumerate() {
        text = text.replace(&format!("{{{i}}}"), &arg);
    }
    text
}

/// The phrase book appropriate for `domain`: Blocksworld phrasing for the
/// built-in domain, raw PDDL text otherwise.
pub fn phrase_book_for(domain: &Domain) -> PhraseBook {
    if domain.name().as_str() == crate::blocksworld::DOMAIN_NAME {
        PhraseBook::blocksworld()
    } else {
        PhraseBook::empty()
    }
}

/// Joins already-phrased clauses with `; `, or `(nothing)` for the empty
/// list, so callers never emit a dangling colon.
pub fn clause_list<I: IntoIterator<Item = String>>(phrases: I) -> String {
    let phrases: Vec<String> = phrases.into_iter().collect();
    if phrases.is_empty() {
        "(nothing)".to_owned()
    } else {
        phrases.join("; ")
    }
}

/// A deterministic English description of every action in the domain.
pub fn describe_domain(domain: &Domain, book: &PhraseBook) -> String {
    let mut out = format!(
        "The domain is {}. The available actions are listed below.\n",
        domain.name()
    );
    for schema in domain.actions() {
        let params: Vec<String> = schema.params.iter().map(|p| format!("?{p}")).collect();
        let head = if params.is_empty() {
            format!("({})", schema.name)
        } else {
            format!("({} {})", schema.name, params.join(" "))
        };
        out.push('\n');
        out.push_str(&format!("Action {head}:\n"));
        out.push_str(&format!(
            "  requires: {}\n",
            clause_list(schema.precondition.iter().map(|a| book.schema_atom(a)))
        ));
        out.push_str(&format!(
            "  makes true: {}\n",
            clause_list(schema.add.iter().map(|a| book.schema_atom(a)))
        ));
        out.push_str(&format!(
            "  makes false: {}\n",
            clause_list(schema.del.iter().map(|a| book.schema_atom(a)))
        ));
    }
    out
}

/// A deterministic English description of a problem's initial state and goal.
pub fn describe_problem(problem: &Problem, book: &PhraseBook) -> String {
    let init = clause_list(problem.init().atoms().map(|a| book.atom(a)));
    let goal = clause_list(problem.goal().iter().map(|a| book.atom(a)));
    format!("Initial state: {init}.\nGoal: {goal}.\n")
}
