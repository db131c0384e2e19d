//! Data model, parser, printer, and execution semantics for an untyped
//! STRIPS subset of PDDL.
//!
//! The subset covers `:strips` only: positive conjunctive preconditions and
//! goals, add/delete effects, no types, no constants in action bodies, no
//! numeric fluents. States are closed-world sets of ground atoms.

mod parser;
mod printer;

pub use parser::{parse_domain, parse_plan, parse_problem, ParseError, ParseErrorKind};
pub use printer::{print_domain, print_plan, print_problem};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// A case-normalized PDDL name: predicate, action, object, or variable.
///
/// Symbols are nonempty, start with an ASCII letter, and contain only ASCII
/// letters, digits, `-`, and `_`. Input is folded to lowercase so that names
/// compare case-insensitively, as PDDL requires. Variables are stored without
/// their `?` sigil.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Symbol(Arc<str>);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid name `{0}`: expected a letter followed by letters, digits, `-`, or `_`")]
pub struct InvalidSymbol(pub String);

impl Symbol {
    pub fn new(text: &str) -> Result<Self, InvalidSymbol> {
        let mut chars = text.chars();
        let valid = matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
            && chars.all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
        if valid {
            Ok(Symbol(text.to_ascii_lowercase().into()))
        } else {
            Err(InvalidSymbol(text.to_owned()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &*self.0)
    }
}

impl FromStr for Symbol {
    type Err = InvalidSymbol;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Symbol::new(s)
    }
}

impl Serialize for Symbol {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Symbol {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        Symbol::new(&text).map_err(serde::de::Error::custom)
    }
}

/// A ground atom: a predicate applied to object names, written `(on a b)`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroundAtom {
    pub predicate: Symbol,
    pub args: Vec<Symbol>,
}

impl GroundAtom {
    pub fn new(predicate: Symbol, args: Vec<Symbol>) -> Self {
        GroundAtom { predicate, args }
    }
}

impl fmt::Display for GroundAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.predicate)?;
        for arg in &self.args {
            write!(f, " {arg}")?;
        }
        f.write_str(")")
    }
}

impl fmt::Debug for GroundAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl FromStr for GroundAtom {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (head, args) = parser::parse_parenthesized(s)?;
        Ok(GroundAtom::new(head, args))
    }
}

impl Serialize for GroundAtom {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for GroundAtom {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// An atom over action parameters, written `(on ?x ?y)` inside a schema.
///
/// Arguments name parameters of the enclosing [`ActionSchema`]; the `?` sigil
/// is not stored.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SchemaAtom {
    pub predicate: Symbol,
    pub args: Vec<Symbol>,
}

impl SchemaAtom {
    pub fn new(predicate: Symbol, args: Vec<Symbol>) -> Self {
        SchemaAtom { predicate, args }
    }

    /// Instantiates the atom by positional substitution of `args` for
    /// `params`. Every argument must name a parameter; [`Domain::new`]
    /// guarantees this for atoms of a validated schema.
    fn bind(&self, params: &[Symbol], args: &[Symbol]) -> GroundAtom {
        let bound = self
            .args
            .iter()
            .map(|v| {
                let at = params
                    .iter()
                    .position(|p| p == v)
                    .expect("schema atom argument names a parameter");
                args[at].clone()
            })
            .collect();
        GroundAtom::new(self.predicate.clone(), bound)
    }
}

impl fmt::Display for SchemaAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.predicate)?;
        for arg in &self.args {
            write!(f, " ?{arg}")?;
        }
        f.write_str(")")
    }
}

impl fmt::Debug for SchemaAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// A STRIPS action schema with positive preconditions and add/delete effects.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ActionSchema {
    pub name: Symbol,
    pub params: Vec<Symbol>,
    pub precondition: BTreeSet<SchemaAtom>,
    pub add: BTreeSet<SchemaAtom>,
    pub del: BTreeSet<SchemaAtom>,
}

/// A closed-world state: the set of ground atoms that are currently true.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Default, Hash)]
pub struct State {
    atoms: BTreeSet<GroundAtom>,
}

impl State {
    pub fn new() -> Self {
        State::default()
    }

    pub fn from_atoms<I: IntoIterator<Item = GroundAtom>>(atoms: I) -> Self {
        State {
            atoms: atoms.into_iter().collect(),
        }
    }

    pub fn contains(&self, atom: &GroundAtom) -> bool {
        self.atoms.contains(atom)
    }

    pub fn atoms(&self) -> impl Iterator<Item = &GroundAtom> {
        self.atoms.iter()
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }
}

impl fmt::Debug for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.atoms.iter()).finish()
    }
}

impl Serialize for State {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.atoms.iter())
    }
}

impl<'de> Deserialize<'de> for State {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let atoms = Vec::<GroundAtom>::deserialize(deserializer)?;
        Ok(State::from_atoms(atoms))
    }
}

/// A validated STRIPS domain: predicate declarations plus action schemas.
///
/// Values can only be built through [`Domain::new`] or the parser, so every
/// `Domain` is internally consistent: predicates are declared once, schema
/// atoms use declared predicates at the right arity, every variable is a
/// parameter, and no schema both adds and deletes the same atom.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Domain {
    name: Symbol,
    predicates: BTreeMap<Symbol, usize>,
    actions: BTreeMap<Symbol, ActionSchema>,
}

impl Domain {
    pub fn new(
        name: Symbol,
        predicates: impl IntoIterator<Item = (Symbol, usize)>,
        actions: impl IntoIterator<Item = ActionSchema>,
    ) -> Result<Self, ModelError> {
        let mut declared = BTreeMap::new();
        for (predicate, arity) in predicates {
            if declared.insert(predicate.clone(), arity).is_some() {
                return Err(ModelError::DuplicatePredicate(predicate));
            }
        }
        let mut validated = BTreeMap::new();
        for schema in actions {
            check_schema(&schema, &declared)?;
            let name = schema.name.clone();
            if validated.insert(name.clone(), schema).is_some() {
                return Err(ModelError::DuplicateAction(name));
            }
        }
        Ok(Domain {
            name,
            predicates: declared,
            actions: validated,
        })
    }

    pub fn name(&self) -> &Symbol {
        &self.name
    }

    /// Declared predicates with their arities, in name order.
    pub fn predicates(&self) -> impl Iterator<Item = (&Symbol, usize)> {
        self.predicates.iter().map(|(name, &arity)| (name, arity))
    }

    pub fn predicate_arity(&self, predicate: &Symbol) -> Option<usize> {
        self.predicates.get(predicate).copied()
    }

    pub fn action(&self, name: &Symbol) -> Option<&ActionSchema> {
        self.actions.get(name)
    }

    /// Action schemas in name order.
    pub fn actions(&self) -> impl Iterator<Item = &ActionSchema> {
        self.actions.values()
    }
}

fn check_schema(schema: &ActionSchema, declared: &BTreeMap<Symbol, usize>) -> Result<(), ModelError> {
    let mut seen = BTreeSet::new();
    for param in &schema.params {
        if !seen.insert(param) {
            return Err(ModelError::DuplicateParameter {
                action: schema.name.clone(),
                parameter: param.clone(),
            });
        }
    }
    let sets = [&schema.precondition, &schema.add, &schema.del];
    for atom in sets.iter().flat_map(|set| set.iter()) {
        let expected = declared
            .get(&atom.predicate)
            .copied()
            .ok_or_else(|| ModelError::UndeclaredPredicate(atom.predicate.clone()))?;
        if expected != atom.args.len() {
            return Err(ModelError::PredicateArity {
                predicate: atom.predicate.clone(),
                expected,
                got: atom.args.len(),
            });
        }
        for var in &atom.args {
            if !schema.params.contains(var) {
                return Err(ModelError::UnboundVariable {
                    action: schema.name.clone(),
                    variable: var.clone(),
                });
            }
        }
    }
    if let Some(atom) = schema.add.intersection(&schema.del).next() {
        return Err(ModelError::AddDeleteOverlap {
            action: schema.name.clone(),
            atom: atom.clone(),
        });
    }
    Ok(())
}

/// A validated planning problem: objects, initial state, and goal, all
/// checked against the domain they were built for.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Problem {
    name: Symbol,
    domain_name: Symbol,
    objects: BTreeSet<Symbol>,
    init: State,
    goal: BTreeSet<GroundAtom>,
}

impl Problem {
    pub fn new(
        name: Symbol,
        domain: &Domain,
        objects: impl IntoIterator<Item = Symbol>,
        init: State,
        goal: impl IntoIterator<Item = GroundAtom>,
    ) -> Result<Self, ModelError> {
        let problem = Problem {
            name,
            domain_name: domain.name().clone(),
            objects: objects.into_iter().collect(),
            init,
            goal: goal.into_iter().collect(),
        };
        for atom in problem.init.atoms().chain(problem.goal.iter()) {
            let expected = domain
                .predicate_arity(&atom.predicate)
                .ok_or_else(|| ModelError::UndeclaredPredicate(atom.predicate.clone()))?;
            if expected != atom.args.len() {
                return Err(ModelError::PredicateArity {
                    predicate: atom.predicate.clone(),
                    expected,
                    got: atom.args.len(),
                });
            }
            for arg in &atom.args {
                if !problem.objects.contains(arg) {
                    return Err(ModelError::UndeclaredObject(arg.clone()));
                }
            }
        }
        Ok(problem)
    }

    pub fn name(&self) -> &Symbol {
        &self.name
    }

    pub fn domain_name(&self) -> &Symbol {
        &self.domain_name
    }

    pub fn objects(&self) -> impl Iterator<Item = &Symbol> {
        self.objects.iter()
    }

    pub fn has_object(&self, object: &Symbol) -> bool {
        self.objects.contains(object)
    }

    pub fn init(&self) -> &State {
        &self.init
    }

    pub fn goal(&self) -> &BTreeSet<GroundAtom> {
        &self.goal
    }

    /// Checks that `action` names a schema of `domain` at the right arity and
    /// that all arguments are objects of this problem.
    pub fn check_grounding(&self, domain: &Domain, action: &GroundAction) -> Result<(), ModelError> {
        let schema = domain
            .action(&action.name)
            .ok_or_else(|| ModelError::UnknownAction(action.name.clone()))?;
        if schema.params.len() != action.args.len() {
            return Err(ModelError::ActionArity {
                action: action.name.clone(),
                expected: schema.params.len(),
                got: action.args.len(),
            });
        }
        for arg in &action.args {
            if !self.objects.contains(arg) {
                return Err(ModelError::UndeclaredObject(arg.clone()));
            }
        }
        Ok(())
    }
}

/// An action schema name applied to object arguments, written `(stack a b)`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroundAction {
    pub name: Symbol,
    pub args: Vec<Symbol>,
}

impl GroundAction {
    pub fn new(name: Symbol, args: Vec<Symbol>) -> Self {
        GroundAction { name, args }
    }
}

impl fmt::Display for GroundAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.name)?;
        for arg in &self.args {
            write!(f, " {arg}")?;
        }
        f.write_str(")")
    }
}

impl fmt::Debug for GroundAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl FromStr for GroundAction {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (head, args) = parser::parse_parenthesized(s)?;
        Ok(GroundAction::new(head, args))
    }
}

impl Serialize for GroundAction {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for GroundAction {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// A sequence of ground actions. The empty plan is a valid plan for any
/// problem whose goal already holds in the initial state.
#[derive(Clone, PartialEq, Eq, Default, Debug, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Plan {
    pub steps: Vec<GroundAction>,
}

impl Plan {
    pub fn new(steps: Vec<GroundAction>) -> Self {
        Plan { steps }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Violations of the STRIPS data model, raised both by construction of
/// domains and problems and by grounding of actions.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("duplicate predicate declaration `{0}`")]
    DuplicatePredicate(Symbol),
    #[error("duplicate action `{0}`")]
    DuplicateAction(Symbol),
    #[error("duplicate parameter `?{parameter}` in action `{action}`")]
    DuplicateParameter { action: Symbol, parameter: Symbol },
    #[error("predicate `{0}` is not declared")]
    UndeclaredPredicate(Symbol),
    #[error("predicate `{predicate}` takes {expected} argument(s), got {got}")]
    PredicateArity {
        predicate: Symbol,
        expected: usize,
        got: usize,
    },
    #[error("variable `?{variable}` in action `{action}` is not a parameter")]
    UnboundVariable { action: Symbol, variable: Symbol },
    #[error("`{atom}` appears in both add and delete effects of action `{action}`")]
    AddDeleteOverlap { action: Symbol, atom: SchemaAtom },
    #[error("object `{0}` is not declared")]
    UndeclaredObject(Symbol),
    #[error("unknown action `{0}`")]
    UnknownAction(Symbol),
    #[error("action `{action}` takes {expected} argument(s), got {got}")]
    ActionArity {
        action: Symbol,
        expected: usize,
        got: usize,
    },
}

/// The instantiated precondition, add, and delete sets of a ground action.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct GroundedOperator {
    pub precondition: BTreeSet<GroundAtom>,
    pub add: BTreeSet<GroundAtom>,
    pub del: BTreeSet<GroundAtom>,
}

/// Instantiates the schema named by `action` with the action's arguments.
///
/// Fails only if the action does not ground against `domain` (unknown schema
/// or wrong argument count); object declarations are the problem's concern,
/// see [`Problem::check_grounding`].
pub fn ground(domain: &Domain, action: &GroundAction) -> Result<GroundedOperator, ModelError> {
    let schema = domain
        .action(&action.name)
        .ok_or_else(|| ModelError::UnknownAction(action.name.clone()))?;
    if schema.params.len() != action.args.len() {
        return Err(ModelError::ActionArity {
            action: action.name.clone(),
            expected: schema.params.len(),
            got: action.args.len(),
        });
    }
    let instantiate = |set: &BTreeSet<SchemaAtom>| {
        set.iter()
            .map(|atom| atom.bind(&schema.params, &action.args))
            .collect()
    };
    Ok(GroundedOperator {
        precondition: instantiate(&schema.precondition),
        add: instantiate(&schema.add),
        del: instantiate(&schema.del),
    })
}

/// Whether every precondition of `action` holds in `state`, along with the
/// set of precondition atoms that do not hold.
pub fn applicable(
    domain: &Domain,
    state: &State,
    action: &GroundAction,
) -> Result<(bool, BTreeSet<GroundAtom>), ModelError> {
    let operator = ground(domain, action)?;
    let unmet: BTreeSet<GroundAtom> = operator
        .precondition
        .into_iter()
        .filter(|atom| !state.contains(atom))
        .collect();
    Ok((unmet.is_empty(), unmet))
}

/// Applies `action` to `state` unconditionally: deletes first, then adds, so
/// an atom a ground instance both deletes and adds ends up true.
///
/// `apply` is total over actions that ground: it does not require the
/// precondition to hold. Callers that need executability check
/// [`applicable`] first.
pub fn apply(domain: &Domain, state: &State, action: &GroundAction) -> Result<State, ModelError> {
    let operator = ground(domain, action)?;
    let atoms = state
        .atoms()
        .filter(|atom| !operator.del.contains(atom))
        .cloned()
        .chain(operator.add)
        .collect::<BTreeSet<_>>();
    Ok(State { atoms })
}

/// Whether every goal atom holds in `state`, along with the set of goal
/// atoms that do not hold.
pub fn satisfies(state: &State, goal: &BTreeSet<GroundAtom>) -> (bool, BTreeSet<GroundAtom>) {
    let unmet: BTreeSet<GroundAtom> = goal
        .iter()
        .filter(|atom| !state.contains(atom))
        .cloned()
        .collect();
    (unmet.is_empty(), unmet)
}

/// All argument tuples of length `arity` over `objects`, in lexicographic
/// order of object indices.
fn all_tuples(objects: &[Symbol], arity: usize) -> Vec<Vec<Symbol>> {
    let mut tuples = vec![Vec::new()];
    for _ in 0..arity {
        tuples = tuples
            .into_iter()
            .flat_map(|prefix| {
                objects.iter().map(move |obj| {
                    let mut next = prefix.clone();
                    next.push(obj.clone());
                    next
                })
            })
            .collect();
    }
    tuples
}

/// Every ground atom of `domain` over `objects`, sorted. The count grows as
/// `objects.len()` to the power of each predicate's arity, so this is meant
/// for small instances and tests.
pub fn all_ground_atoms(domain: &Domain, objects: &[Symbol]) -> Vec<GroundAtom> {
    let mut atoms: Vec<GroundAtom> = domain
        .predicates()
        .flat_map(|(predicate, arity)| {
            all_tuples(objects, arity)
                .into_iter()
                .map(move |args| GroundAtom::new(predicate.clone(), args))
        })
        .collect();
    atoms.sort();
    atoms
}

/// Every ground action of `domain` over `objects`, in lexicographic order of
/// `(name, args)`. This fixed order is what makes search and exhaustive
/// enumeration deterministic.
pub fn all_ground_actions(domain: &Domain, objects: &[Symbol]) -> Vec<GroundAction> {
    let mut actions: Vec<GroundAction> = domain
        .actions()
        .flat_map(|schema| {
            all_tuples(objects, schema.params.len())
                .into_iter()
                .map(move |args| GroundAction::new(schema.name.clone(), args))
        })
        .collect();
    actions.sort();
    actions
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sym(text: &str) -> Symbol {
        Symbol::new(text).unwrap()
    }

    fn atom(text: &str) -> GroundAtom {
        text.parse().unwrap()
    }

    fn act(text: &str) -> GroundAction {
        text.parse().unwrap()
    }

    fn toy_domain() -> Domain {
        let schema = ActionSchema {
            name: sym("flip"),
            params: vec![sym("x")],
            precondition: [SchemaAtom::new(sym("up"), vec![sym("x")])].into(),
            add: [SchemaAtom::new(sym("down"), vec![sym("x")])].into(),
            del: [SchemaAtom::new(sym("up"), vec![sym("x")])].into(),
        };
        Domain::new(sym("toy"), [(sym("up"), 1), (sym("down"), 1)], [schema]).unwrap()
    }

    #[test]
    fn symbols_fold_case_and_reject_bad_characters() {
        assert_eq!(sym("Stack-A_1").as_str(), "stack-a_1");
        assert_eq!(sym("ON"), sym("on"));
        for bad in ["", "1st", "-x", "a b", "a?", "é"] {
            assert!(Symbol::new(bad).is_err(), "accepted {bad:?}");
        }
    }

    #[test]
    fn ground_atom_text_round_trips() {
        let a = atom("(ON a B)");
        assert_eq!(a.to_string(), "(on a b)");
        assert_eq!(atom(" ( handempty ) ").to_string(), "(handempty)");
        assert!("(on a".parse::<GroundAtom>().is_err());
        assert!("on a b".parse::<GroundAtom>().is_err());
        assert!("()".parse::<GroundAtom>().is_err());
    }

    #[test]
    fn duplicate_predicate_is_rejected() {
        let err = Domain::new(sym("d"), [(sym("p"), 1), (sym("p"), 2)], []).unwrap_err();
        assert_eq!(err, ModelError::DuplicatePredicate(sym("p")));
    }

    #[test]
    fn schema_validation_catches_unbound_variables_and_arity() {
        let unbound = ActionSchema {
            name: sym("a"),
            params: vec![sym("x")],
            precondition: [SchemaAtom::new(sym("up"), vec![sym("y")])].into(),
            add: BTreeSet::new(),
            del: BTreeSet::new(),
        };
        let err = Domain::new(sym("d"), [(sym("up"), 1)], [unbound]).unwrap_err();
        assert_eq!(
            err,
            ModelError::UnboundVariable {
                action: sym("a"),
                variable: sym("y")
            }
        );

        let wrong_arity = ActionSchema {
            name: sym("a"),
            params: vec![sym("x")],
            precondition: [SchemaAtom::new(sym("up"), vec![sym("x"), sym("x")])].into(),
            add: BTreeSet::new(),
            del: BTreeSet::new(),
        };
        let err = Domain::new(sym("d"), [(sym("up"), 1)], [wrong_arity]).unwrap_err();
        assert!(matches!(err, ModelError::PredicateArity { expected: 1, got: 2, .. }));
    }

    #[test]
    fn schema_add_delete_overlap_is_rejected() {
        let overlapping = ActionSchema {
            name: sym("a"),
            params: vec![sym("x")],
            precondition: BTreeSet::new(),
            add: [SchemaAtom::new(sym("up"), vec![sym("x")])].into(),
            del: [SchemaAtom::new(sym("up"), vec![sym("x")])].into(),
        };
        let err = Domain::new(sym("d"), [(sym("up"), 1)], [overlapping]).unwrap_err();
        assert!(matches!(err, ModelError::AddDeleteOverlap { .. }));
    }

    #[test]
    fn problem_validation_catches_undeclared_objects_and_predicates() {
        let domain = toy_domain();
        let err = Problem::new(
            sym("p"),
            &domain,
            [sym("a")],
            State::from_atoms([atom("(up b)")]),
            [],
        )
        .unwrap_err();
        assert_eq!(err, ModelError::UndeclaredObject(sym("b")));

        let err = Problem::new(
            sym("p"),
            &domain,
            [sym("a")],
            State::new(),
            [atom("(sideways a)")],
        )
        .unwrap_err();
        assert_eq!(err, ModelError::UndeclaredPredicate(sym("sideways")));
    }

    #[test]
    fn apply_is_total_and_deletes_before_adding() {
        let domain = toy_domain();
        let up = State::from_atoms([atom("(up a)")]);

        // Precondition unmet: apply still rewrites the state.
        let down = State::from_atoms([atom("(down a)")]);
        let (ok, unmet) = applicable(&domain, &down, &act("(flip a)")).unwrap();
        assert!(!ok);
        assert_eq!(unmet, [atom("(up a)")].into());
        let after = apply(&domain, &down, &act("(flip a)")).unwrap();
        assert_eq!(after, down);

        let after = apply(&domain, &up, &act("(flip a)")).unwrap();
        assert_eq!(after, State::from_atoms([atom("(down a)")]));
    }

    #[test]
    fn add_wins_when_a_ground_instance_deletes_and_adds_the_same_atom() {
        // (swap ?x ?y) deletes (up ?x) and adds (up ?y); grounding with
        // x = y makes both sets contain (up a).
        let swap = ActionSchema {
            name: sym("swap"),
            params: vec![sym("x"), sym("y")],
            precondition: BTreeSet::new(),
            add: [SchemaAtom::new(sym("up"), vec![sym("y")])].into(),
            del: [SchemaAtom::new(sym("up"), vec![sym("x")])].into(),
        };
        let domain = Domain::new(sym("d"), [(sym("up"), 1)], [swap]).unwrap();
        let state = State::from_atoms([atom("(up a)")]);
        let after = apply(&domain, &state, &act("(swap a a)")).unwrap();
        assert!(after.contains(&atom("(up a)")));
    }

    #[test]
    fn grounding_errors_name_the_offending_action() {
        let domain = toy_domain();
        let err = ground(&domain, &act("(warp a)")).unwrap_err();
        assert_eq!(err, ModelError::UnknownAction(sym("warp")));
        let err = ground(&domain, &act("(flip a b)")).unwrap_err();
        assert_eq!(
            err,
            ModelError::ActionArity {
                action: sym("flip"),
                expected: 1,
                got: 2
            }
        );
    }

    #[test]
    fn ground_enumeration_is_sorted_and_complete() {
        let domain = toy_domain();
        let objects = vec![sym("b"), sym("a")];
        let atoms = all_ground_atoms(&domain, &objects);
        let rendered: Vec<String> = atoms.iter().map(|a| a.to_string()).collect();
        assert_eq!(rendered, vec!["(down a)", "(down b)", "(up a)", "(up b)"]);
        let actions = all_ground_actions(&domain, &objects);
        let rendered: Vec<String> = actions.iter().map(|a| a.to_string()).collect();
        assert_eq!(rendered, vec!["(flip a)", "(flip b)"]);
    }

    #[test]
    fn satisfies_reports_the_unmet_goal_atoms() {
        let state = State::from_atoms([atom("(up a)"), atom("(up b)")]);
        let (met, unmet) = satisfies(&state, &[atom("(up a)")].into());
        assert!(met);
        assert!(unmet.is_empty());
        let (met, unmet) = satisfies(&state, &[atom("(up a)"), atom("(down a)")].into());
        assert!(!met);
        assert_eq!(unmet, [atom("(down a)")].into());
        // The empty goal holds in any state.
        let (met, _) = satisfies(&State::new(), &BTreeSet::new());
        assert!(met);
    }
}
