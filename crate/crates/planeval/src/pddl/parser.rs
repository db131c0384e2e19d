//! Hand-rolled recursive-descent parser for the STRIPS subset.
//!
//! Errors carry a 1-based line and column. Everything outside the subset is
//! rejected with an `Unsupported` error naming the feature, so callers can
//! tell "bad input" from "valid PDDL we do not handle".

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use super::{
    check_schema, ActionSchema, Domain, GroundAction, GroundAtom, InvalidSymbol, ModelError, Plan,
    Problem, SchemaAtom, State, Symbol,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}, column {col}: {kind}")]
pub struct ParseError {
    pub line: u32,
    pub col: u32,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("expected {expected}, found {found}")]
    Unexpected { expected: String, found: String },
    #[error(transparent)]
    InvalidName(#[from] InvalidSymbol),
    #[error("expected a variable like `?x`, found `{0}`")]
    ExpectedVariable(String),
    #[error("expected an object name, found variable `?{0}`")]
    UnexpectedVariable(String),
    #[error("unsupported PDDL feature: {0}")]
    Unsupported(String),
    #[error("negation is only allowed inside action effects")]
    NegationOutsideEffect,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Open,
    Close,
    Word(String),
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Open => "`(`".to_owned(),
            Tok::Close => "`)`".to_owned(),
            Tok::Word(w) => format!("`{w}`"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Pos {
    line: u32,
    col: u32,
}

/// Splits `src` into parentheses and whitespace-delimited words, folding
/// words to lowercase. `;` starts a comment running to end of line.
fn tokenize(src: &str, first_line: u32) -> Vec<(Tok, Pos)> {
    let mut toks = Vec::new();
    let mut line = first_line;
    let mut col = 1u32;
    let mut chars = src.chars().peekable();
    while let Some(&c) = chars.peek() {
        match c {
            '\n' => {
                chars.next();
                line += 1;
                col = 1;
            }
            _ if c.is_whitespace() => {
                chars.next();
                col += 1;
            }
            ';' => {
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    chars.next();
                    col += 1;
                }
            }
            '(' | ')' => {
                let tok = if c == '(' { Tok::Open } else { Tok::Close };
                toks.push((tok, Pos { line, col }));
                chars.next();
                col += 1;
            }
            _ => {
                let start = Pos { line, col };
                let mut word = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_whitespace() || c == '(' || c == ')' || c == ';' {
                        break;
                    }
                    word.push(c);
                    chars.next();
                    col += 1;
                }
                toks.push((Tok::Word(word.to_ascii_lowercase()), start));
            }
        }
    }
    toks
}

struct P {
    toks: Vec<(Tok, Pos)>,
    at: usize,
    end: Pos,
}

impl P {
    fn new(src: &str, first_line: u32) -> Self {
        let toks = tokenize(src, first_line);
        let end = toks
            .last()
            .map(|(tok, pos)| {
                let width = match tok {
                    Tok::Word(w) => w.chars().count() as u32,
                    _ => 1,
                };
                Pos {
                    line: pos.line,
                    col: pos.col + width,
                }
            })
            .unwrap_or(Pos {
                line: first_line,
                col: 1,
            });
        P { toks, at: 0, end }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|(tok, _)| tok)
    }

    fn pos(&self) -> Pos {
        self.toks.get(self.at).map(|&(_, pos)| pos).unwrap_or(self.end)
    }

    fn advance(&mut self) -> Option<(Tok, Pos)> {
        let item = self.toks.get(self.at).cloned();
        if item.is_some() {
            self.at += 1;
        }
        item
    }

    fn err(&self, kind: ParseErrorKind) -> ParseError {
        self.err_at(self.pos(), kind)
    }

    fn err_at(&self, pos: Pos, kind: ParseErrorKind) -> ParseError {
        ParseError {
            line: pos.line,
            col: pos.col,
            kind,
        }
    }

    fn unexpected(&self, expected: &str) -> ParseError {
        let found = self
            .peek()
            .map(Tok::describe)
            .unwrap_or_else(|| "end of input".to_owned());
        self.err(ParseErrorKind::Unexpected {
            expected: expected.to_owned(),
            found,
        })
    }

    fn expect_open(&mut self, expected: &str) -> Result<Pos, ParseError> {
        match self.peek() {
            Some(Tok::Open) => Ok(self.advance().unwrap().1),
            _ => Err(self.unexpected(expected)),
        }
    }

    fn expect_close(&mut self, expected: &str) -> Result<(), ParseError> {
        match self.peek() {
            Some(Tok::Close) => {
                self.advance();
                Ok(())
            }
            _ => Err(self.unexpected(expected)),
        }
    }

    fn expect_keyword(&mut self, keyword: &str) -> Result<(), ParseError> {
        match self.peek() {
            Some(Tok::Word(w)) if w == keyword => {
                self.advance();
                Ok(())
            }
            _ => Err(self.unexpected(&format!("`{keyword}`"))),
        }
    }

    fn expect_end(&self, expected: &str) -> Result<(), ParseError> {
        if self.peek().is_some() {
            return Err(self.unexpected(expected));
        }
        Ok(())
    }

    fn word(&mut self, expected: &str) -> Result<(String, Pos), ParseError> {
        match self.peek() {
            Some(Tok::Word(_)) => {
                let (tok, pos) = self.advance().unwrap();
                match tok {
                    Tok::Word(w) => Ok((w, pos)),
                    _ => unreachable!(),
                }
            }
            _ => Err(self.unexpected(expected)),
        }
    }

    /// A plain name: predicate, action, object, or domain/problem name.
    fn symbol(&mut self, expected: &str) -> Result<Symbol, ParseError> {
        let (word, pos) = self.word(expected)?;
        if let Some(stripped) = word.strip_prefix('?') {
            return Err(self.err_at(pos, ParseErrorKind::UnexpectedVariable(stripped.to_owned())));
        }
        if word == "-" {
            return Err(self.err_at(pos, ParseErrorKind::Unsupported("`-` type annotations (:typing)".to_owned())));
        }
        Symbol::new(&word).map_err(|e| self.err_at(pos, e.into()))
    }

    /// A `?`-prefixed variable; the sigil is stripped.
    fn variable(&mut self, expected: &str) -> Result<Symbol, ParseError> {
        let (word, pos) = self.word(expected)?;
        if word == "-" {
            return Err(self.err_at(pos, ParseErrorKind::Unsupported("`-` type annotations (:typing)".to_owned())));
        }
        let Some(name) = word.strip_prefix('?') else {
            return Err(self.err_at(pos, ParseErrorKind::ExpectedVariable(word)));
        };
        Symbol::new(name).map_err(|e| self.err_at(pos, e.into()))
    }

    fn at_open(&self) -> bool {
        matches!(self.peek(), Some(Tok::Open))
    }

    fn at_word(&self) -> bool {
        matches!(self.peek(), Some(Tok::Word(_)))
    }
}

/// Condition heads that are valid PDDL but outside the subset.
fn check_condition_head(p: &P, head: &str, pos: Pos) -> Result<(), ParseError> {
    match head {
        "not" => Err(p.err_at(pos, ParseErrorKind::NegationOutsideEffect)),
        "or" | "imply" | "exists" | "forall" | "when" => Err(p.err_at(
            pos,
            ParseErrorKind::Unsupported(format!("`{head}` conditions (:adl)")),
        )),
        "=" => Err(p.err_at(pos, ParseErrorKind::Unsupported("`=` (:equality)".to_owned()))),
        _ => Ok(()),
    }
}

/// `(pred ?v ...)` with variable arguments only.
fn schema_atom(p: &mut P) -> Result<SchemaAtom, ParseError> {
    p.expect_open("`(` starting an atom")?;
    let pos = p.pos();
    let (head, _) = p.word("a predicate name")?;
    check_condition_head(p, &head, pos)?;
    let head = Symbol::new(&head).map_err(|e| p.err_at(pos, e.into()))?;
    let mut args = Vec::new();
    while p.at_word() {
        args.push(p.variable("a variable or `)`")?);
    }
    p.expect_close("`)` ending the atom")?;
    Ok(SchemaAtom::new(head, args))
}

/// `(and atom*)`, a bare atom, or `()`; atoms over variables.
fn schema_condition(p: &mut P) -> Result<Vec<SchemaAtom>, ParseError> {
    p.expect_open("`(` starting a condition")?;
    match p.peek() {
        Some(Tok::Close) => {
            p.advance();
            Ok(Vec::new())
        }
        Some(Tok::Word(w)) if w == "and" => {
            p.advance();
            let mut atoms = Vec::new();
            while p.at_open() {
                atoms.push(schema_atom(p)?);
            }
            p.expect_close("an atom or `)` ending the conjunction")?;
            Ok(atoms)
        }
        Some(Tok::Word(_)) => {
            let pos = p.pos();
            let (head, _) = p.word("a predicate name")?;
            check_condition_head(p, &head, pos)?;
            let head = Symbol::new(&head).map_err(|e| p.err_at(pos, e.into()))?;
            let mut args = Vec::new();
            while p.at_word() {
                args.push(p.variable("a variable or `)`")?);
            }
            p.expect_close("`)` ending the atom")?;
            Ok(vec![SchemaAtom::new(head, args)])
        }
        _ => Err(p.unexpected("`and` or a predicate name")),
    }
}

/// `(and lit*)`, a bare literal, or `()`; literals are atoms or `(not atom)`.
fn schema_effect(p: &mut P) -> Result<(Vec<SchemaAtom>, Vec<SchemaAtom>), ParseError> {
    let mut add = Vec::new();
    let mut del = Vec::new();
    p.expect_open("`(` starting an effect")?;
    match p.peek() {
        Some(Tok::Close) => {
            p.advance();
        }
        Some(Tok::Word(w)) if w == "and" => {
            p.advance();
            while p.at_open() {
                effect_literal(p, &mut add, &mut del)?;
            }
            p.expect_close("a literal or `)` ending the conjunction")?;
        }
        Some(Tok::Word(w)) if w == "not" => {
            p.advance();
            del.push(schema_atom(p)?);
            p.expect_close("`)` ending the negation")?;
        }
        Some(Tok::Word(_)) => {
            let pos = p.pos();
            let (head, _) = p.word("a predicate name")?;
            check_effect_head(p, &head, pos)?;
            let head = Symbol::new(&head).map_err(|e| p.err_at(pos, e.into()))?;
            let mut args = Vec::new();
            while p.at_word() {
                args.push(p.variable("a variable or `)`")?);
            }
            p.expect_close("`)` ending the atom")?;
            add.push(SchemaAtom::new(head, args));
        }
        _ => return Err(p.unexpected("`and`, `not`, or a predicate name")),
    }
    Ok((add, del))
}

fn check_effect_head(p: &P, head: &str, pos: Pos) -> Result<(), ParseError> {
    match head {
        "when" | "forall" => Err(p.err_at(
            pos,
            ParseErrorKind::Unsupported(format!("`{head}` effects (:adl)")),
        )),
        "increase" | "decrease" | "assign" | "scale-up" | "scale-down" => Err(p.err_at(
            pos,
            ParseErrorKind::Unsupported(format!("`{head}` effects (:numeric-fluents)")),
        )),
        _ => Ok(()),
    }
}

/// One literal inside an `(and ...)` effect.
fn effect_literal(
    p: &mut P,
    add: &mut Vec<SchemaAtom>,
    del: &mut Vec<SchemaAtom>,
) -> Result<(), ParseError> {
    p.expect_open("`(` starting a literal")?;
    match p.peek() {
        Some(Tok::Word(w)) if w == "not" => {
            p.advance();
            del.push(schema_atom(p)?);
            p.expect_close("`)` ending the negation")?;
        }
        Some(Tok::Word(_)) => {
            let pos = p.pos();
            let (head, _) = p.word("a predicate name")?;
            check_effect_head(p, &head, pos)?;
            let head = Symbol::new(&head).map_err(|e| p.err_at(pos, e.into()))?;
            let mut args = Vec::new();
            while p.at_word() {
                args.push(p.variable("a variable or `)`")?);
            }
            p.expect_close("`)` ending the atom")?;
            add.push(SchemaAtom::new(head, args));
        }
        _ => return Err(p.unexpected("`not` or a predicate name")),
    }
    Ok(())
}

/// Parses a domain file. Sections must appear in the order `:requirements`
/// (optional), `:predicates` (optional), then `:action` sections.
pub fn parse_domain(src: &str) -> Result<Domain, ParseError> {
    let mut p = P::new(src, 1);
    p.expect_open("`(define`")?;
    p.expect_keyword("define")?;
    p.expect_open("`(domain`")?;
    p.expect_keyword("domain")?;
    let name = p.symbol("a domain name")?;
    p.expect_close("`)` after the domain name")?;

    let mut predicates: BTreeMap<Symbol, usize> = BTreeMap::new();
    let mut actions: Vec<ActionSchema> = Vec::new();
    let mut seen_requirements = false;
    let mut seen_predicates = false;

    loop {
        match p.peek() {
            Some(Tok::Close) => break,
            Some(Tok::Open) => {}
            _ => return Err(p.unexpected("a domain section or `)`")),
        }
        let section_pos = p.expect_open("`(` starting a domain section")?;
        let (keyword, keyword_pos) = p.word("a section keyword like `:action`")?;
        match keyword.as_str() {
            ":requirements" => {
                if seen_requirements || seen_predicates || !actions.is_empty() {
                    return Err(p.err_at(
                        keyword_pos,
                        ParseErrorKind::Unexpected {
                            expected: "a single `:requirements` section before `:predicates`".to_owned(),
                            found: "`:requirements`".to_owned(),
                        },
                    ));
                }
                seen_requirements = true;
                while p.at_word() {
                    let (req, pos) = p.word("a requirement")?;
                    if req != ":strips" {
                        return Err(p.err_at(pos, ParseErrorKind::Unsupported(format!("requirement {req}"))));
                    }
                }
                p.expect_close("a requirement or `)`")?;
            }
            ":predicates" => {
                if seen_predicates || !actions.is_empty() {
                    return Err(p.err_at(
                        keyword_pos,
                        ParseErrorKind::Unexpected {
                            expected: "a single `:predicates` section before any `:action`".to_owned(),
                            found: "`:predicates`".to_owned(),
                        },
                    ));
                }
                seen_predicates = true;
                while p.at_open() {
                    p.expect_open("`(` starting a predicate declaration")?;
                    let pos = p.pos();
                    let head = p.symbol("a predicate name")?;
                    let mut arity = 0;
                    while p.at_word() {
                        p.variable("a variable or `)`")?;
                        arity += 1;
                    }
                    p.expect_close("`)` ending the predicate declaration")?;
                    if predicates.insert(head.clone(), arity).is_some() {
                        return Err(p.err_at(pos, ModelError::DuplicatePredicate(head).into()));
                    }
                }
                p.expect_close("a predicate declaration or `)`")?;
            }
            ":action" => {
                let action_name = p.symbol("an action name")?;
                p.expect_keyword(":parameters")?;
                p.expect_open("`(` starting the parameter list")?;
                let mut params = Vec::new();
                while p.at_word() {
                    params.push(p.variable("a variable or `)`")?);
                }
                p.expect_close("`)` ending the parameter list")?;
                p.expect_keyword(":precondition")?;
                let precondition = schema_condition(&mut p)?;
                p.expect_keyword(":effect")?;
                let (add, del) = schema_effect(&mut p)?;
                p.expect_close("`)` ending the action")?;

                if actions.iter().any(|a| a.name == action_name) {
                    return Err(p.err_at(section_pos, ModelError::DuplicateAction(action_name).into()));
                }
                let schema = ActionSchema {
                    name: action_name,
                    params,
                    precondition: precondition.into_iter().collect(),
                    add: add.into_iter().collect(),
                    del: del.into_iter().collect(),
                };
                check_schema(&schema, &predicates).map_err(|e| p.err_at(section_pos, e.into()))?;
                actions.push(schema);
            }
            ":types" | ":constants" | ":functions" => {
                return Err(p.err_at(keyword_pos, ParseErrorKind::Unsupported(format!("section {keyword}"))));
            }
            _ => return Err(p.unexpected("`:requirements`, `:predicates`, or `:action`")),
        }
    }
    p.expect_close("`)` ending the domain")?;
    p.expect_end("end of input after the domain")?;

    // The parser has already validated everything with positions, so this
    // final construction cannot fail.
    Domain::new(name, predicates, actions).map_err(|e| ParseError {
        line: 1,
        col: 1,
        kind: e.into(),
    })
}

/// `(pred obj ...)` with object arguments only; returns the start position
/// for follow-up validation errors.
fn ground_atom(p: &mut P) -> Result<(GroundAtom, Pos), ParseError> {
    let pos = p.expect_open("`(` starting an atom")?;
    let head_pos = p.pos();
    let (head, _) = p.word("a predicate name")?;
    if head == "not" {
        return Err(p.err_at(head_pos, ParseErrorKind::NegationOutsideEffect));
    }
    check_condition_head(p, &head, head_pos)?;
    let head = Symbol::new(&head).map_err(|e| p.err_at(head_pos, e.into()))?;
    let mut args = Vec::new();
    while p.at_word() {
        args.push(p.symbol("an object name or `)`")?);
    }
    p.expect_close("`)` ending the atom")?;
    Ok((GroundAtom::new(head, args), pos))
}

fn check_ground_atom(
    p: &P,
    domain: &Domain,
    objects: &[Symbol],
    atom: &GroundAtom,
    pos: Pos,
) -> Result<(), ParseError> {
    let expected = domain
        .predicate_arity(&atom.predicate)
        .ok_or_else(|| p.err_at(pos, ModelError::UndeclaredPredicate(atom.predicate.clone()).into()))?;
    if expected != atom.args.len() {
        return Err(p.err_at(
            pos,
            ModelError::PredicateArity {
                predicate: atom.predicate.clone(),
                expected,
                got: atom.args.len(),
            }
            .into(),
        ));
    }
    for arg in &atom.args {
        if !objects.contains(arg) {
            return Err(p.err_at(pos, ModelError::UndeclaredObject(arg.clone()).into()));
        }
    }
    Ok(())
}

/// Parses a problem file against its domain. Sections must appear in the
/// order `:domain`, `:objects`, `:init`, `:goal`.
pub fn parse_problem(src: &str, domain: &Domain) -> Result<Problem, ParseError> {
    let mut p = P::new(src, 1);
    p.expect_open("`(define`")?;
    p.expect_keyword("define")?;
    p.expect_open("`(problem`")?;
    p.expect_keyword("problem")?;
    let name = p.symbol("a problem name")?;
    p.expect_close("`)` after the problem name")?;

    p.expect_open("`(:domain`")?;
    p.expect_keyword(":domain")?;
    let domain_name = p.symbol("a domain name")?;
    p.expect_close("`)` after the domain name")?;

    p.expect_open("`(:objects`")?;
    p.expect_keyword(":objects")?;
    let mut objects = Vec::new();
    while p.at_word() {
        objects.push(p.symbol("an object name or `)`")?);
    }
    p.expect_close("an object name or `)`")?;

    p.expect_open("`(:init`")?;
    p.expect_keyword(":init")?;
    let mut init = Vec::new();
    while p.at_open() {
        let (atom, pos) = ground_atom(&mut p)?;
        check_ground_atom(&p, domain, &objects, &atom, pos)?;
        init.push(atom);
    }
    p.expect_close("an atom or `)`")?;

    p.expect_open("`(:goal`")?;
    p.expect_keyword(":goal")?;
    let goal = ground_condition(&mut p, domain, &objects)?;
    p.expect_close("`)` ending the goal section")?;

    p.expect_close("`)` ending the problem")?;
    p.expect_end("end of input after the problem")?;

    let _ = domain_name;
    let init = State::from_atoms(init);
    // Atoms were validated with positions above, so this cannot fail.
    Problem::new(name, domain, objects, init, goal).map_err(|e| ParseError {
        line: 1,
        col: 1,
        kind: e.into(),
    })
}

/// `(and atom*)`, a bare atom, or `()`; atoms over objects.
fn ground_condition(
    p: &mut P,
    domain: &Domain,
    objects: &[Symbol],
) -> Result<Vec<GroundAtom>, ParseError> {
    p.expect_open("`(` starting the goal condition")?;
    match p.peek() {
        Some(Tok::Close) => {
            p.advance();
            Ok(Vec::new())
        }
        Some(Tok::Word(w)) if w == "and" => {
            p.advance();
            let mut atoms = Vec::new();
            while p.at_open() {
                let (atom, pos) = ground_atom(p)?;
                check_ground_atom(p, domain, objects, &atom, pos)?;
                atoms.push(atom);
            }
            p.expect_close("an atom or `)` ending the conjunction")?;
            Ok(atoms)
        }
        Some(Tok::Word(_)) => {
            let head_pos = p.pos();
            let (head, _) = p.word("a predicate name")?;
            if head == "not" {
                return Err(p.err_at(head_pos, ParseErrorKind::NegationOutsideEffect));
            }
            check_condition_head(p, &head, head_pos)?;
            let head = Symbol::new(&head).map_err(|e| p.err_at(head_pos, e.into()))?;
            let mut args = Vec::new();
            while p.at_word() {
                args.push(p.symbol("an object name or `)`")?);
            }
            p.expect_close("`)` ending the atom")?;
            let atom = GroundAtom::new(head, args);
            check_ground_atom(p, domain, objects, &atom, head_pos)?;
            Ok(vec![atom])
        }
        _ => Err(p.unexpected("`and` or a predicate name")),
    }
}

/// Parses a plan file: one `(action obj ...)` per line, `;` comments and
/// blank lines allowed. Every action is checked against the domain and the
/// problem's objects.
pub fn parse_plan(src: &str, domain: &Domain, problem: &Problem) -> Result<Plan, ParseError> {
    let mut steps = Vec::new();
    for (idx, raw_line) in src.lines().enumerate() {
        let line_no = idx as u32 + 1;
        let mut p = P::new(raw_line, line_no);
        if p.peek().is_none() {
            continue;
        }
        p.expect_open("`(` starting an action")?;
        let name = p.symbol("an action name")?;
        let mut args = Vec::new();
        while p.at_word() {
            args.push(p.symbol("an object name or `)`")?);
        }
        p.expect_close("`)` ending the action")?;
        p.expect_end("end of line after the action")?;
        let action = GroundAction::new(name, args);
        problem
            .check_grounding(domain, &action)
            .map_err(|e| ParseError {
                line: line_no,
                col: 1,
                kind: e.into(),
            })?;
        steps.push(action);
    }
    Ok(Plan::new(steps))
}

/// Shared `FromStr` body for `(head arg ...)` forms.
pub(super) fn parse_parenthesized(src: &str) -> Result<(Symbol, Vec<Symbol>), ParseError> {
    let mut p = P::new(src, 1);
    p.expect_open("`(`")?;
    let head = p.symbol("a name")?;
    let mut args = Vec::new();
    while p.at_word() {
        args.push(p.symbol("a name or `)`")?);
    }
    p.expect_close("`)`")?;
    p.expect_end("end of input")?;
    Ok((head, args))
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.describe())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY: &str = "\
(define (domain toy)
  (:requirements :strips)
  (:predicates (up ?x) (down ?x) (linked ?x ?y))
  (:action flip
    :parameters (?x)
    :precondition (up ?x)
    :effect (and (down ?x) (not (up ?x)))))";

    fn sym(text: &str) -> Symbol {
        Symbol::new(text).unwrap()
    }

    fn kind_of(err: ParseError) -> ParseErrorKind {
        err.kind
    }

    #[test]
    fn parses_a_minimal_domain() {
        let domain = parse_domain(TOY).unwrap();
        assert_eq!(domain.name(), &sym("toy"));
        assert_eq!(domain.predicate_arity(&sym("linked")), Some(2));
        let flip = domain.action(&sym("flip")).unwrap();
        assert_eq!(flip.params, vec![sym("x")]);
        assert_eq!(flip.precondition.len(), 1);
        assert_eq!(flip.add.len(), 1);
        assert_eq!(flip.del.len(), 1);
    }

    #[test]
    fn keywords_and_names_are_case_insensitive() {
        let shouty = TOY.to_uppercase().replace("?X", "?x");
        let domain = parse_domain(&shouty).unwrap();
        assert_eq!(domain.name(), &sym("toy"));
        assert!(domain.action(&sym("flip")).is_some());
    }

    #[test]
    fn comments_are_ignored() {
        let src = format!("; a toy domain\n{}\n; trailing comment", TOY);
        assert!(parse_domain(&src).is_ok());
    }

    #[test]
    fn unsupported_features_are_named() {
        let typed = TOY.replace(":strips", ":strips :typing");
        match kind_of(parse_domain(&typed).unwrap_err()) {
            ParseErrorKind::Unsupported(what) => assert!(what.contains(":typing")),
            other => panic!("unexpected error {other:?}"),
        }

        let negated = TOY.replace(":precondition (up ?x)", ":precondition (not (up ?x))");
        assert_eq!(
            kind_of(parse_domain(&negated).unwrap_err()),
            ParseErrorKind::NegationOutsideEffect
        );

        let disjunctive = TOY.replace(":precondition (up ?x)", ":precondition (or (up ?x))");
        assert!(matches!(
            kind_of(parse_domain(&disjunctive).unwrap_err()),
            ParseErrorKind::Unsupported(_)
        ));
    }

    #[test]
    fn errors_carry_positions() {
        let err = parse_domain("(define (domain toy)\n  (:predicates (up ?x) (up ?x))\n)").unwrap_err();
        assert_eq!((err.line, err.col), (2, 25));
        assert_eq!(err.kind, ParseErrorKind::Model(ModelError::DuplicatePredicate(sym("up"))));
    }

    #[test]
    fn section_order_is_enforced() {
        let out_of_order = "\
(define (domain toy)
  (:action noop :parameters () :precondition (and) :effect (and))
  (:predicates (up ?x)))";
        assert!(parse_domain(out_of_order).is_err());
    }

    fn toy_problem_src() -> String {
        "(define (problem p1)
  (:domain toy)
  (:objects a b)
  (:init (up a) (linked a b))
  (:goal (and (down a))))"
            .to_owned()
    }

    #[test]
    fn parses_a_problem_against_its_domain() {
        let domain = parse_domain(TOY).unwrap();
        let problem = parse_problem(&toy_problem_src(), &domain).unwrap();
        assert_eq!(problem.name(), &sym("p1"));
        assert_eq!(problem.objects().count(), 2);
        assert_eq!(problem.init().len(), 2);
        assert_eq!(problem.goal().len(), 1);
    }

    #[test]
    fn problem_validation_is_positioned() {
        let domain = parse_domain(TOY).unwrap();
        let bad_object = toy_problem_src().replace("(up a)", "(up c)");
        let err = parse_problem(&bad_object, &domain).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::Model(ModelError::UndeclaredObject(sym("c"))));
        assert_eq!(err.line, 4);

        let bad_arity = toy_problem_src().replace("(linked a b)", "(linked a)");
        let err = parse_problem(&bad_arity, &domain).unwrap_err();
        assert!(matches!(
            err.kind,
            ParseErrorKind::Model(ModelError::PredicateArity { expected: 2, got: 1, .. })
        ));

        let negated_goal = toy_problem_src().replace("(and (down a))", "(and (not (up a)))");
        let err = parse_problem(&negated_goal, &domain).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::NegationOutsideEffect);
    }

    #[test]
    fn goal_forms_accept_bare_atoms_and_empty_conjunctions() {
        let domain = parse_domain(TOY).unwrap();
        let bare = toy_problem_src().replace("(and (down a))", "(down a)");
        assert_eq!(parse_problem(&bare, &domain).unwrap().goal().len(), 1);
        let empty = toy_problem_src().replace("(and (down a))", "(and)");
        assert!(parse_problem(&empty, &domain).unwrap().goal().is_empty());
        let unit = toy_problem_src().replace("(and (down a))", "()");
        assert!(parse_problem(&unit, &domain).unwrap().goal().is_empty());
    }

    #[test]
    fn plans_parse_per_line_with_grounding_checks() {
        let domain = parse_domain(TOY).unwrap();
        let problem = parse_problem(&toy_problem_src(), &domain).unwrap();

        let plan = parse_plan("; solution\n(flip a)\n\n(flip b) ; done\n", &domain, &problem).unwrap();
        assert_eq!(plan.len(), 2);
        assert_eq!(plan.steps[0].to_string(), "(flip a)");

        let err = parse_plan("(flip a)\n(warp a)", &domain, &problem).unwrap_err();
        assert_eq!(err.line, 2);
        assert_eq!(err.kind, ParseErrorKind::Model(ModelError::UnknownAction(sym("warp"))));

        let err = parse_plan("(flip c)", &domain, &problem).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::Model(ModelError::UndeclaredObject(sym("c"))));

        let err = parse_plan("(flip a b)", &domain, &problem).unwrap_err();
        assert_eq!(
            err.kind,
            ParseErrorKind::Model(ModelError::ActionArity {
                action: sym("flip"),
                expected: 1,
                got: 2
            })
        );

        let err = parse_plan("(flip a) (flip b)", &domain, &problem).unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::Unexpected { .. }));

        assert!(parse_plan("", &domain, &problem).unwrap().is_empty());
    }
}
