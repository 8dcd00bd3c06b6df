//! Safety/liveness formulas over configurations.
//!
//! A formula is a quantifier prefix over finite carriers followed by a
//! propositional body of event atoms (`event op(args) -> result`) and
//! evaluation atoms (`request(a, c, ACT, {i}) == EFFECT`).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::asm::{Config, EventResult, Value};
use crate::ids::{AgentId, CoalitionId, Information};
use crate::policy::{Action, Effect};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Sort {
    Information,
    Agent,
    Coalition,
}

impl Sort {
    pub fn keyword(self) -> &'static str {
        match self {
            Sort::Information => "INFORMATION",
            Sort::Agent => "AGENT",
            Sort::Coalition => "COALITION",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        match s {
            "INFORMATION" => Some(Sort::Information),
            "AGENT" => Some(Sort::Agent),
            "COALITION" => Some(Sort::Coalition),
            _ => None,
        }
    }
}

impl fmt::Display for Sort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum QuantKind {
    Exists,
    Forall,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Quantifier {
    pub kind: QuantKind,
    pub var: String,
    pub sort: Sort,
}

/// A name (variable when quantified, constant otherwise) or `_`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Term {
    Name(String),
    Wildcard,
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Name(n) => f.write_str(n),
            Term::Wildcard => f.write_str("_"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Atom {
    /// An event with this operation and matching arguments/result occurred.
    Event {
        op: String,
        args: Vec<Term>,
        result: Option<Term>,
    },
    /// `request_info` against the config's state returns `expected`.
    Eval {
        agent: Term,
        coalition: Term,
        action: Action,
        infos: Vec<Term>,
        expected: Effect,
    },
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::Event { op, args, result } => {
                let args: Vec<String> = args.iter().map(ToString::to_string).collect();
                write!(f, "event {op}({})", args.join(", "))?;
                if let Some(r) = result {
                    write!(f, " -> {r}")?;
                }
                Ok(())
            }
            Atom::Eval {
                agent,
                coalition,
                action,
                infos,
                expected,
            } => {
                let infos: Vec<String> = infos.iter().map(ToString::to_string).collect();
                write!(
                    f,
                    "request({agent}, {coalition}, {action}, {{{}}}) == {expected}",
                    infos.join(", ")
                )
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Expr {
    Atom(Atom),
    Not(Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Implies(Box<Expr>, Box<Expr>),
}

impl Expr {
    fn precedence(&self) -> u8 {
        match self {
            Expr::Implies(..) => 0,
            Expr::And(..) => 1,
            Expr::Not(_) | Expr::Atom(_) => 2,
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        let parens = self.precedence() < min;
        if parens {
            f.write_str("(")?;
        }
        match self {
            Expr::Atom(a) => write!(f, "{a}")?,
            Expr::Not(e) => {
                f.write_str("not ")?;
                e.fmt_prec(f, 2)?;
            }
            Expr::And(a, b) => {
                a.fmt_prec(f, 1)?;
                f.write_str(" and ")?;
                b.fmt_prec(f, 2)?;
            }
            Expr::Implies(a, b) => {
                a.fmt_prec(f, 1)?;
                f.write_str(" implies ")?;
                b.fmt_prec(f, 0)?;
            }
        }
        if parens {
            f.write_str(")")?;
        }
        Ok(())
    }

    fn atoms<'a>(&'a self, out: &mut Vec<&'a Atom>) {
        match self {
            Expr::Atom(a) => out.push(a),
            Expr::Not(e) => e.atoms(out),
            Expr::And(a, b) | Expr::Implies(a, b) => {
                a.atoms(out);
                b.atoms(out);
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Formula {
    pub quantifiers: Vec<Quantifier>,
    pub body: Expr,
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for q in &self.quantifiers {
            let kw = match q.kind {
                QuantKind::Exists => "exists",
                QuantKind::Forall => "forall",
            };
            write!(f, "{kw} {}:{} . ", q.var, q.sort)?;
        }
        write!(f, "{}", self.body)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormulaError {
    #[error("variable `{var}` of sort {declared} is used where {expected} is required")]
    SortMismatch {
        var: String,
        declared: Sort,
        expected: Sort,
    },
    #[error("variable `{0}` is quantified twice")]
    DuplicateVariable(String),
    #[error("`_` is not allowed in request atoms")]
    WildcardInRequest,
}

pub type Assignment = Vec<(String, Value)>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FormulaOutcome {
    pub holds: bool,
    /// Values chosen for the leading existential variables when `holds`.
    pub assignment: Assignment,
}

impl Formula {
    /// The negation with quantifiers dualized: `exists x. B` becomes
    /// `forall x. not B`.
    pub fn dual(&self) -> Formula {
        Formula {
            quantifiers: self
                .quantifiers
                .iter()
                .map(|q| Quantifier {
                    kind: match q.kind {
                        QuantKind::Exists => QuantKind::Forall,
                        QuantKind::Forall => QuantKind::Exists,
                    },
                    ..q.clone()
                })
                .collect(),
            body: Expr::Not(Box::new(self.body.clone())),
        }
    }

    pub fn sort_of(&self, var: &str) -> Option<Sort> {
        self.quantifiers
            .iter()
            .find(|q| q.var == var)
            .map(|q| q.sort)
    }

    /// Checks quantifier uniqueness and that every variable is used at its sort.
    pub fn check(&self) -> Result<(), FormulaError> {
        let mut seen = BTreeSet::new();
        for q in &self.quantifiers {
            if !seen.insert(q.var.as_str()) {
                return Err(FormulaError::DuplicateVariable(q.var.clone()));
            }
        }
        let expect = |t: &Term, expected: Sort| -> Result<(), FormulaError> {
            match t {
                Term::Wildcard => Err(FormulaError::WildcardInRequest),
                Term::Name(n) => match self.sort_of(n) {
                    Some(declared) if declared != expected => Err(FormulaError::SortMismatch {
                        var: n.clone(),
                        declared,
                        expected,
                    }),
                    _ => Ok(()),
                },
            }
        };
        let mut atoms = Vec::new();
        self.body.atoms(&mut atoms);
        for atom in atoms {
            if let Atom::Eval {
                agent,
                coalition,
                infos,
                ..
            } = atom
            {
                expect(agent, Sort::Agent)?;
                expect(coalition, Sort::Coalition)?;
                for i in infos {
                    expect(i, Sort::Information)?;
                }
            }
        }
        Ok(())
    }
}

/// Values a variable of `sort` ranges over in `cfg`, in canonical order.
pub fn carrier(cfg: &Config, sort: Sort) -> Vec<Value> {
    match sort {
        Sort::Information => {
            let mut items = cfg.state.all_information();
            items.extend(cfg.minted().cloned());
            items.into_iter().map(Value::Info).collect()
        }
        Sort::Agent => cfg
            .state
            .agents()
            .keys()
            .cloned()
            .map(Value::Agent)
            .collect(),
        Sort::Coalition => cfg
            .state
            .coalitions()
            .keys()
            .cloned()
            .map(Value::Coalition)
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tri {
    True,
    False,
    Unknown,
}

impl Tri {
    fn not(self) -> Tri {
        match self {
            Tri::True => Tri::False,
            Tri::False => Tri::True,
            Tri::Unknown => Tri::Unknown,
        }
    }

    fn and(self, other: Tri) -> Tri {
        match (self, other) {
            (Tri::False, _) | (_, Tri::False) => Tri::False,
            (Tri::True, Tri::True) => Tri::True,
            _ => Tri::Unknown,
        }
    }

    fn from_bool(b: bool) -> Tri {
        if b {
            Tri::True
        } else {
            Tri::False
        }
    }
}

struct Evaluator<'a> {
    formula: &'a Formula,
    cfg: &'a Config,
    vars: BTreeSet<&'a str>,
    carriers: Vec<Vec<Value>>,
}

fn value_name(v: &Value) -> Option<String> {
    match v {
        Value::Infos(_) => None,
        other => Some(other.to_string()),
    }
}

impl<'a> Evaluator<'a> {
    fn new(formula: &'a Formula, cfg: &'a Config) -> Self {
        Self {
            formula,
            cfg,
            vars: formula.quantifiers.iter().map(|q| q.var.as_str()).collect(),
            carriers: formula
                .quantifiers
                .iter()
                .map(|q| carrier(cfg, q.sort))
                .collect(),
        }
    }

    /// `None` when the term is a variable that is not yet assigned.
    fn term_matches(
        &self,
        term: &Term,
        value: &Value,
        env: &BTreeMap<&str, Value>,
    ) -> Option<bool> {
        match term {
            Term::Wildcard => Some(true),
            Term::Name(n) if self.vars.contains(n.as_str()) => {
                env.get(n.as_str()).map(|v| v == value)
            }
            Term::Name(n) => Some(value_name(value).as_deref() == Some(n.as_str())),
        }
    }

    fn lookup<'e>(
        &self,
        term: &'e Term,
        env: &'e BTreeMap<&str, Value>,
    ) -> Option<Result<&'e Value, &'e str>> {
        match term {
            Term::Wildcard => None,
            Term::Name(n) if self.vars.contains(n.as_str()) => env.get(n.as_str()).map(Ok),
            Term::Name(n) => Some(Err(n.as_str())),
        }
    }

    fn atom(&self, atom: &Atom, env: &BTreeMap<&str, Value>) -> Tri {
        match atom {
            Atom::Event { op, args, result } => {
                let mut verdict = Tri::False;
                for e in self
                    .cfg
                    .history
                    .iter()
                    .filter(|e| &e.op == op && e.args.len() == args.len())
                {
                    let mut t = Tri::True;
                    for (term, value) in args.iter().zip(&e.args) {
                        t = t.and(match self.term_matches(term, value, env) {
                            Some(b) => Tri::from_bool(b),
                            None => Tri::Unknown,
                        });
                    }
                    if let Some(r) = result {
                        t = t.and(match &e.result {
                            EventResult::Value(v) => match self.term_matches(r, v, env) {
                                Some(b) => Tri::from_bool(b),
                                None => Tri::Unknown,
                            },
                            _ => Tri::False,
                        });
                    }
                    match t {
                        Tri::True => return Tri::True,
                        Tri::Unknown => verdict = Tri::Unknown,
                        Tri::False => {}
                    }
                }
                verdict
            }
            Atom::Eval {
                agent,
                coalition,
                action,
                infos,
                expected,
            } => {
                let agent = match self.lookup(agent, env) {
                    None => return Tri::Unknown,
                    Some(Ok(Value::Agent(a))) => a.clone(),
                    Some(Ok(_)) => return Tri::False,
                    Some(Err(name)) => match AgentId::new(name) {
                        Ok(a) => a,
                        Err(_) => return Tri::False,
                    },
                };
                let coalition = match self.lookup(coalition, env) {
                    None => return Tri::Unknown,
                    Some(Ok(Value::Coalition(c))) => c.clone(),
                    Some(Ok(_)) => return Tri::False,
                    Some(Err(name)) => match CoalitionId::new(name) {
                        Ok(c) => c,
                        Err(_) => return Tri::False,
                    },
                };
                let mut items = BTreeSet::new();
                for term in infos {
                    match self.lookup(term, env) {
                        None => return Tri::Unknown,
                        Some(Ok(Value::Info(i))) => {
                            items.insert(i.clone());
                        }
                        Some(Ok(_)) => return Tri::False,
                        Some(Err(name)) => match Information::new(name) {
                            Ok(i) => {
                                items.insert(i);
                            }
                            Err(_) => return Tri::False,
                        },
                    }
                }
                match self
                    .cfg
                    .state
                    .request_info(&agent, &coalition, *action, &items)
                {
                    Ok(effect) => Tri::from_bool(effect == *expected),
                    Err(_) => Tri::False,
                }
            }
        }
    }

    fn expr(&self, expr: &Expr, env: &BTreeMap<&str, Value>) -> Tri {
        match expr {
            Expr::Atom(a) => self.atom(a, env),
            Expr::Not(e) => self.expr(e, env).not(),
            Expr::And(a, b) => {
                let left = self.expr(a, env);
                if left == Tri::False {
                    return Tri::False;
                }
                left.and(self.expr(b, env))
            }
            Expr::Implies(a, b) => {
                let left = self.expr(a, env);
                if left == Tri::False {
                    return Tri::True;
                }
                left.and(self.expr(b, env).not()).not()
            }
        }
    }

    /// Value of quantifiers `from..` over a body that is constant `body`.
    fn constant_chain(&self, from: usize, body: bool) -> (bool, Assignment) {
        let mut value = body;
        for i in (from..self.formula.quantifiers.len()).rev() {
            if self.carriers[i].is_empty() {
                value = self.formula.quantifiers[i].kind == QuantKind::Forall;
            }
        }
        let mut witness = Vec::new();
        if value {
            for i in from..self.formula.quantifiers.len() {
                let q = &self.formula.quantifiers[i];
                if q.kind != QuantKind::Exists {
                    break;
                }
                witness.push((q.var.clone(), self.carriers[i][0].clone()));
            }
        }
        (value, witness)
    }

    fn search(&self, i: usize, env: &mut BTreeMap<&'a str, Value>) -> (bool, Assignment) {
        let quants = &self.formula.quantifiers;
        if i == quants.len() {
            return (self.expr(&self.formula.body, env) == Tri::True, Vec::new());
        }
        let q = &quants[i];
        let mut result = match q.kind {
            QuantKind::Exists => (false, Vec::new()),
            QuantKind::Forall => (true, Vec::new()),
        };
        for value in &self.carriers[i] {
            env.insert(q.var.as_str(), value.clone());
            let (holds, inner) = match self.expr(&self.formula.body, env) {
                Tri::True => self.constant_chain(i + 1, true),
                Tri::False => self.constant_chain(i + 1, false),
                Tri::Unknown => self.search(i + 1, env),
            };
            match q.kind {
                QuantKind::Exists if holds => {
                    let mut witness = vec![(q.var.clone(), value.clone())];
                    witness.extend(inner);
                    result = (true, witness);
                    break;
                }
                QuantKind::Forall if !holds => {
                    result = (false, Vec::new());
                    break;
                }
                _ => {}
            }
        }
        env.remove(q.var.as_str());
        result
    }
}

/// Evaluates `f` at `cfg`. On success the outcome carries the first satisfying
/// assignment (canonical carrier order) for the leading existential variables.
pub fn eval_formula(f: &Formula, cfg: &Config) -> Result<FormulaOutcome, FormulaError> {
    f.check()?;
    let ev = Evaluator::new(f, cfg);
    let (holds, assignment) = ev.search(0, &mut BTreeMap::new());
    Ok(FormulaOutcome {
        holds,
        assignment: if holds { assignment } else { Vec::new() },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asm::{Event, NodeKind, TerminalOutcome, Workflow, WorkflowNode};
    use crate::coalition::CoalitionState;
    use crate::ids::NodeId;

    fn cfg_with(history: Vec<Event>) -> Config {
        let w = Workflow::new(
            [WorkflowNode {
                id: NodeId::new("end").unwrap(),
                kind: NodeKind::Terminal {
                    outcome: TerminalOutcome::Success,
                    message: String::new(),
                },
            }],
            NodeId::new("end").unwrap(),
        );
        let mut cfg = Config::initial(&w, CoalitionState::new());
        cfg.history = history;
        cfg
    }

    fn exists(var: &str, sort: Sort) -> Quantifier {
        Quantifier {
            kind: QuantKind::Exists,
            var: var.into(),
            sort,
        }
    }

    #[test]
    fn empty_history_event_is_false() {
        let f = Formula {
            quantifiers: vec![exists("x", Sort::Information)],
            body: Expr::Atom(Atom::Event {
                op: "createHA".into(),
                args: vec![Term::Name("compB".into()), Term::Name("x".into())],
                result: Some(Term::Wildcard),
            }),
        };
        let out = eval_formula(&f, &cfg_with(vec![])).unwrap();
        assert!(!out.holds);
        assert!(out.assignment.is_empty());
    }

    #[test]
    fn sort_mismatch_detected() {
        let f = Formula {
            quantifiers: vec![exists("x", Sort::Information)],
            body: Expr::Atom(Atom::Eval {
                agent: Term::Name("x".into()),
                coalition: Term::Name("coal".into()),
                action: Action::Read,
                infos: vec![Term::Name("x".into())],
                expected: Effect::Deny,
            }),
        };
        assert!(matches!(
            eval_formula(&f, &cfg_with(vec![])),
            Err(FormulaError::SortMismatch { .. })
        ));
    }

    #[test]
    fn forall_over_empty_carrier_is_true() {
        let f = Formula {
            quantifiers: vec![Quantifier {
                kind: QuantKind::Forall,
                var: "x".into(),
                sort: Sort::Agent,
            }],
            body: Expr::Atom(Atom::Event {
                op: "never".into(),
                args: vec![],
                result: None,
            }),
        };
        assert!(eval_formula(&f, &cfg_with(vec![])).unwrap().holds);
        assert!(!eval_formula(&f.dual(), &cfg_with(vec![])).unwrap().holds);
    }

    #[test]
    fn display_precedence() {
        let a = || {
            Expr::Atom(Atom::Event {
                op: "a".into(),
                args: vec![],
                result: None,
            })
        };
        let e = Expr::Implies(
            Box::new(Expr::Implies(Box::new(a()), Box::new(a()))),
            Box::new(Expr::Not(Box::new(Expr::And(Box::new(a()), Box::new(a()))))),
        );
        assert_eq!(
            e.to_string(),
            "(event a() implies event a()) implies not (event a() and event a())"
        );
    }
}
