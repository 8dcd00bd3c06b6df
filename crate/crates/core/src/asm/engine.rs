//! Execution of workflow graphs over `CoalitionState`.
//!
//! A `Config` is an immutable snapshot: current node, coalition state,
//! variable bindings, event history and an optional runtime fault. `step`
//! computes the (at most one) successor; `run` iterates it into a `Trace`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use super::registry::{Builtin, OpMeaning, OpRegistry, Producer};
use super::workflow::{Arg, Guard, NodeKind, TerminalOutcome, Workflow, WorkflowNode};
use crate::coalition::{CoalitionError, CoalitionState};
use crate::ids::{AgentId, CoalitionId, IdError, Information, NodeId};
use crate::policy::{Action, Effect, Pdp, Policy};

pub const DEFAULT_MAX_STEPS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("variable `{0}` is unbound")]
    UnboundVariable(String),
    #[error("operation `{0}` is not registered")]
    UnknownOp(String),
    #[error("node `{0}` does not exist")]
    UnknownNode(NodeId),
    #[error("node `{0}` is not an update node")]
    NotAnUpdate(NodeId),
    #[error("bad arguments: {0}")]
    BadArguments(String),
    #[error("`{name}` is not a valid {expected}")]
    ArgumentType {
        name: String,
        expected: &'static str,
    },
    #[error(transparent)]
    Id(#[from] IdError),
    #[error(transparent)]
    Coalition(#[from] CoalitionError),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Value {
    Agent(AgentId),
    Coalition(CoalitionId),
    Info(Information),
    Effect(Effect),
    Action(Action),
    Infos(BTreeSet<Information>),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Agent(a) => write!(f, "{a}"),
            Value::Coalition(c) => write!(f, "{c}"),
            Value::Info(i) => write!(f, "{i}"),
            Value::Effect(e) => write!(f, "{e}"),
            Value::Action(a) => write!(f, "{a}"),
            Value::Infos(items) => write!(f, "{{{}}}", join(items)),
        }
    }
}

fn join<T: fmt::Display>(items: impl IntoIterator<Item = T>) -> String {
    items
        .into_iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

pub type Bindings = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum EventResult {
    Unit,
    Value(Value),
    Fault(String),
}

/// One executed update: operation, resolved arguments and its result.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Event {
    pub node: NodeId,
    pub op: String,
    pub args: Vec<Value>,
    pub result: EventResult,
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.op, join(&self.args))?;
        match &self.result {
            EventResult::Unit => Ok(()),
            EventResult::Value(v) => write!(f, " -> {v}"),
            EventResult::Fault(msg) => write!(f, " FAULT {msg}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Config {
    pub node: NodeId,
    pub state: CoalitionState,
    pub bindings: Bindings,
    pub history: Vec<Event>,
    /// Set once an update or guard failed; the config is then an ERROR terminal.
    pub fault: Option<String>,
}

impl Config {
    pub fn initial(w: &Workflow, state: CoalitionState) -> Self {
        Self {
            node: w.entry().clone(),
            state,
            bindings: Bindings::new(),
            history: Vec::new(),
            fault: None,
        }
    }

    /// Information items minted by producers so far, in minting order.
    pub fn minted(&self) -> impl Iterator<Item = &Information> {
        self.history.iter().filter_map(|e| match &e.result {
            EventResult::Value(Value::Info(i)) if i.is_minted() => Some(i),
            _ => None,
        })
    }

    fn faulted(&self, event: Option<Event>, message: String) -> Self {
        let mut next = self.clone();
        next.history.extend(event);
        next.fault = Some(message);
        next
    }
}

/// A guard's `request_info` call and the effect it returned.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GuardEval {
    pub agent: AgentId,
    pub coalition: CoalitionId,
    pub action: Action,
    pub infos: BTreeSet<Information>,
    pub effect: Effect,
}

impl fmt::Display for GuardEval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "request_info({}, {}, {}, {{{}}}) = {}",
            self.agent,
            self.coalition,
            self.action,
            join(&self.infos),
            self.effect
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum StepDetail {
    Update {
        event: Event,
    },
    Condition {
        evals: Vec<GuardEval>,
        value: bool,
        taken: Option<NodeId>,
    },
    GuardFault {
        evals: Vec<GuardEval>,
        message: String,
    },
    Terminal {
        outcome: TerminalOutcome,
        message: String,
    },
    Faulted {
        message: String,
    },
}

/// What happened when a configuration was stepped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StepRecord {
    pub node: NodeId,
    pub detail: StepDetail,
}

impl StepRecord {
    pub fn kind_label(&self) -> &'static str {
        match self.detail {
            StepDetail::Update { .. } => "UPDATE",
            StepDetail::Condition { .. } | StepDetail::GuardFault { .. } => "CONDITION",
            StepDetail::Terminal { .. } => "TERMINAL",
            StepDetail::Faulted { .. } => "FAULT",
        }
    }

    /// The last guard evaluation of a condition step, if any.
    pub fn last_eval(&self) -> Option<&GuardEval> {
        match &self.detail {
            StepDetail::Condition { evals, .. } | StepDetail::GuardFault { evals, .. } => {
                evals.last()
            }
            _ => None,
        }
    }
}

impl fmt::Display for StepRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} ", self.node, self.kind_label())?;
        let evals_text = |evals: &[GuardEval]| {
            evals
                .iter()
                .map(|e| format!("EVAL {e}"))
                .collect::<Vec<_>>()
                .join("; ")
        };
        match &self.detail {
            StepDetail::Update { event } => write!(f, "{event}"),
            StepDetail::Condition {
                evals,
                value,
                taken,
            } => {
                let branch = taken
                    .as_ref()
                    .map_or("(none)".to_string(), |n| n.to_string());
                write!(f, "{} => {value} -> {branch}", evals_text(evals))
            }
            StepDetail::GuardFault { evals, message } => {
                if evals.is_empty() {
                    write!(f, "FAULT {message}")
                } else {
                    write!(f, "{} FAULT {message}", evals_text(evals))
                }
            }
            StepDetail::Terminal { outcome, message } if message.is_empty() => {
                write!(f, "{outcome}")
            }
            StepDetail::Terminal { outcome, message } => write!(f, "{outcome} {message:?}"),
            StepDetail::Faulted { message } => write!(f, "ERROR {message}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ConfigStatus {
    /// Has a successor.
    Active,
    /// Legitimate end: a terminal node, or a runtime fault (ERROR).
    Terminal(TerminalOutcome),
    /// Non-terminal without successor.
    Stuck,
}

#[derive(Debug, Clone)]
pub struct Transition {
    pub successors: Vec<Config>,
    pub record: StepRecord,
    pub status: ConfigStatus,
}

enum Resolved<'a> {
    Bound(&'a Value),
    Literal(&'a str),
}

struct Scope<'a> {
    cfg: &'a Config,
    vars: BTreeSet<&'a str>,
}

impl<'a> Scope<'a> {
    fn new(cfg: &'a Config, w: &'a Workflow) -> Self {
        Self {
            cfg,
            vars: w.variables(),
        }
    }

    fn resolve(&self, name: &'a str) -> Result<Resolved<'a>, EngineError> {
        if self.vars.contains(name) {
            self.cfg
                .bindings
                .get(name)
                .map(Resolved::Bound)
                .ok_or_else(|| EngineError::UnboundVariable(name.to_string()))
        } else {
            Ok(Resolved::Literal(name))
        }
    }

    fn agent(&self, name: &'a str) -> Result<AgentId, EngineError> {
        match self.resolve(name)? {
            Resolved::Bound(Value::Agent(a)) => Ok(a.clone()),
            Resolved::Literal(s) => Ok(AgentId::new(s)?),
            Resolved::Bound(_) => Err(type_error(name, "agent")),
        }
    }

    fn coalition(&self, name: &'a str) -> Result<CoalitionId, EngineError> {
        match self.resolve(name)? {
            Resolved::Bound(Value::Coalition(c)) => Ok(c.clone()),
            Resolved::Literal(s) => Ok(CoalitionId::new(s)?),
            Resolved::Bound(_) => Err(type_error(name, "coalition")),
        }
    }

    fn info(&self, name: &'a str) -> Result<Information, EngineError> {
        match self.resolve(name)? {
            Resolved::Bound(Value::Info(i)) => Ok(i.clone()),
            Resolved::Literal(s) => Ok(Information::new(s)?),
            Resolved::Bound(_) => Err(type_error(name, "information item")),
        }
    }

    fn infos(&self, names: &'a [String]) -> Result<BTreeSet<Information>, EngineError> {
        names.iter().map(|n| self.info(n)).collect()
    }

    fn action(&self, name: &'a str) -> Result<Action, EngineError> {
        match self.resolve(name)? {
            Resolved::Bound(Value::Action(a)) => Ok(*a),
            Resolved::Literal(s) => {
                Action::from_keyword(s).ok_or_else(|| type_error(name, "action"))
            }
            Resolved::Bound(_) => Err(type_error(name, "action")),
        }
    }

    /// Untyped resolution for producer arguments.
    fn value(&self, arg: &'a Arg) -> Result<Value, EngineError> {
        match arg {
            Arg::Set(items) => Ok(Value::Infos(self.infos(items)?)),
            Arg::Name(name) => match self.resolve(name)? {
                Resolved::Bound(v) => Ok(v.clone()),
                Resolved::Literal(s) => self.classify_literal(s),
            },
        }
    }

    fn classify_literal(&self, s: &str) -> Result<Value, EngineError> {
        if let Some(a) = Action::from_keyword(s) {
            return Ok(Value::Action(a));
        }
        if let Some(e) = Effect::from_keyword(s) {
            return Ok(Value::Effect(e));
        }
        let state = &self.cfg.state;
        if let Some(a) = state.agents().keys().find(|a| a.as_str() == s) {
            return Ok(Value::Agent(a.clone()));
        }
        if let Some(c) = state.coalitions().keys().find(|c| c.as_str() == s) {
            return Ok(Value::Coalition(c.clone()));
        }
        Ok(Value::Info(Information::new(s)?))
    }
}

fn type_error(name: &str, expected: &'static str) -> EngineError {
    EngineError::ArgumentType {
        name: name.to_string(),
        expected,
    }
}

fn names(args: &[Arg]) -> Result<Vec<&str>, EngineError> {
    args.iter()
        .map(|a| match a {
            Arg::Name(n) => Ok(n.as_str()),
            Arg::Set(_) => Err(EngineError::BadArguments("unexpected {...} set".into())),
        })
        .collect()
}

/// Substitutes bound workflow variables in a policy template's subjects and
/// resources.
pub fn instantiate_policy(template: &Policy, bindings: &Bindings) -> Policy {
    let subst_target = |t: &mut crate::policy::Target| {
        t.resources = t
            .resources
            .iter()
            .map(|r| match bindings.get(r.as_str()) {
                Some(Value::Info(i)) => i.clone(),
                _ => r.clone(),
            })
            .collect();
        t.subjects = t
            .subjects
            .iter()
            .map(|s| match bindings.get(s.as_str()) {
                Some(Value::Agent(a)) => a.clone(),
                _ => s.clone(),
            })
            .collect();
    };
    let mut policy = template.clone();
    subst_target(&mut policy.target);
    policy.rules = policy
        .rules
        .iter()
        .map(|r| {
            let mut r = r.clone();
            if let Some(t) = r.target_mut() {
                subst_target(t);
            }
            r
        })
        .collect();
    policy
}

struct Applied {
    state: CoalitionState,
    args: Vec<Value>,
    result: EventResult,
}

/// The inner error keeps the resolved arguments of the failed call.
type Attempt<T> = Result<T, (Vec<Value>, CoalitionError)>;

fn apply_builtin(scope: &Scope, b: Builtin, args: &[Arg]) -> Result<Attempt<Applied>, EngineError> {
    b.check_shape(args).map_err(EngineError::BadArguments)?;
    let state = &scope.cfg.state;
    let (resolved, outcome) = match b {
        Builtin::CreateAgent => {
            let n = names(args)?;
            let a = scope.agent(n[0])?;
            let out = state
                .create_agent(a.clone(), BTreeSet::new(), Pdp::empty())
                .map(|s| (s, EventResult::Value(Value::Agent(a.clone()))));
            (vec![Value::Agent(a)], out)
        }
        Builtin::CreateCoalition => {
            let n = names(args)?;
            let c = scope.coalition(n[0])?;
            let out = state
                .create_coalition(c.clone())
                .map(|s| (s, EventResult::Value(Value::Coalition(c.clone()))));
            (vec![Value::Coalition(c)], out)
        }
        Builtin::Join => {
            let a = scope.agent(names(&args[..1])?[0])?;
            let c = scope.coalition(names(&args[1..2])?[0])?;
            let out = state.join(&a, &c).map(|s| (s, EventResult::Unit));
            (vec![Value::Agent(a), Value::Coalition(c)], out)
        }
        Builtin::ShareInfo => {
            let a = scope.agent(names(&args[..1])?[0])?;
            let c = scope.coalition(names(&args[1..2])?[0])?;
            let Arg::Set(items) = &args[2] else {
                unreachable!("shape checked")
            };
            let i_set = scope.infos(items)?;
            let out = state
                .share_info(&a, &c, &i_set)
                .map(|s| (s, EventResult::Unit));
            (
                vec![Value::Agent(a), Value::Coalition(c), Value::Infos(i_set)],
                out,
            )
        }
        Builtin::RequestInfo => {
            let n = names(&args[..3])?;
            let a = scope.agent(n[0])?;
            let c = scope.coalition(n[1])?;
            let act = scope.action(n[2])?;
            let Arg::Set(items) = &args[3] else {
                unreachable!("shape checked")
            };
            let i_set = scope.infos(items)?;
            let out = state
                .request_info(&a, &c, act, &i_set)
                .map(|e| (state.clone(), EventResult::Value(Value::Effect(e))));
            (
                vec![
                    Value::Agent(a),
                    Value::Coalition(c),
                    Value::Action(act),
                    Value::Infos(i_set),
                ],
                out,
            )
        }
    };
    Ok(match outcome {
        Ok((state, result)) => Ok(Applied {
            state,
            args: resolved,
            result,
        }),
        Err(e) => Err((resolved, e)),
    })
}

fn apply_producer(
    scope: &Scope,
    p: &Producer,
    args: &[Arg],
    result_var: Option<&String>,
) -> Result<Attempt<(Applied, Bindings)>, EngineError> {
    let resolved = args
        .iter()
        .map(|a| scope.value(a))
        .collect::<Result<Vec<_>, _>>()?;
    let base = result_var.map_or(p.name.as_str(), String::as_str);
    let counter = 1 + scope.cfg.minted().filter(|i| i.base() == base).count();
    let token = Information::minted(base, counter)?;

    let mut bindings = scope.cfg.bindings.clone();
    if let Some(var) = result_var {
        bindings.insert(var.clone(), Value::Info(token.clone()));
    }
    let attached: Vec<Policy> = p
        .attach
        .iter()
        .map(|t| instantiate_policy(t, &bindings))
        .collect();

    let state = scope
        .cfg
        .state
        .acquire_info(&p.actor, token.clone(), attached)
        .and_then(|s| match &p.shares_into {
            Some(c) => s.share_info(&p.actor, c, &BTreeSet::from([token.clone()])),
            None => Ok(s),
        });
    Ok(match state {
        Ok(state) => Ok((
            Applied {
                state,
                args: resolved,
                result: EventResult::Value(Value::Info(token)),
            },
            bindings,
        )),
        Err(e) => Err((resolved, e)),
    })
}

/// Executes an update node. Coalition-level failures do not surface as
/// errors: they produce a faulted config carrying a fault event.
pub fn apply_update(
    cfg: &Config,
    node: &WorkflowNode,
    w: &Workflow,
    reg: &OpRegistry,
) -> Result<Config, EngineError> {
    if cfg.node != node.id {
        return Err(EngineError::UnknownNode(node.id.clone()));
    }
    let NodeKind::Update {
        op,
        args,
        result,
        next,
    } = &node.kind
    else {
        return Err(EngineError::NotAnUpdate(node.id.clone()));
    };
    let scope = Scope::new(cfg, w);
    let meaning = reg
        .get(op)
        .ok_or_else(|| EngineError::UnknownOp(op.clone()))?;

    let outcome = match meaning {
        OpMeaning::Builtin(b) => apply_builtin(&scope, *b, args)?.map(|applied| {
            let mut bindings = cfg.bindings.clone();
            if let (Some(var), EventResult::Value(v)) = (result, &applied.result) {
                bindings.insert(var.clone(), v.clone());
            }
            (applied, bindings)
        }),
        OpMeaning::Producer(p) => apply_producer(&scope, p, args, result.as_ref())?,
    };

    Ok(match outcome {
        Ok((applied, bindings)) => Config {
            node: next.clone(),
            state: applied.state,
            bindings,
            history: {
                let mut h = cfg.history.clone();
                h.push(Event {
                    node: node.id.clone(),
                    op: op.clone(),
                    args: applied.args,
                    result: applied.result,
                });
                h
            },
            fault: None,
        },
        Err((args, err)) => {
            let message = err.to_string();
            let event = Event {
                node: node.id.clone(),
                op: op.clone(),
                args,
                result: EventResult::Fault(message.clone()),
            };
            cfg.faulted(Some(event), message)
        }
    })
}

fn eval_guard_inner(
    scope: &Scope,
    guard: &Guard,
    evals: &mut Vec<GuardEval>,
) -> Result<bool, EngineError> {
    match guard {
        Guard::Request {
            agent,
            coalition,
            action,
            infos,
            expected,
        } => {
            let agent = scope.agent(agent)?;
            let coalition = scope.coalition(coalition)?;
            let infos = scope.infos(infos)?;
            let effect = scope
                .cfg
                .state
                .request_info(&agent, &coalition, *action, &infos)?;
            evals.push(GuardEval {
                agent,
                coalition,
                action: *action,
                infos,
                effect,
            });
            Ok(effect == *expected)
        }
        Guard::Not(g) => Ok(!eval_guard_inner(scope, g, evals)?),
        Guard::And(a, b) => {
            Ok(eval_guard_inner(scope, a, evals)? && eval_guard_inner(scope, b, evals)?)
        }
        Guard::Or(a, b) => {
            Ok(eval_guard_inner(scope, a, evals)? || eval_guard_inner(scope, b, evals)?)
        }
    }
}

/// Evaluates a condition guard against the config. Pure.
pub fn eval_guard(cfg: &Config, guard: &Guard, w: &Workflow) -> Result<bool, EngineError> {
    eval_guard_inner(&Scope::new(cfg, w), guard, &mut Vec::new())
}

pub fn step_detailed(cfg: &Config, w: &Workflow, reg: &OpRegistry) -> Transition {
    let record = |detail| StepRecord {
        node: cfg.node.clone(),
        detail,
    };

    if let Some(message) = &cfg.fault {
        return Transition {
            successors: vec![],
            record: record(StepDetail::Faulted {
                message: message.clone(),
            }),
            status: ConfigStatus::Terminal(TerminalOutcome::Error),
        };
    }
    let Some(node) = w.node(&cfg.node) else {
        let message = EngineError::UnknownNode(cfg.node.clone()).to_string();
        return Transition {
            successors: vec![],
            record: record(StepDetail::Faulted { message }),
            status: ConfigStatus::Terminal(TerminalOutcome::Error),
        };
    };

    match &node.kind {
        NodeKind::Update { op, .. } => {
            let next = apply_update(cfg, node, w, reg).unwrap_or_else(|e| {
                let message = e.to_string();
                let event = Event {
                    node: node.id.clone(),
                    op: op.clone(),
                    args: vec![],
                    result: EventResult::Fault(message.clone()),
                };
                cfg.faulted(Some(event), message)
            });
            let event = next
                .history
                .last()
                .cloned()
                .expect("update appends an event");
            Transition {
                successors: vec![next],
                record: record(StepDetail::Update { event }),
                status: ConfigStatus::Active,
            }
        }
        NodeKind::Condition { guard, yes, no } => {
            let mut evals = Vec::new();
            match eval_guard_inner(&Scope::new(cfg, w), guard, &mut evals) {
                Ok(value) => {
                    let taken = if value { yes.clone() } else { no.clone() };
                    let successors: Vec<Config> = taken
                        .iter()
                        .map(|n| Config {
                            node: n.clone(),
                            ..cfg.clone()
                        })
                        .collect();
                    let status = if successors.is_empty() {
                        ConfigStatus::Stuck
                    } else {
                        ConfigStatus::Active
                    };
                    Transition {
                        successors,
                        record: record(StepDetail::Condition {
                            evals,
                            value,
                            taken,
                        }),
                        status,
                    }
                }
                Err(e) => {
                    let message = e.to_string();
                    Transition {
                        successors: vec![cfg.faulted(None, message.clone())],
                        record: record(StepDetail::GuardFault { evals, message }),
                        status: ConfigStatus::Active,
                    }
                }
            }
        }
        NodeKind::Terminal { outcome, message } => Transition {
            successors: vec![],
            record: record(StepDetail::Terminal {
                outcome: *outcome,
                message: message.clone(),
            }),
            status: ConfigStatus::Terminal(*outcome),
        },
    }
}

pub fn step(cfg: &Config, w: &Workflow, reg: &OpRegistry) -> Vec<Config> {
    step_detailed(cfg, w, reg).successors
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Outcome {
    Completed(TerminalOutcome),
    Deadlock(NodeId),
    StepLimit,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Completed(o) => write!(f, "COMPLETED({o})"),
            Outcome::Deadlock(n) => write!(f, "DEADLOCK({n})"),
            Outcome::StepLimit => f.write_str("STEP_LIMIT"),
        }
    }
}

/// A run: `configs[0]` is the initial config, `records[i]` describes the
/// stepping of `configs[i]`. The final config's record is present unless the
/// step limit cut the run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Trace {
    pub configs: Vec<Config>,
    pub records: Vec<StepRecord>,
    pub outcome: Outcome,
}

impl Trace {
    pub fn last_config(&self) -> &Config {
        self.configs.last().expect("a trace has an initial config")
    }

    pub fn events(&self) -> &[Event] {
        &self.last_config().history
    }
}

/// Plain trace line: `step <index> <node> <KIND> <detail>`.
pub fn format_step(index: usize, record: &StepRecord) -> String {
    format!("step {index} {record}")
}

impl fmt::Display for Trace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, r) in self.records.iter().enumerate() {
            writeln!(f, "{}", format_step(i, r))?;
        }
        writeln!(f, "OUTCOME: {}", self.outcome)
    }
}

pub fn run(w: &Workflow, init: CoalitionState, reg: &OpRegistry, max_steps: usize) -> Trace {
    let mut cfg = Config::initial(w, init);
    let mut configs = vec![cfg.clone()];
    let mut records = Vec::new();
    let mut taken = 0;
    loop {
        if taken >= max_steps {
            return Trace {
                configs,
                records,
                outcome: Outcome::StepLimit,
            };
        }
        let t = step_detailed(&cfg, w, reg);
        records.push(t.record);
        match t.status {
            ConfigStatus::Terminal(o) => {
                return Trace {
                    configs,
                    records,
                    outcome: Outcome::Completed(o),
                };
            }
            ConfigStatus::Stuck => {
                let node = cfg.node.clone();
                return Trace {
                    configs,
                    records,
                    outcome: Outcome::Deadlock(node),
                };
            }
            ConfigStatus::Active => {
                cfg = t
                    .successors
                    .into_iter()
                    .next()
                    .expect("active config has a successor");
                configs.push(cfg.clone());
                taken += 1;
            }
        }
    }
}
