//! Workflow graphs: update, condition and terminal nodes, plus structural
//! validation.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::Serialize;

use super::registry::{OpMeaning, OpRegistry};
use crate::ids::NodeId;
use crate::policy::{Action, Effect};

/// Argument expression of an update node. Names resolve through the
/// configuration's bindings when they are workflow variables and are taken
/// literally otherwise.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Arg {
    Name(String),
    Set(Vec<String>),
}

impl fmt::Display for Arg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arg::Name(n) => f.write_str(n),
            Arg::Set(items) => write!(f, "{{{}}}", items.join(", ")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Guard {
    Request {
        agent: String,
        coalition: String,
        action: Action,
        infos: Vec<String>,
        expected: Effect,
    },
    Not(Box<Guard>),
    And(Box<Guard>, Box<Guard>),
    Or(Box<Guard>, Box<Guard>),
}

impl Guard {
    fn names<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Guard::Request {
                agent,
                coalition,
                infos,
                ..
            } => {
                out.push(agent);
                out.push(coalition);
                out.extend(infos.iter().map(String::as_str));
            }
            Guard::Not(g) => g.names(out),
            Guard::And(a, b) | Guard::Or(a, b) => {
                a.names(out);
                b.names(out);
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Guard::Or(..) => 0,
            Guard::And(..) => 1,
            Guard::Not(_) | Guard::Request { .. } => 2,
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        let parens = self.precedence() < min;
        if parens {
            f.write_str("(")?;
        }
        match self {
            Guard::Request {
                agent,
                coalition,
                action,
                infos,
                expected,
            } => write!(
                f,
                "request({agent}, {coalition}, {action}, {{{}}}) == {expected}",
                infos.join(", ")
            )?,
            Guard::Not(g) => {
                f.write_str("not ")?;
                g.fmt_prec(f, 2)?;
            }
            Guard::And(a, b) => {
                a.fmt_prec(f, 1)?;
                f.write_str(" and ")?;
                b.fmt_prec(f, 2)?;
            }
            Guard::Or(a, b) => {
                a.fmt_prec(f, 0)?;
                f.write_str(" or ")?;
                b.fmt_prec(f, 1)?;
            }
        }
        if parens {
            f.write_str(")")?;
        }
        Ok(())
    }
}

impl fmt::Display for Guard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TerminalOutcome {
    Success,
    Error,
}

impl fmt::Display for TerminalOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TerminalOutcome::Success => "SUCCESS",
            TerminalOutcome::Error => "ERROR",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum NodeKind {
    Update {
        op: String,
        args: Vec<Arg>,
        result: Option<String>,
        next: NodeId,
    },
    Condition {
        guard: Guard,
        yes: Option<NodeId>,
        no: Option<NodeId>,
    },
    Terminal {
        outcome: TerminalOutcome,
        message: String,
    },
}

impl NodeKind {
    pub fn label(&self) -> &'static str {
        match self {
            NodeKind::Update { .. } => "UPDATE",
            NodeKind::Condition { .. } => "CONDITION",
            NodeKind::Terminal { .. } => "TERMINAL",
        }
    }

    pub fn edges(&self) -> Vec<&NodeId> {
        match self {
            NodeKind::Update { next, .. } => vec![next],
            NodeKind::Condition { yes, no, .. } => yes.iter().chain(no.iter()).collect(),
            NodeKind::Terminal { .. } => vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct WorkflowNode {
    pub id: NodeId,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Workflow {
    nodes: BTreeMap<NodeId, WorkflowNode>,
    entry: NodeId,
}

impl Workflow {
    /// Builds a workflow; later nodes with a repeated id replace earlier ones.
    pub fn new(nodes: impl IntoIterator<Item = WorkflowNode>, entry: NodeId) -> Self {
        Self {
            nodes: nodes.into_iter().map(|n| (n.id.clone(), n)).collect(),
            entry,
        }
    }

    pub fn entry(&self) -> &NodeId {
        &self.entry
    }

    pub fn node(&self, id: &NodeId) -> Option<&WorkflowNode> {
        self.nodes.get(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &WorkflowNode> {
        self.nodes.values()
    }

    /// Result variables of all update nodes.
    pub fn variables(&self) -> BTreeSet<&str> {
        self.nodes
            .values()
            .filter_map(|n| match &n.kind {
                NodeKind::Update {
                    result: Some(v), ..
                } => Some(v.as_str()),
                _ => None,
            })
            .collect()
    }

    fn reachable_ids(&self) -> BTreeSet<NodeId> {
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::new();
        if self.nodes.contains_key(&self.entry) {
            seen.insert(self.entry.clone());
            queue.push_back(self.entry.clone());
        }
        while let Some(id) = queue.pop_front() {
            for next in self.nodes[&id].kind.edges() {
                if self.nodes.contains_key(next) && seen.insert(next.clone()) {
                    queue.push_back(next.clone());
                }
            }
        }
        seen
    }

    /// Variables bound on every path from the entry to each reachable node.
    fn must_bound(&self, reachable: &BTreeSet<NodeId>) -> BTreeMap<NodeId, BTreeSet<String>> {
        let all: BTreeSet<String> = self.variables().into_iter().map(str::to_string).collect();
        let mut bound_in: BTreeMap<NodeId, BTreeSet<String>> = reachable
            .iter()
            .map(|id| (id.clone(), all.clone()))
            .collect();
        bound_in.insert(self.entry.clone(), BTreeSet::new());

        let mut preds: BTreeMap<&NodeId, Vec<&NodeId>> = BTreeMap::new();
        for id in reachable {
            for next in self.nodes[id].kind.edges() {
                if reachable.contains(next) {
                    preds.entry(next).or_default().push(id);
                }
            }
        }

        let bound_out = |id: &NodeId, bound_in: &BTreeMap<NodeId, BTreeSet<String>>| {
            let mut out = bound_in[id].clone();
            if let NodeKind::Update {
                result: Some(v), ..
            } = &self.nodes[id].kind
            {
                out.insert(v.clone());
            }
            out
        };

        let mut changed = true;
        while changed {
            changed = false;
            for id in reachable {
                let mut incoming: Option<BTreeSet<String>> = if id == &self.entry {
                    Some(BTreeSet::new())
                } else {
                    None
                };
                for p in preds.get(id).into_iter().flatten() {
                    let out = bound_out(p, &bound_in);
                    incoming = Some(match incoming {
                        None => out,
                        Some(acc) => acc.intersection(&out).cloned().collect(),
                    });
                }
                let incoming = incoming.unwrap_or_default();
                if incoming != bound_in[id] {
                    bound_in.insert(id.clone(), incoming);
                    changed = true;
                }
            }
        }
        bound_in
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum IssueKind {
    MissingEntry,
    DanglingEdge,
    UnreachableNode,
    UnregisteredOp,
    BadArguments,
    UnboundVariable,
    MissingBranch,
}

impl fmt::Display for IssueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IssueKind::MissingEntry => "MISSING_ENTRY",
            IssueKind::DanglingEdge => "DANGLING_EDGE",
            IssueKind::UnreachableNode => "UNREACHABLE_NODE",
            IssueKind::UnregisteredOp => "UNREGISTERED_OP",
            IssueKind::BadArguments => "BAD_ARGUMENTS",
            IssueKind::UnboundVariable => "UNBOUND_VARIABLE",
            IssueKind::MissingBranch => "MISSING_BRANCH",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Issue {
    pub severity: Severity,
    pub kind: IssueKind,
    pub node: Option<NodeId>,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        match &self.node {
            Some(n) => write!(f, "{sev} {} at {n}: {}", self.kind, self.message),
            None => write!(f, "{sev} {}: {}", self.kind, self.message),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.errors().next().is_none()
    }

    pub fn errors(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Issue> {
        self.issues
            .iter()
            .filter(|i| i.severity == Severity::Warning)
    }

    pub fn has(&self, kind: IssueKind) -> bool {
        self.issues.iter().any(|i| i.kind == kind)
    }

    fn push(
        &mut self,
        severity: Severity,
        kind: IssueKind,
        node: Option<&NodeId>,
        message: String,
    ) {
        self.issues.push(Issue {
            severity,
            kind,
            node: node.cloned(),
            message,
        });
    }
}

pub fn validate_workflow(w: &Workflow, reg: &OpRegistry) -> ValidationReport {
    use IssueKind::*;
    use Severity::*;

    let mut report = ValidationReport::default();
    if !w.nodes.contains_key(&w.entry) {
        report.push(
            Error,
            MissingEntry,
            None,
            format!("entry node `{}` does not exist", w.entry),
        );
    }

    for node in w.nodes.values() {
        for next in node.kind.edges() {
            if !w.nodes.contains_key(next) {
                report.push(
                    Error,
                    DanglingEdge,
                    Some(&node.id),
                    format!("edge to unknown node `{next}`"),
                );
            }
        }
        match &node.kind {
            NodeKind::Update {
                op, args, result, ..
            } => match reg.get(op) {
                None => report.push(
                    Error,
                    UnregisteredOp,
                    Some(&node.id),
                    format!("operation `{op}` is not registered"),
                ),
                Some(OpMeaning::Builtin(b)) => {
                    if let Err(msg) = b.check_shape(args) {
                        report.push(Error, BadArguments, Some(&node.id), msg);
                    }
                    if result.is_some() && !b.produces_value() {
                        report.push(
                            Error,
                            BadArguments,
                            Some(&node.id),
                            format!("`{op}` produces no value to bind"),
                        );
                    }
                }
                Some(OpMeaning::Producer(_)) => {}
            },
            NodeKind::Condition { yes, no, .. } => {
                if yes.is_none() {
                    report.push(
                        Warning,
                        MissingBranch,
                        Some(&node.id),
                        "no `yes` branch: a true guard deadlocks here".into(),
                    );
                }
                if no.is_none() {
                    report.push(
                        Warning,
                        MissingBranch,
                        Some(&node.id),
                        "no `no` branch: a false guard deadlocks here".into(),
                    );
                }
            }
            NodeKind::Terminal { .. } => {}
        }
    }

    let reachable = w.reachable_ids();
    for id in w.nodes.keys() {
        if !reachable.contains(id) && w.nodes.contains_key(&w.entry) {
            report.push(
                Error,
                UnreachableNode,
                Some(id),
                "not reachable from the entry".into(),
            );
        }
    }

    if reachable.is_empty() {
        return report;
    }
    let variables = w.variables();
    let bound = w.must_bound(&reachable);
    for id in &reachable {
        let node = &w.nodes[id];
        let mut used = Vec::new();
        match &node.kind {
            NodeKind::Update { args, .. } => {
                for a in args {
                    match a {
                        Arg::Name(n) => used.push(n.as_str()),
                        Arg::Set(items) => used.extend(items.iter().map(String::as_str)),
                    }
                }
            }
            NodeKind::Condition { guard, .. } => guard.names(&mut used),
            NodeKind::Terminal { .. } => {}
        }
        let mut reported = BTreeSet::new();
        for name in used {
            if variables.contains(name) && !bound[id].contains(name) && reported.insert(name) {
                report.push(
                    Error,
                    UnboundVariable,
                    Some(id),
                    format!("variable `{name}` is not bound on every path to this node"),
                );
            }
        }
    }
    report
}
