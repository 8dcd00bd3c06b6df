//! Random generators for property tests: valid scenarios, coalition
//! operation sequences and mutated parser inputs.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::asm::{Arg, Guard, NodeKind, TerminalOutcome, Workflow, WorkflowNode};
use crate::checker::{Atom, Expr, Formula, QuantKind, Quantifier, Sort, Term};
use crate::coalition::{CoalitionError, CoalitionState};
use crate::ids::{AgentId, CoalitionId, Information, NodeId};
use crate::policy::{Action, CombAlg, Effect, Pdp, Policy, Rule, Target};
use crate::scenario::{AgentDecl, CoalitionDecl, ProducerDecl, Scenario, Settings, VariantDecl};

fn agent(n: usize) -> AgentId {
    AgentId::new(format!("ag{n}")).expect("valid id")
}

fn coalition(n: usize) -> CoalitionId {
    CoalitionId::new(format!("co{n}")).expect("valid id")
}

fn item(n: usize) -> Information {
    Information::new(format!("it{n}")).expect("valid id")
}

fn subset<T: Clone + Ord, R: Rng>(rng: &mut R, pool: &[T], p: f64) -> BTreeSet<T> {
    pool.iter().filter(|_| rng.gen_bool(p)).cloned().collect()
}

fn pick<'a, T, R: Rng>(rng: &mut R, pool: &'a [T]) -> &'a T {
    pool.choose(rng).expect("non-empty pool")
}

fn alg<R: Rng>(rng: &mut R) -> CombAlg {
    if rng.gen() {
        CombAlg::DenyOverrides
    } else {
        CombAlg::PermitOverrides
    }
}

pub fn random_target<R: Rng>(rng: &mut R, agents: &[AgentId], items: &[Information]) -> Target {
    Target {
        subjects: subset(rng, agents, 0.3),
        resources: subset(rng, items, 0.3),
        actions: subset(rng, &Action::ALL, 0.4),
    }
}

pub fn random_policy<R: Rng>(rng: &mut R, agents: &[AgentId], items: &[Information]) -> Policy {
    let n = rng.gen_range(0..=3);
    let rules = (0..n).map(|_| {
        let target = rng.gen_bool(0.8).then(|| random_target(rng, agents, items));
        if rng.gen() {
            Rule::permit(target)
        } else {
            Rule::deny(target)
        }
    });
    let rules: Vec<Rule> = rules.collect();
    Policy::new(random_target(rng, agents, items), rules, alg(rng))
}

fn message<R: Rng>(rng: &mut R) -> String {
    const PIECES: [&str; 8] = [
        "ok",
        "done",
        "a \"quoted\" word",
        "back\\slash",
        "line\nbreak",
        "ünïcode",
        "# not a comment",
        "",
    ];
    (0..rng.gen_range(0..3))
        .map(|_| *pick(rng, &PIECES))
        .collect::<Vec<_>>()
        .join(" ")
}

fn random_guard<R: Rng>(
    rng: &mut R,
    depth: usize,
    agents: &[AgentId],
    coals: &[CoalitionId],
    items: &[Information],
) -> Guard {
    if depth == 0 || rng.gen_bool(0.5) {
        return Guard::Request {
            agent: pick(rng, agents).to_string(),
            coalition: pick(rng, coals).to_string(),
            action: *pick(rng, &Action::ALL),
            infos: (0..rng.gen_range(1..=2))
                .map(|_| pick(rng, items).to_string())
                .collect(),
            expected: *pick(rng, &[Effect::Permit, Effect::Deny, Effect::NotApplicable]),
        };
    }
    let which = rng.gen_range(0..3);
    let mut sub = || Box::new(random_guard(rng, depth - 1, agents, coals, items));
    match which {
        0 => Guard::Not(sub()),
        1 => Guard::And(sub(), sub()),
        _ => Guard::Or(sub(), sub()),
    }
}

struct FormulaCtx<'a> {
    vars: Vec<(String, Sort)>,
    agents: &'a [AgentId],
    coals: &'a [CoalitionId],
    items: &'a [Information],
    ops: &'a [String],
}

impl FormulaCtx<'_> {
    fn term<R: Rng>(&self, rng: &mut R, sort: Sort) -> Term {
        let vars: Vec<&String> = self
            .vars
            .iter()
            .filter(|(_, s)| *s == sort)
            .map(|(v, _)| v)
            .collect();
        if !vars.is_empty() && rng.gen_bool(0.6) {
            return Term::Name(pick(rng, &vars).to_string());
        }
        Term::Name(match sort {
            Sort::Agent => pick(rng, self.agents).to_string(),
            Sort::Coalition => pick(rng, self.coals).to_string(),
            Sort::Information => pick(rng, self.items).to_string(),
        })
    }

    fn any_term<R: Rng>(&self, rng: &mut R) -> Term {
        if rng.gen_bool(0.2) {
            return Term::Wildcard;
        }
        let sort = *pick(rng, &[Sort::Agent, Sort::Coalition, Sort::Information]);
        self.term(rng, sort)
    }

    fn atom<R: Rng>(&self, rng: &mut R) -> Atom {
        if rng.gen() {
            Atom::Event {
                op: pick(rng, self.ops).clone(),
                args: (0..rng.gen_range(0..=3))
                    .map(|_| self.any_term(rng))
                    .collect(),
                result: rng.gen_bool(0.5).then(|| self.any_term(rng)),
            }
        } else {
            Atom::Eval {
                agent: self.term(rng, Sort::Agent),
                coalition: self.term(rng, Sort::Coalition),
                action: *pick(rng, &Action::ALL),
                infos: (0..rng.gen_range(1..=2))
                    .map(|_| self.term(rng, Sort::Information))
                    .collect(),
                expected: *pick(rng, &[Effect::Permit, Effect::Deny, Effect::NotApplicable]),
            }
        }
    }

    fn expr<R: Rng>(&self, rng: &mut R, depth: usize) -> Expr {
        if depth == 0 || rng.gen_bool(0.35) {
            return Expr::Atom(self.atom(rng));
        }
        match rng.gen_range(0..3) {
            0 => Expr::Not(Box::new(self.expr(rng, depth - 1))),
            1 => Expr::And(
                Box::new(self.expr(rng, depth - 1)),
                Box::new(self.expr(rng, depth - 1)),
            ),
            _ => Expr::Implies(
                Box::new(self.expr(rng, depth - 1)),
                Box::new(self.expr(rng, depth - 1)),
            ),
        }
    }
}

/// A random formula over the given constants; every variable is used at its
/// declared sort.
pub fn random_formula<R: Rng>(
    rng: &mut R,
    agents: &[AgentId],
    coals: &[CoalitionId],
    items: &[Information],
    ops: &[String],
) -> Formula {
    let quantifiers: Vec<Quantifier> = (0..rng.gen_range(0..=3))
        .map(|i| Quantifier {
            kind: if rng.gen_bool(0.7) {
                QuantKind::Exists
            } else {
                QuantKind::Forall
            },
            var: format!("x{i}"),
            sort: *pick(rng, &[Sort::Agent, Sort::Coalition, Sort::Information]),
        })
        .collect();
    let ctx = FormulaCtx {
        vars: quantifiers
            .iter()
            .map(|q| (q.var.clone(), q.sort))
            .collect(),
        agents,
        coals,
        items,
        ops,
    };
    let body = ctx.expr(rng, 3);
    Formula { quantifiers, body }
}

/// A random scenario that passes `parse_scenario` after serialization.
pub fn random_scenario<R: Rng>(rng: &mut R) -> Scenario {
    let agents: Vec<AgentId> = (0..rng.gen_range(1..=3)).map(agent).collect();
    let coals: Vec<CoalitionId> = (0..rng.gen_range(1..=2)).map(coalition).collect();
    let items: Vec<Information> = (0..rng.gen_range(1..=4)).map(item).collect();

    let policies: BTreeMap<String, Policy> = (0..rng.gen_range(0..=3))
        .map(|i| (format!("pol{i}"), random_policy(rng, &agents, &items)))
        .collect();
    let policy_names: Vec<String> = policies.keys().cloned().collect();

    let mut agent_decls: BTreeMap<AgentId, AgentDecl> = agents
        .iter()
        .map(|a| {
            let decl = AgentDecl {
                info: subset(rng, &items, 0.5),
                policies: subset(rng, &policy_names, 0.5),
                combine: alg(rng),
            };
            (a.clone(), decl)
        })
        .collect();
    // Formulas may only name held items, so every item has a holder.
    for i in &items {
        if !agent_decls.values().any(|d| d.info.contains(i)) {
            let a = pick(rng, &agents);
            agent_decls
                .get_mut(a)
                .expect("declared")
                .info
                .insert(i.clone());
        }
    }

    let coalition_decls: BTreeMap<CoalitionId, CoalitionDecl> = coals
        .iter()
        .map(|c| {
            let members = subset(rng, &agents, 0.5);
            let mut shares = BTreeSet::new();
            for (a, d) in &agent_decls {
                for i in &d.info {
                    if rng.gen_bool(0.3) {
                        shares.insert((a.clone(), i.clone()));
                    }
                }
            }
            (c.clone(), CoalitionDecl { members, shares })
        })
        .collect();

    let producers: BTreeMap<String, ProducerDecl> = (0..rng.gen_range(0..=2))
        .map(|i| {
            let decl = ProducerDecl {
                actor: pick(rng, &agents).clone(),
                shares_into: rng.gen_bool(0.5).then(|| pick(rng, &coals).clone()),
                attach_policy: if !policy_names.is_empty() && rng.gen() {
                    Some(pick(rng, &policy_names).clone())
                } else {
                    None
                },
            };
            (format!("mk{i}"), decl)
        })
        .collect();
    let producer_names: Vec<String> = producers.keys().cloned().collect();

    let variants: BTreeMap<String, VariantDecl> = (0..rng.gen_range(0..=2))
        .map(|i| {
            let mut v = VariantDecl::default();
            for a in &agents {
                if rng.gen_bool(0.4) {
                    v.agents.insert(a.clone(), subset(rng, &policy_names, 0.5));
                }
            }
            for p in &producer_names {
                if rng.gen_bool(0.5) {
                    let attach = if !policy_names.is_empty() && rng.gen() {
                        Some(pick(rng, &policy_names).clone())
                    } else {
                        None
                    };
                    v.producers.insert(p.clone(), attach);
                }
            }
            (format!("var{i}"), v)
        })
        .collect();

    // A chain n0 -> n1 -> ... -> terminal with optional forward `no` jumps,
    // so every node is reachable. Arguments are constants only.
    let len = rng.gen_range(1..=8);
    let node = |i: usize| NodeId::new(format!("n{i}")).expect("valid id");
    let mut nodes = Vec::new();
    for i in 0..len - 1 {
        let kind = match rng.gen_range(0..5) {
            0 => NodeKind::Condition {
                guard: random_guard(rng, 2, &agents, &coals, &items),
                yes: Some(node(i + 1)),
                no: rng.gen_bool(0.6).then(|| node(rng.gen_range(i + 1..len))),
            },
            1 if !producer_names.is_empty() => NodeKind::Update {
                op: pick(rng, &producer_names).clone(),
                args: (0..rng.gen_range(0..=2))
                    .map(|_| Arg::Name(pick(rng, &items).to_string()))
                    .collect(),
                result: rng.gen_bool(0.7).then(|| format!("v{i}")),
                next: node(i + 1),
            },
            2 => NodeKind::Update {
                op: "join".into(),
                args: vec![
                    Arg::Name(pick(rng, &agents).to_string()),
                    Arg::Name(pick(rng, &coals).to_string()),
                ],
                result: None,
                next: node(i + 1),
            },
            3 => NodeKind::Update {
                op: "share_info".into(),
                args: vec![
                    Arg::Name(pick(rng, &agents).to_string()),
                    Arg::Name(pick(rng, &coals).to_string()),
                    Arg::Set(vec![pick(rng, &items).to_string()]),
                ],
                result: None,
                next: node(i + 1),
            },
            _ => NodeKind::Update {
                op: "request_info".into(),
                args: vec![
                    Arg::Name(pick(rng, &agents).to_string()),
                    Arg::Name(pick(rng, &coals).to_string()),
                    Arg::Name(pick(rng, &Action::ALL).to_string()),
                    Arg::Set(vec![pick(rng, &items).to_string()]),
                ],
                result: rng.gen_bool(0.5).then(|| format!("r{i}")),
                next: node(i + 1),
            },
        };
        nodes.push(WorkflowNode { id: node(i), kind });
    }
    nodes.push(WorkflowNode {
        id: node(len - 1),
        kind: NodeKind::Terminal {
            outcome: if rng.gen() {
                TerminalOutcome::Success
            } else {
                TerminalOutcome::Error
            },
            message: message(rng),
        },
    });
    let workflow = Workflow::new(nodes, node(0));

    let mut ops: Vec<String> = vec!["join".into(), "share_info".into(), "request_info".into()];
    ops.extend(producer_names.iter().cloned());
    let properties = (0..rng.gen_range(0..=2))
        .map(|i| {
            (
                format!("prop{i}"),
                random_formula(rng, &agents, &coals, &items, &ops),
            )
        })
        .collect();

    Scenario {
        settings: Settings {
            max_steps: rng.gen_bool(0.3).then(|| rng.gen_range(1..500)),
            state_cap: rng.gen_bool(0.3).then(|| rng.gen_range(1..100_000)),
        },
        policies,
        agents: agent_decls,
        coalitions: coalition_decls,
        producers,
        variants,
        workflow,
        properties,
    }
}

/// One coalition-core operation with its arguments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StateOp {
    CreateAgent(AgentId, BTreeSet<Information>, Pdp),
    CreateCoalition(CoalitionId),
    Join(AgentId, CoalitionId),
    ShareInfo(AgentId, CoalitionId, BTreeSet<Information>),
    RequestInfo(AgentId, CoalitionId, Action, BTreeSet<Information>),
}

impl StateOp {
    /// Applies the operation; `RequestInfo` returns the unchanged state.
    pub fn apply(&self, s: &CoalitionState) -> Result<CoalitionState, CoalitionError> {
        match self {
            StateOp::CreateAgent(a, info, pdp) => {
                s.create_agent(a.clone(), info.clone(), pdp.clone())
            }
            StateOp::CreateCoalition(c) => s.create_coalition(c.clone()),
            StateOp::Join(a, c) => s.join(a, c),
            StateOp::ShareInfo(a, c, i) => s.share_info(a, c, i),
            StateOp::RequestInfo(a, c, act, i) => s.request_info(a, c, *act, i).map(|_| s.clone()),
        }
    }
}

/// A random operation sequence over a small id universe, so that both
/// successful and failing calls (duplicates, unknown ids, unowned items)
/// occur.
pub fn random_op_sequence<R: Rng>(rng: &mut R, len: usize) -> Vec<StateOp> {
    let agents: Vec<AgentId> = (0..4).map(agent).collect();
    let coals: Vec<CoalitionId> = (0..3).map(coalition).collect();
    let items: Vec<Information> = (0..5).map(item).collect();
    (0..len)
        .map(|_| match rng.gen_range(0..5) {
            0 => {
                let policies: Vec<Policy> = (0..rng.gen_range(0..=2))
                    .map(|_| random_policy(rng, &agents, &items))
                    .collect();
                StateOp::CreateAgent(
                    pick(rng, &agents).clone(),
                    subset(rng, &items, 0.5),
                    Pdp::new(policies, alg(rng)),
                )
            }
            1 => StateOp::CreateCoalition(pick(rng, &coals).clone()),
            2 => StateOp::Join(pick(rng, &agents).clone(), pick(rng, &coals).clone()),
            3 => StateOp::ShareInfo(
                pick(rng, &agents).clone(),
                pick(rng, &coals).clone(),
                subset(rng, &items, 0.4),
            ),
            _ => StateOp::RequestInfo(
                pick(rng, &agents).clone(),
                pick(rng, &coals).clone(),
                *pick(rng, &Action::ALL),
                subset(rng, &items, 0.4),
            ),
        })
        .collect()
}

/// A parser input derived from `seeds`: random bytes, truncations, splices
/// and byte-level mutations of valid scenario texts.
pub fn fuzz_input<R: Rng>(rng: &mut R, seeds: &[&str]) -> Vec<u8> {
    const TOKENS: [&str; 16] = [
        "{", "}", "(", ")", "[", "]", ",", ":", ".", "=", "==", "->", "\"", "#", "node", "workflow",
    ];
    match rng.gen_range(0..5) {
        0 => (0..rng.gen_range(0..200)).map(|_| rng.gen()).collect(),
        1 => {
            let s = pick(rng, seeds).as_bytes();
            s[..rng.gen_range(0..=s.len())].to_vec()
        }
        2 => {
            let mut out: Vec<u8> = Vec::new();
            for _ in 0..rng.gen_range(1..60) {
                out.extend_from_slice(pick(rng, &TOKENS).as_bytes());
                if rng.gen() {
                    out.push(b' ');
                }
            }
            out
        }
        3 => {
            let a = pick(rng, seeds).as_bytes();
            let b = pick(rng, seeds).as_bytes();
            let mut out = a[..rng.gen_range(0..=a.len())].to_vec();
            out.extend_from_slice(&b[rng.gen_range(0..=b.len())..]);
            out
        }
        _ => {
            let mut out = pick(rng, seeds).as_bytes().to_vec();
            for _ in 0..rng.gen_range(1..10) {
                if out.is_empty() {
                    break;
                }
                let at = rng.gen_range(0..out.len());
                match rng.gen_range(0..3) {
                    0 => out[at] = rng.gen(),
                    1 => {
                        out.remove(at);
                    }
                    _ => {
                        let t = pick(rng, &TOKENS).as_bytes();
                        out.splice(at..at, t.iter().copied());
                    }
                }
            }
            out
        }
    }
}
