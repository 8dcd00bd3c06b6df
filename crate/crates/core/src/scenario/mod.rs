//! The `.dcs` scenario language: agents, policies, coalitions, producers,
//! one workflow and named forbidden-state properties.

mod lexer;
mod parser;
mod serialize;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::asm::{OpRegistry, Producer, Severity, Workflow, DEFAULT_MAX_STEPS};
use crate::checker::{ExploreOptions, Formula, PolicyVariant, DEFAULT_STATE_CAP};
use crate::coalition::{CoalitionError, CoalitionState};
use crate::ids::{AgentId, CoalitionId, Information};
use crate::policy::{CombAlg, Pdp, Policy};

pub use parser::{parse_formula, parse_scenario, parse_scenario_bytes};
pub use serialize::serialize_scenario;

/// Nesting limit for parenthesised guards and formulas.
pub const MAX_NESTING: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParseDiagnostic {
    pub severity: Severity,
    /// 1-based.
    pub line: usize,
    /// 1-based, in characters.
    pub column: usize,
    pub message: String,
}

impl ParseDiagnostic {
    pub(crate) fn error(pos: lexer::Pos, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Error,
            line: pos.line,
            column: pos.column,
            message: message.into(),
        }
    }
}

impl fmt::Display for ParseDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{}:{}: {sev}: {}", self.line, self.column, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AgentDecl {
    pub info: BTreeSet<Information>,
    /// Names of policies in `Scenario::policies`.
    pub policies: BTreeSet<String>,
    pub combine: CombAlg,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CoalitionDecl {
    pub members: BTreeSet<AgentId>,
    /// Items shared into the coalition while building the initial state.
    pub shares: BTreeSet<(AgentId, Information)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProducerDecl {
    pub actor: AgentId,
    pub shares_into: Option<CoalitionId>,
    pub attach_policy: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct VariantDecl {
    pub agents: BTreeMap<AgentId, BTreeSet<String>>,
    /// `None` detaches the producer's policy.
    pub producers: BTreeMap<String, Option<String>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Settings {
    pub max_steps: Option<usize>,
    pub state_cap: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Scenario {
    pub settings: Settings,
    pub policies: BTreeMap<String, Policy>,
    pub agents: BTreeMap<AgentId, AgentDecl>,
    pub coalitions: BTreeMap<CoalitionId, CoalitionDecl>,
    pub producers: BTreeMap<String, ProducerDecl>,
    pub variants: BTreeMap<String, VariantDecl>,
    pub workflow: Workflow,
    pub properties: BTreeMap<String, Formula>,
}

impl Scenario {
    fn policy_set<'a>(&self, names: impl IntoIterator<Item = &'a String>) -> BTreeSet<Policy> {
        names
            .into_iter()
            .filter_map(|n| self.policies.get(n).cloned())
            .collect()
    }

    /// Agents with their declared items and policies, coalitions with their
    /// members, then the declared shares in canonical order.
    pub fn initial_state(&self) -> Result<CoalitionState, CoalitionError> {
        let mut state = CoalitionState::new();
        for (aid, a) in &self.agents {
            let pdp = Pdp {
                policies: self.policy_set(&a.policies),
                policy_comb_alg: a.combine,
            };
            state = state.create_agent(aid.clone(), a.info.clone(), pdp)?;
        }
        for (cid, c) in &self.coalitions {
            state = state.create_coalition(cid.clone())?;
            for m in &c.members {
                state = state.join(m, cid)?;
            }
        }
        for (cid, c) in &self.coalitions {
            for (aid, info) in &c.shares {
                state = state.share_info(aid, cid, &BTreeSet::from([info.clone()]))?;
            }
        }
        Ok(state)
    }

    pub fn registry(&self) -> OpRegistry {
        let mut reg = OpRegistry::with_builtins();
        for (name, p) in &self.producers {
            reg.register_producer(Producer {
                name: name.clone(),
                actor: p.actor.clone(),
                shares_into: p.shares_into.clone(),
                attach: p
                    .attach_policy
                    .as_ref()
                    .and_then(|n| self.policies.get(n).cloned()),
            });
        }
        reg
    }

    pub fn variant(&self, name: &str) -> Option<PolicyVariant> {
        let v = self.variants.get(name)?;
        Some(PolicyVariant {
            name: name.to_string(),
            agent_policies: v
                .agents
                .iter()
                .map(|(a, names)| (a.clone(), self.policy_set(names)))
                .collect(),
            producer_policies: v
                .producers
                .iter()
                .map(|(p, n)| {
                    (
                        p.clone(),
                        n.as_ref().and_then(|n| self.policies.get(n).cloned()),
                    )
                })
                .collect(),
        })
    }

    /// All declared variants in name order.
    pub fn policy_variants(&self) -> Vec<PolicyVariant> {
        self.variants
            .keys()
            .filter_map(|n| self.variant(n))
            .collect()
    }

    pub fn max_steps(&self) -> usize {
        self.settings.max_steps.unwrap_or(DEFAULT_MAX_STEPS)
    }

    pub fn explore_options(&self) -> ExploreOptions {
        ExploreOptions {
            max_steps: self.max_steps(),
            state_cap: self.settings.state_cap.unwrap_or(DEFAULT_STATE_CAP),
            workers: 1,
        }
    }
}
