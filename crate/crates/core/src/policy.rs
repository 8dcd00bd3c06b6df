//! XACML-subset decision machinery: targets, rules, policies, PDPs and the two
//! combining algorithms.
//!
//! Empty target fields are wildcards. A request target matches a rule or policy
//! target when, field by field, the request's set is contained in the target's
//! set or the target's set is empty.

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::ids::{AgentId, Information};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Action {
    Read,
    Write,
}

impl Action {
    pub const ALL: [Action; 2] = [Action::Read, Action::Write];

    pub fn keyword(self) -> &'static str {
        match self {
            Action::Read => "READ",
            Action::Write => "WRITE",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        match s {
            "READ" => Some(Action::Read),
            "WRITE" => Some(Action::Write),
            _ => None,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Effect {
    Permit,
    Deny,
    NotApplicable,
}

impl Effect {
    pub const ALL: [Effect; 3] = [Effect::Permit, Effect::Deny, Effect::NotApplicable];

    pub fn keyword(self) -> &'static str {
        match self {
            Effect::Permit => "PERMIT",
            Effect::Deny => "DENY",
            Effect::NotApplicable => "NOT_APPLICABLE",
        }
    }

    /// Accepts both `NOT_APPLICABLE` and the unseparated spelling `NOTAPPLICABLE`.
    pub fn from_keyword(s: &str) -> Option<Self> {
        match s {
            "PERMIT" => Some(Effect::Permit),
            "DENY" => Some(Effect::Deny),
            "NOT_APPLICABLE" | "NOTAPPLICABLE" => Some(Effect::NotApplicable),
            _ => None,
        }
    }
}

impl fmt::Display for Effect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CombAlg {
    DenyOverrides,
    PermitOverrides,
}

impl CombAlg {
    pub const ALL: [CombAlg; 2] = [CombAlg::DenyOverrides, CombAlg::PermitOverrides];

    pub fn keyword(self) -> &'static str {
        match self {
            CombAlg::DenyOverrides => "DENY_OVERRIDES",
            CombAlg::PermitOverrides => "PERMIT_OVERRIDES",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        match s {
            "DENY_OVERRIDES" => Some(CombAlg::DenyOverrides),
            "PERMIT_OVERRIDES" => Some(CombAlg::PermitOverrides),
            _ => None,
        }
    }
}

impl fmt::Display for CombAlg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("rule effect must be PERMIT or DENY")]
    RuleEffectNotApplicable,
    #[error("request {0} must not be empty")]
    EmptyRequestField(&'static str),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Target {
    pub subjects: BTreeSet<AgentId>,
    pub resources: BTreeSet<Information>,
    pub actions: BTreeSet<Action>,
}

impl Target {
    pub fn new(
        subjects: impl IntoIterator<Item = AgentId>,
        resources: impl IntoIterator<Item = Information>,
        actions: impl IntoIterator<Item = Action>,
    ) -> Self {
        Self {
            subjects: subjects.into_iter().collect(),
            resources: resources.into_iter().collect(),
            actions: actions.into_iter().collect(),
        }
    }

    /// The all-wildcard target.
    pub fn any() -> Self {
        Self::default()
    }
}

/// An access query. All three target fields are non-empty.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Request {
    target: Target,
}

impl Request {
    pub fn new(target: Target) -> Result<Self, PolicyError> {
        if target.subjects.is_empty() {
            return Err(PolicyError::EmptyRequestField("subjects"));
        }
        if target.resources.is_empty() {
            return Err(PolicyError::EmptyRequestField("resources"));
        }
        if target.actions.is_empty() {
            return Err(PolicyError::EmptyRequestField("actions"));
        }
        Ok(Self { target })
    }

    /// The request `request_info` issues: one subject, one action.
    pub fn single(
        subject: AgentId,
        resources: BTreeSet<Information>,
        action: Action,
    ) -> Result<Self, PolicyError> {
        Self::new(Target {
            subjects: BTreeSet::from([subject]),
            resources,
            actions: BTreeSet::from([action]),
        })
    }

    pub fn target(&self) -> &Target {
        &self.target
    }
}

/// A rule: optional target plus a PERMIT or DENY effect.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Rule {
    target: Option<Target>,
    effect: Effect,
}

impl Rule {
    pub fn new(target: Option<Target>, effect: Effect) -> Result<Self, PolicyError> {
        if effect == Effect::NotApplicable {
            return Err(PolicyError::RuleEffectNotApplicable);
        }
        Ok(Self { target, effect })
    }

    pub fn permit(target: Option<Target>) -> Self {
        Self {
            target,
            effect: Effect::Permit,
        }
    }

    pub fn deny(target: Option<Target>) -> Self {
        Self {
            target,
            effect: Effect::Deny,
        }
    }

    pub fn target(&self) -> Option<&Target> {
        self.target.as_ref()
    }

    pub fn effect(&self) -> Effect {
        self.effect
    }

    pub(crate) fn target_mut(&mut self) -> Option<&mut Target> {
        self.target.as_mut()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Policy {
    pub target: Target,
    pub rules: BTreeSet<Rule>,
    pub rule_comb_alg: CombAlg,
}

impl Policy {
    pub fn new(
        target: Target,
        rules: impl IntoIterator<Item = Rule>,
        rule_comb_alg: CombAlg,
    ) -> Self {
        Self {
            target,
            rules: rules.into_iter().collect(),
            rule_comb_alg,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Pdp {
    pub policies: BTreeSet<Policy>,
    pub policy_comb_alg: CombAlg,
}

impl Pdp {
    pub fn new(policies: impl IntoIterator<Item = Policy>, policy_comb_alg: CombAlg) -> Self {
        Self {
            policies: policies.into_iter().collect(),
            policy_comb_alg,
        }
    }

    /// No policies, deny-overrides: what a fresh coalition gets.
    pub fn empty() -> Self {
        Self::new([], CombAlg::DenyOverrides)
    }
}

impl Default for Pdp {
    fn default() -> Self {
        Self::empty()
    }
}

fn field_matches<T: Ord>(requested: &BTreeSet<T>, allowed: &BTreeSet<T>) -> bool {
    allowed.is_empty() || requested.is_subset(allowed)
}

pub fn matches(req_target: &Target, target: &Target) -> bool {
    field_matches(&req_target.subjects, &target.subjects)
        && field_matches(&req_target.resources, &target.resources)
        && field_matches(&req_target.actions, &target.actions)
}

pub fn evaluate_rule(rule: &Rule, req: &Request) -> Effect {
    match &rule.target {
        Some(t) if !matches(req.target(), t) => Effect::NotApplicable,
        _ => rule.effect,
    }
}

pub fn combine<I>(alg: CombAlg, effects: I) -> Effect
where
    I: IntoIterator<Item = Effect>,
{
    let (winner, runner_up) = match alg {
        CombAlg::DenyOverrides => (Effect::Deny, Effect::Permit),
        CombAlg::PermitOverrides => (Effect::Permit, Effect::Deny),
    };
    let mut result = Effect::NotApplicable;
    for e in effects {
        if e == winner {
            return winner;
        }
        if e == runner_up {
            result = runner_up;
        }
    }
    result
}

pub fn evaluate_policy(policy: &Policy, req: &Request) -> Effect {
    if !matches(req.target(), &policy.target) {
        return Effect::NotApplicable;
    }
    combine(
        policy.rule_comb_alg,
        policy.rules.iter().map(|r| evaluate_rule(r, req)),
    )
}

pub fn evaluate_pdp(req: &Request, pdp: &Pdp) -> Effect {
    combine(
        pdp.policy_comb_alg,
        pdp.policies.iter().map(|p| evaluate_policy(p, req)),
    )
}
