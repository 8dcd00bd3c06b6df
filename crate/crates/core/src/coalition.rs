//! The dynamic-coalition state: agents, coalitions and the information they hold.
//!
//! `CoalitionState` is a value. Every operation borrows the current state and
//! returns a fresh one, so earlier snapshots stay valid for exploration.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::ids::{AgentId, CoalitionId, Information};
use crate::policy::{evaluate_pdp, Action, CombAlg, Effect, Pdp, Policy, PolicyError, Request};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CoalitionError {
    #[error("agent `{0}` already exists")]
    DuplicateAgent(AgentId),
    #[error("coalition `{0}` already exists")]
    DuplicateCoalition(CoalitionId),
    #[error("unknown agent `{0}`")]
    UnknownAgent(AgentId),
    #[error("unknown coalition `{0}`")]
    UnknownCoalition(CoalitionId),
    #[error("agent `{agent}` does not hold `{info}`")]
    NotOwned { agent: AgentId, info: Information },
    #[error("information `{info}` is not shared in coalition `{coalition}`")]
    InfoNotInCoalition {
        coalition: CoalitionId,
        info: Information,
    },
    #[error(transparent)]
    Request(#[from] PolicyError),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Agent {
    pub info: BTreeSet<Information>,
    pub aac: Pdp,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Coalition {
    pub agents: BTreeSet<AgentId>,
    pub info: BTreeSet<Information>,
    pub cac: Pdp,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct CoalitionState {
    coals: BTreeMap<CoalitionId, Coalition>,
    agents: BTreeMap<AgentId, Agent>,
}

impl CoalitionState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn agents(&self) -> &BTreeMap<AgentId, Agent> {
        &self.agents
    }

    pub fn coalitions(&self) -> &BTreeMap<CoalitionId, Coalition> {
        &self.coals
    }

    pub fn agent(&self, aid: &AgentId) -> Result<&Agent, CoalitionError> {
        self.agents
            .get(aid)
            .ok_or_else(|| CoalitionError::UnknownAgent(aid.clone()))
    }

    pub fn coalition(&self, cid: &CoalitionId) -> Result<&Coalition, CoalitionError> {
        self.coals
            .get(cid)
            .ok_or_else(|| CoalitionError::UnknownCoalition(cid.clone()))
    }

    pub fn create_agent(
        &self,
        aid: AgentId,
        info: BTreeSet<Information>,
        aac: Pdp,
    ) -> Result<Self, CoalitionError> {
        if self.agents.contains_key(&aid) {
            return Err(CoalitionError::DuplicateAgent(aid));
        }
        let mut next = self.clone();
        next.agents.insert(aid, Agent { info, aac });
        Ok(next)
    }

    pub fn create_coalition(&self, cid: CoalitionId) -> Result<Self, CoalitionError> {
        if self.coals.contains_key(&cid) {
            return Err(CoalitionError::DuplicateCoalition(cid));
        }
        let mut next = self.clone();
        next.coals.insert(cid, Coalition::default());
        Ok(next)
    }

    pub fn join(&self, aid: &AgentId, cid: &CoalitionId) -> Result<Self, CoalitionError> {
        self.agent(aid)?;
        self.coalition(cid)?;
        let mut next = self.clone();
        next.coals
            .get_mut(cid)
            .expect("checked above")
            .agents
            .insert(aid.clone());
        Ok(next)
    }

    /// Shares `i_set` from the agent into the coalition, copying every agent
    /// policy that covers a shared item into the coalition PDP. The coalition
    /// PDP is always reset to deny-overrides.
    pub fn share_info(
        &self,
        aid: &AgentId,
        cid: &CoalitionId,
        i_set: &BTreeSet<Information>,
    ) -> Result<Self, CoalitionError> {
        let agent = self.agent(aid)?;
        self.coalition(cid)?;
        if let Some(missing) = i_set.iter().find(|i| !agent.info.contains(*i)) {
            return Err(CoalitionError::NotOwned {
                agent: aid.clone(),
                info: missing.clone(),
            });
        }
        let attached: Vec<Policy> = i_set
            .iter()
            .flat_map(|i| get_matching_policies(&agent.aac, i))
            .cloned()
            .collect();

        let mut next = self.clone();
        let coal = next.coals.get_mut(cid).expect("checked above");
        coal.info.extend(i_set.iter().cloned());
        coal.cac.policies.extend(attached);
        coal.cac.policy_comb_alg = CombAlg::DenyOverrides;
        Ok(next)
    }

    /// Policy enforcement entry point: evaluates the access against the
    /// coalition PDP. Never changes the state.
    pub fn request_info(
        &self,
        aid: &AgentId,
        cid: &CoalitionId,
        act: Action,
        i_set: &BTreeSet<Information>,
    ) -> Result<Effect, CoalitionError> {
        self.agent(aid)?;
        let coal = self.coalition(cid)?;
        if let Some(missing) = i_set.iter().find(|i| !coal.info.contains(*i)) {
            return Err(CoalitionError::InfoNotInCoalition {
                coalition: cid.clone(),
                info: missing.clone(),
            });
        }
        let req = Request::single(aid.clone(), i_set.clone(), act)?;
        Ok(evaluate_pdp(&req, &coal.cac))
    }

    /// Hands a freshly produced item to an agent together with the policies
    /// that govern it. Used by producer operations of the workflow engine.
    pub fn acquire_info(
        &self,
        aid: &AgentId,
        info: Information,
        policies: impl IntoIterator<Item = Policy>,
    ) -> Result<Self, CoalitionError> {
        self.agent(aid)?;
        let mut next = self.clone();
        let agent = next.agents.get_mut(aid).expect("checked above");
        agent.info.insert(info);
        agent.aac.policies.extend(policies);
        Ok(next)
    }

    /// Replaces an agent's policy set, keeping its combining algorithm.
    pub fn with_agent_policies(
        &self,
        aid: &AgentId,
        policies: BTreeSet<Policy>,
    ) -> Result<Self, CoalitionError> {
        self.agent(aid)?;
        let mut next = self.clone();
        next.agents
            .get_mut(aid)
            .expect("checked above")
            .aac
            .policies = policies;
        Ok(next)
    }

    /// MEMBERSHIP: every coalition member is a registered agent.
    pub fn membership_holds(&self) -> bool {
        self.coals
            .values()
            .all(|c| c.agents.iter().all(|a| self.agents.contains_key(a)))
    }

    /// Every information item known anywhere in the state.
    pub fn all_information(&self) -> BTreeSet<Information> {
        self.agents
            .values()
            .flat_map(|a| a.info.iter())
            .chain(self.coals.values().flat_map(|c| c.info.iter()))
            .cloned()
            .collect()
    }
}

/// Policies of `pdp` whose target resources cover `i`; an empty resource set
/// covers every item.
pub fn get_matching_policies<'a>(pdp: &'a Pdp, i: &Information) -> Vec<&'a Policy> {
    pdp.policies
        .iter()
        .filter(|p| p.target.resources.is_empty() || p.target.resources.contains(i))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{Rule, Target};

    fn agent(s: &str) -> AgentId {
        AgentId::new(s).unwrap()
    }
    fn coal(s: &str) -> CoalitionId {
        CoalitionId::new(s).unwrap()
    }
    fn info(s: &str) -> Information {
        Information::new(s).unwrap()
    }
    fn infos(xs: &[&str]) -> BTreeSet<Information> {
        xs.iter().map(|x| info(x)).collect()
    }

    fn pp_policy() -> Policy {
        Policy::new(
            Target::new([], [info("PP")], []),
            [
                Rule::permit(Some(Target::new(
                    [agent("compA")],
                    [info("PP")],
                    [Action::Write, Action::Read],
                ))),
                Rule::deny(Some(Target::new(
                    [],
                    [info("PP")],
                    [Action::Write, Action::Read],
                ))),
            ],
            CombAlg::PermitOverrides,
        )
    }

    fn plant() -> CoalitionState {
        CoalitionState::new()
            .create_agent(
                agent("compA"),
                infos(&["PP"]),
                Pdp::new([pp_policy()], CombAlg::DenyOverrides),
            )
            .unwrap()
            .create_agent(agent("compB"), infos(&[]), Pdp::empty())
            .unwrap()
            .create_coalition(coal("coal"))
            .unwrap()
            .join(&agent("compA"), &coal("coal"))
            .unwrap()
            .join(&agent("compB"), &coal("coal"))
            .unwrap()
    }

    #[test]
    fn create_agent_cases() {
        let s = CoalitionState::new()
            .create_agent(agent("a1"), BTreeSet::new(), Pdp::empty())
            .unwrap();
        assert!(s.agent(&agent("a1")).unwrap().info.is_empty());
        assert!(s.coalitions().is_empty());
        assert_eq!(
            s.create_agent(agent("a1"), BTreeSet::new(), Pdp::empty()),
            Err(CoalitionError::DuplicateAgent(agent("a1")))
        );
    }

    #[test]
    fn create_coalition_cases() {
        let s = CoalitionState::new()
            .create_coalition(coal("coal"))
            .unwrap();
        let c = s.coalition(&coal("coal")).unwrap();
        assert!(c.agents.is_empty() && c.info.is_empty());
        assert_eq!(c.cac, Pdp::empty());
        assert_eq!(
            s.create_coalition(coal("coal")),
            Err(CoalitionError::DuplicateCoalition(coal("coal")))
        );
    }

    #[test]
    fn new_coalition_pdp_not_applicable() {
        let s = plant()
            .share_info(&agent("compB"), &coal("coal"), &BTreeSet::new())
            .unwrap();
        let s = s.acquire_info(&agent("compB"), info("HA"), []).unwrap();
        let s = s
            .share_info(&agent("compB"), &coal("coal"), &infos(&["HA"]))
            .unwrap();
        assert_eq!(
            s.request_info(
                &agent("compA"),
                &coal("coal"),
                Action::Read,
                &infos(&["HA"])
            ),
            Ok(Effect::NotApplicable)
        );
    }

    #[test]
    fn join_cases() {
        let s = plant();
        assert_eq!(
            s.coalition(&coal("coal")).unwrap().agents,
            [agent("compA"), agent("compB")].into_iter().collect()
        );
        assert_eq!(s.join(&agent("compA"), &coal("coal")).unwrap(), s);
        assert_eq!(
            s.join(&agent("ghost"), &coal("coal")),
            Err(CoalitionError::UnknownAgent(agent("ghost")))
        );
        assert_eq!(
            s.join(&agent("compA"), &coal("nowhere")),
            Err(CoalitionError::UnknownCoalition(coal("nowhere")))
        );
    }

    #[test]
    fn share_info_cases() {
        let s = plant();
        let shared = s
            .share_info(&agent("compA"), &coal("coal"), &infos(&["PP"]))
            .unwrap();
        let c = shared.coalition(&coal("coal")).unwrap();
        assert!(c.info.contains(&info("PP")));
        assert!(c.cac.policies.contains(&pp_policy()));
        assert_eq!(c.cac.policy_comb_alg, CombAlg::DenyOverrides);

        let mut odd = s.clone();
        odd.coals
            .get_mut(&coal("coal"))
            .unwrap()
            .cac
            .policy_comb_alg = CombAlg::PermitOverrides;
        let after = odd
            .share_info(&agent("compA"), &coal("coal"), &BTreeSet::new())
            .unwrap();
        assert_eq!(after, s);

        assert_eq!(
            s.share_info(&agent("compB"), &coal("coal"), &infos(&["PP"])),
            Err(CoalitionError::NotOwned {
                agent: agent("compB"),
                info: info("PP")
            })
        );
    }

    #[test]
    fn request_info_cases() {
        let s = plant()
            .share_info(&agent("compA"), &coal("coal"), &infos(&["PP"]))
            .unwrap();
        let pp = infos(&["PP"]);
        assert_eq!(
            s.request_info(&agent("compB"), &coal("coal"), Action::Read, &pp),
            Ok(Effect::Deny)
        );
        assert_eq!(
            s.request_info(&agent("compA"), &coal("coal"), Action::Write, &pp),
            Ok(Effect::Permit)
        );
        assert!(matches!(
            plant().request_info(&agent("compA"), &coal("coal"), Action::Read, &pp),
            Err(CoalitionError::InfoNotInCoalition { .. })
        ));
        assert!(matches!(
            s.request_info(
                &agent("compA"),
                &coal("coal"),
                Action::Read,
                &BTreeSet::new()
            ),
            Err(CoalitionError::Request(_))
        ));
    }

    #[test]
    fn matching_policies() {
        let ha_policy = Policy::new(
            Target::new([], [info("HA")], []),
            [Rule::deny(None)],
            CombAlg::DenyOverrides,
        );
        let wildcard = Policy::new(Target::any(), [Rule::permit(None)], CombAlg::DenyOverrides);
        let pdp = Pdp::new(
            [pp_policy(), ha_policy.clone(), wildcard.clone()],
            CombAlg::DenyOverrides,
        );

        // linear-scan oracle over the hand-built fixture
        let expect = |i: &str| -> BTreeSet<Policy> {
            let mut out = BTreeSet::new();
            for p in [pp_policy(), ha_policy.clone(), wildcard.clone()] {
                let covers = p.target.resources.is_empty()
                    || p.target.resources.iter().any(|r| r.as_str() == i);
                if covers {
                    out.insert(p);
                }
            }
            out
        };
        for i in ["PP", "HA", "OTHER"] {
            let got: BTreeSet<Policy> = get_matching_policies(&pdp, &info(i))
                .into_iter()
                .cloned()
                .collect();
            assert_eq!(got, expect(i), "item {i}");
        }

        let ha_only = Pdp::new([ha_policy], CombAlg::DenyOverrides);
        assert!(get_matching_policies(&ha_only, &info("PP")).is_empty());
        assert!(get_matching_policies(&Pdp::empty(), &info("PP")).is_empty());
    }

    #[test]
    fn request_info_is_pure() {
        let s = plant()
            .share_info(&agent("compA"), &coal("coal"), &infos(&["PP"]))
            .unwrap();
        let before = s.clone();
        for _ in 0..5 {
            let _ = s.request_info(
                &agent("compB"),
                &coal("coal"),
                Action::Read,
                &infos(&["PP"]),
            );
        }
        assert_eq!(s, before);
    }
}
