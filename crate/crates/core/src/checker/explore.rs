//! Breadth-first exploration of the reachable configuration space and the
//! liveness/safety checks over it.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use super::formula::{eval_formula, Assignment, Formula, FormulaError};
use crate::asm::{
    step_detailed, Config, ConfigStatus, OpRegistry, StepRecord, Transition, Value, Workflow,
    DEFAULT_MAX_STEPS,
};
use crate::coalition::{CoalitionError, CoalitionState};
use crate::ids::{AgentId, NodeId};
use crate::policy::Policy;

pub const DEFAULT_STATE_CAP: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CheckError {
    #[error("state limit exceeded: more than {0} configurations")]
    StateLimitExceeded(usize),
    #[error("policy variant `{name}`: {source}")]
    Variant {
        name: String,
        source: CoalitionError,
    },
    #[error("producer `{0}` named by a policy variant does not exist")]
    UnknownProducer(String),
    #[error("could not build worker pool: {0}")]
    Workers(String),
    #[error(transparent)]
    Formula(#[from] FormulaError),
}

/// An alternative policy configuration explored next to the declared one.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PolicyVariant {
    pub name: String,
    /// Replacement policy sets for agents' own PDPs.
    pub agent_policies: BTreeMap<AgentId, BTreeSet<Policy>>,
    /// Replacement attached policy per producer (`None` detaches).
    pub producer_policies: BTreeMap<String, Option<Policy>>,
}

impl PolicyVariant {
    pub fn apply(
        &self,
        init: &CoalitionState,
        reg: &OpRegistry,
    ) -> Result<(CoalitionState, OpRegistry), CheckError> {
        let mut state = init.clone();
        for (agent, policies) in &self.agent_policies {
            state = state
                .with_agent_policies(agent, policies.clone())
                .map_err(|source| CheckError::Variant {
                    name: self.name.clone(),
                    source,
                })?;
        }
        let mut reg = reg.clone();
        for (producer, policy) in &self.producer_policies {
            reg.producer_mut(producer)
                .ok_or_else(|| CheckError::UnknownProducer(producer.clone()))?
                .attach = policy.clone();
        }
        Ok((state, reg))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExploreOptions {
    pub max_steps: usize,
    pub state_cap: usize,
    /// 0 or 1 explores on the calling thread.
    pub workers: usize,
}

impl Default for ExploreOptions {
    fn default() -> Self {
        Self {
            max_steps: DEFAULT_MAX_STEPS,
            state_cap: DEFAULT_STATE_CAP,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NodeStatus {
    Active,
    Terminal,
    Stuck,
    /// Not expanded because it sits at the step bound.
    Frontier,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Explored {
    pub config: Config,
    /// Index into `ExplorationSpace::variants`; 0 is the declared policies.
    pub variant: usize,
    pub depth: usize,
    pub parent: Option<usize>,
    pub successors: Vec<usize>,
    /// The record produced when this config was stepped.
    pub record: Option<StepRecord>,
    pub status: NodeStatus,
}

/// Reachable configurations in breadth-first discovery order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExplorationSpace {
    pub variants: Vec<String>,
    pub configs: Vec<Explored>,
}

type Key = (
    usize,
    NodeId,
    CoalitionState,
    BTreeMap<String, Value>,
    Option<String>,
);

fn key_of(variant: usize, cfg: &Config) -> Key {
    (
        variant,
        cfg.node.clone(),
        cfg.state.clone(),
        cfg.bindings.clone(),
        cfg.fault.clone(),
    )
}

impl ExplorationSpace {
    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    /// Indices from the variant's initial config to `idx`, inclusive.
    pub fn path_to(&self, idx: usize) -> Vec<usize> {
        let mut path = vec![idx];
        let mut cur = idx;
        while let Some(p) = self.configs[cur].parent {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    pub fn stuck(&self) -> impl Iterator<Item = (usize, &Explored)> {
        self.configs
            .iter()
            .enumerate()
            .filter(|(_, e)| e.status == NodeStatus::Stuck)
    }
}

/// Breadth-first closure of `step` from one initial config per variant (the
/// declared policies first, then each entry of `variants`).
pub fn reachable(
    w: &Workflow,
    init: &CoalitionState,
    reg: &OpRegistry,
    variants: &[PolicyVariant],
    opts: ExploreOptions,
) -> Result<ExplorationSpace, CheckError> {
    let mut setups = vec![(init.clone(), reg.clone())];
    for v in variants {
        setups.push(v.apply(init, reg)?);
    }
    let pool = if opts.workers > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(opts.workers)
                .build()
                .map_err(|e| CheckError::Workers(e.to_string()))?,
        )
    } else {
        None
    };

    let mut space = ExplorationSpace {
        variants: std::iter::once("declared".to_string())
            .chain(variants.iter().map(|v| v.name.clone()))
            .collect(),
        configs: Vec::new(),
    };
    let mut index: HashMap<Key, usize> = HashMap::new();
    let mut frontier = Vec::new();

    for (variant, (state, _)) in setups.iter().enumerate() {
        let cfg = Config::initial(w, state.clone());
        let key = key_of(variant, &cfg);
        if index.contains_key(&key) {
            continue;
        }
        index.insert(key, space.configs.len());
        frontier.push(space.configs.len());
        space.configs.push(Explored {
            config: cfg,
            variant,
            depth: 0,
            parent: None,
            successors: Vec::new(),
            record: None,
            status: NodeStatus::Frontier,
        });
    }
    if space.configs.len() > opts.state_cap {
        return Err(CheckError::StateLimitExceeded(opts.state_cap));
    }

    while !frontier.is_empty() {
        let expandable: Vec<usize> = frontier
            .iter()
            .copied()
            .filter(|&i| space.configs[i].depth < opts.max_steps)
            .collect();
        let expand = |&i: &usize| -> Transition {
            let e = &space.configs[i];
            step_detailed(&e.config, w, &setups[e.variant].1)
        };
        let transitions: Vec<Transition> = match &pool {
            Some(pool) => pool.install(|| expandable.par_iter().map(expand).collect()),
            None => expandable.iter().map(expand).collect(),
        };

        let mut next_frontier = Vec::new();
        for (&i, t) in expandable.iter().zip(transitions) {
            let (variant, depth) = (space.configs[i].variant, space.configs[i].depth);
            let mut succ_ids = Vec::with_capacity(t.successors.len());
            for cfg in t.successors {
                let key = key_of(variant, &cfg);
                let id = match index.get(&key) {
                    Some(&id) => id,
                    None => {
                        let id = space.configs.len();
                        if id >= opts.state_cap {
                            return Err(CheckError::StateLimitExceeded(opts.state_cap));
                        }
                        index.insert(key, id);
                        space.configs.push(Explored {
                            config: cfg,
                            variant,
                            depth: depth + 1,
                            parent: Some(i),
                            successors: Vec::new(),
                            record: None,
                            status: NodeStatus::Frontier,
                        });
                        next_frontier.push(id);
                        id
                    }
                };
                succ_ids.push(id);
            }
            let e = &mut space.configs[i];
            e.successors = succ_ids;
            e.record = Some(t.record);
            e.status = match t.status {
                ConfigStatus::Active => NodeStatus::Active,
                ConfigStatus::Terminal(_) => NodeStatus::Terminal,
                ConfigStatus::Stuck => NodeStatus::Stuck,
            };
        }
        frontier = next_frontier;
    }
    Ok(space)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Holds,
    Violated,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Holds => "HOLDS",
            Verdict::Violated => "VIOLATED",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Witness {
    pub index: usize,
    pub variant: String,
    pub config: Config,
    pub assignment: Option<Assignment>,
    /// Step records from the initial config up to the witness. For a stuck
    /// witness the last record is the failed condition.
    pub trace: Vec<StepRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CheckReport {
    pub verdict: Verdict,
    pub witness: Option<Witness>,
}

impl CheckReport {
    fn holds() -> Self {
        Self {
            verdict: Verdict::Holds,
            witness: None,
        }
    }
}

fn witness(
    space: &ExplorationSpace,
    idx: usize,
    include_own: bool,
    assignment: Option<Assignment>,
) -> Witness {
    let path = space.path_to(idx);
    let mut trace: Vec<StepRecord> = path[..path.len() - 1]
        .iter()
        .filter_map(|&i| space.configs[i].record.clone())
        .collect();
    if include_own {
        trace.extend(space.configs[idx].record.clone());
    }
    let e = &space.configs[idx];
    Witness {
        index: idx,
        variant: space.variants[e.variant].clone(),
        config: e.config.clone(),
        assignment,
        trace,
    }
}

/// Deadlock freedom: every expanded non-terminal config has a successor.
pub fn check_liveness(space: &ExplorationSpace) -> CheckReport {
    match space.stuck().next() {
        None => CheckReport::holds(),
        Some((idx, _)) => CheckReport {
            verdict: Verdict::Violated,
            witness: Some(witness(space, idx, true, None)),
        },
    }
}

/// `forbidden` must be false in every reachable config.
pub fn check_safety(
    forbidden: &Formula,
    space: &ExplorationSpace,
) -> Result<CheckReport, CheckError> {
    forbidden.check()?;
    for (idx, e) in space.configs.iter().enumerate() {
        let out = eval_formula(forbidden, &e.config)?;
        if out.holds {
            return Ok(CheckReport {
                verdict: Verdict::Violated,
                witness: Some(witness(space, idx, false, Some(out.assignment))),
            });
        }
    }
    Ok(CheckReport::holds())
}
