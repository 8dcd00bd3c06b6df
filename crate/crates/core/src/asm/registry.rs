//! Operation registry: what an update node's operation name means.

use std::collections::BTreeMap;

use serde::Serialize;

use super::workflow::Arg;
use crate::ids::{AgentId, CoalitionId};
use crate::policy::Policy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Builtin {
    CreateAgent,
    CreateCoalition,
    Join,
    ShareInfo,
    RequestInfo,
}

impl Builtin {
    pub const ALL: [Builtin; 5] = [
        Builtin::CreateAgent,
        Builtin::CreateCoalition,
        Builtin::Join,
        Builtin::ShareInfo,
        Builtin::RequestInfo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Builtin::CreateAgent => "create_agent",
            Builtin::CreateCoalition => "create_coalition",
            Builtin::Join => "join",
            Builtin::ShareInfo => "share_info",
            Builtin::RequestInfo => "request_info",
        }
    }

    /// Whether the operation yields a value a result variable can bind.
    pub fn produces_value(self) -> bool {
        !matches!(self, Builtin::Join | Builtin::ShareInfo)
    }

    /// `true` for positions that take an `{...}` information set.
    fn shape(self) -> &'static [bool] {
        match self {
            Builtin::CreateAgent | Builtin::CreateCoalition => &[false],
            Builtin::Join => &[false, false],
            Builtin::ShareInfo => &[false, false, true],
            Builtin::RequestInfo => &[false, false, false, true],
        }
    }

    pub(crate) fn check_shape(self, args: &[Arg]) -> Result<(), String> {
        let shape = self.shape();
        if args.len() != shape.len() {
            return Err(format!(
                "`{}` takes {} arguments, got {}",
                self.name(),
                shape.len(),
                args.len()
            ));
        }
        for (i, (arg, wants_set)) in args.iter().zip(shape).enumerate() {
            let is_set = matches!(arg, Arg::Set(_));
            if is_set != *wants_set {
                let expected = if *wants_set { "an {...} set" } else { "a name" };
                return Err(format!(
                    "argument {} of `{}` must be {expected}",
                    i + 1,
                    self.name()
                ));
            }
        }
        Ok(())
    }
}

/// A scenario-declared operation that mints a fresh information token for
/// `actor`, attaches `attach` (with workflow variables substituted) to the
/// actor's PDP and optionally shares the token into `shares_into`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Producer {
    pub name: String,
    pub actor: AgentId,
    pub shares_into: Option<CoalitionId>,
    pub attach: Option<Policy>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum OpMeaning {
    Builtin(Builtin),
    Producer(Producer),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OpRegistry {
    ops: BTreeMap<String, OpMeaning>,
}

impl OpRegistry {
    pub fn with_builtins() -> Self {
        Self {
            ops: Builtin::ALL
                .iter()
                .map(|b| (b.name().to_string(), OpMeaning::Builtin(*b)))
                .collect(),
        }
    }

    /// Registers or replaces a producer.
    pub fn register_producer(&mut self, producer: Producer) {
        self.ops
            .insert(producer.name.clone(), OpMeaning::Producer(producer));
    }

    pub fn get(&self, op: &str) -> Option<&OpMeaning> {
        self.ops.get(op)
    }

    pub fn producer_mut(&mut self, name: &str) -> Option<&mut Producer> {
        match self.ops.get_mut(name) {
            Some(OpMeaning::Producer(p)) => Some(p),
            _ => None,
        }
    }

    pub fn is_builtin(name: &str) -> bool {
        Builtin::ALL.iter().any(|b| b.name() == name)
    }
}

impl Default for OpRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}
