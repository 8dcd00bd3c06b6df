//! Bounded exploration of workflow configurations and property checks.

mod explore;
mod formula;

pub use explore::{
    check_liveness, check_safety, reachable, CheckError, CheckReport, ExplorationSpace,
    ExploreOptions, Explored, NodeStatus, PolicyVariant, Verdict, Witness, DEFAULT_STATE_CAP,
};
pub use formula::{
    carrier, eval_formula, Assignment, Atom, Expr, Formula, FormulaError, FormulaOutcome,
    QuantKind, Quantifier, Sort, Term,
};
