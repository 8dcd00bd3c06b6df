//! Abstract-state-machine workflow engine.

mod engine;
mod registry;
mod workflow;

pub use engine::{
    apply_update, eval_guard, format_step, instantiate_policy, run, step, step_detailed, Bindings,
    Config, ConfigStatus, EngineError, Event, EventResult, GuardEval, Outcome, StepDetail,
    StepRecord, Trace, Transition, Value, DEFAULT_MAX_STEPS,
};
pub use registry::{Builtin, OpMeaning, OpRegistry, Producer};
pub use workflow::{
    validate_workflow, Arg, Guard, Issue, IssueKind, NodeKind, Severity, TerminalOutcome,
    ValidationReport, Workflow, WorkflowNode,
};
