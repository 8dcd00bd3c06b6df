use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use dcverify::asm::{format_step, run, validate_workflow, Outcome, TerminalOutcome, Trace};
use dcverify::checker::{
    check_liveness, check_safety, reachable, CheckError, CheckReport, ExplorationSpace, Verdict,
};
use dcverify::ids::{AgentId, CoalitionId, Information};
use dcverify::policy::{Action, Effect};
use dcverify::scenario::{parse_scenario_bytes, Scenario};

#[derive(Parser)]
#[command(
    name = "dcv",
    version,
    about = "Run and verify dynamic coalition workflows"
)]
struct Cli {
    /// Step bound for runs and exploration (overrides the scenario setting).
    #[arg(long, global = true)]
    max_steps: Option<usize>,
    /// Maximum number of explored configurations.
    #[arg(long, global = true)]
    state_cap: Option<usize>,
    /// Worker threads for exploration.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    #[arg(long, global = true, value_enum, default_value_t = Format::Plain)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Plain,
    JsonLines,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the workflow once and print its trace.
    Run {
        scenario: PathBuf,
        /// Use a declared policy variant instead of the declared policies.
        #[arg(long)]
        variant: Option<String>,
    },
    /// Explore all reachable configurations and check properties.
    Check {
        scenario: PathBuf,
        /// Check deadlock freedom.
        #[arg(long)]
        liveness: bool,
        /// Check a forbidden-state property by name, or `all`.
        #[arg(long, value_name = "NAME|all")]
        safety: Option<String>,
        /// Also explore every declared policy variant.
        #[arg(long)]
        with_variants: bool,
    },
    /// Evaluate one access request against the initial state.
    Eval {
        scenario: PathBuf,
        #[arg(long)]
        agent: String,
        #[arg(long)]
        coalition: String,
        #[arg(long)]
        action: String,
        /// Comma-separated information items.
        #[arg(long, value_delimiter = ',', required = true)]
        info: Vec<String>,
    },
    /// Report structural problems of the workflow.
    Validate { scenario: PathBuf },
}

const OK: u8 = 0;
const FAILED: u8 = 1;
const USAGE: u8 = 2;

struct Out {
    format: Format,
    buf: String,
}

impl Out {
    fn line(&mut self, plain: impl AsRef<str>, json: serde_json::Value) {
        match self.format {
            Format::Plain => self.buf.push_str(plain.as_ref()),
            Format::JsonLines => self.buf.push_str(&json.to_string()),
        }
        self.buf.push('\n');
    }
}

fn load(path: &Path) -> Result<Scenario, u8> {
    let bytes = std::fs::read(path).map_err(|e| {
        eprintln!("{}: {e}", path.display());
        USAGE
    })?;
    parse_scenario_bytes(&bytes).map_err(|diags| {
        for d in diags {
            eprintln!("{}:{d}", path.display());
        }
        USAGE
    })
}

fn require_valid(s: &Scenario, path: &Path) -> Result<(), u8> {
    let report = validate_workflow(&s.workflow, &s.registry());
    for issue in &report.issues {
        eprintln!("{}: {issue}", path.display());
    }
    if report.is_valid() {
        Ok(())
    } else {
        Err(USAGE)
    }
}

fn print_trace(out: &mut Out, trace: &Trace) {
    for (i, r) in trace.records.iter().enumerate() {
        out.line(
            format_step(i, r),
            json!({"step": i, "node": r.node.as_str(), "kind": r.kind_label(), "record": r.to_string()}),
        );
    }
    out.line(
        format!("OUTCOME: {}", trace.outcome),
        json!({"outcome": trace.outcome.to_string()}),
    );
}

fn cmd_run(cli: &Cli, out: &mut Out, path: &Path, variant: Option<&str>) -> Result<u8, u8> {
    let s = load(path)?;
    require_valid(&s, path)?;
    let (mut init, mut reg) = (
        s.initial_state().map_err(|e| {
            eprintln!("{}: {e}", path.display());
            USAGE
        })?,
        s.registry(),
    );
    if let Some(name) = variant {
        let Some(v) = s.variant(name) else {
            eprintln!("{}: no such variant `{name}`", path.display());
            return Err(USAGE);
        };
        (init, reg) = v.apply(&init, &reg).map_err(|e| {
            eprintln!("{}: {e}", path.display());
            USAGE
        })?;
    }
    let trace = run(
        &s.workflow,
        init,
        &reg,
        cli.max_steps.unwrap_or(s.max_steps()),
    );
    print_trace(out, &trace);
    Ok(match trace.outcome {
        Outcome::Completed(TerminalOutcome::Success) => OK,
        _ => FAILED,
    })
}

fn report(out: &mut Out, label: &str, r: &CheckReport, space: &ExplorationSpace) {
    out.line(
        format!("{label}: {}", r.verdict),
        json!({"check": label, "verdict": r.verdict.to_string()}),
    );
    let Some(w) = &r.witness else { return };
    out.line(
        format!(
            "  witness: config {} (variant {}) at {}",
            w.index, w.variant, w.config.node
        ),
        json!({"check": label, "witness": w.index, "variant": w.variant, "node": w.config.node.as_str(), "depth": space.configs[w.index].depth}),
    );
    if let Some(a) = &w.assignment {
        let text: Vec<String> = a.iter().map(|(k, v)| format!("{k} = {v}")).collect();
        out.line(
            format!("  assignment: {}", text.join(", ")),
            json!({"check": label, "assignment": a.iter().map(|(k, v)| (k.clone(), v.to_string())).collect::<Vec<_>>()}),
        );
    }
    for (i, rec) in w.trace.iter().enumerate() {
        out.line(
            format!("  {}", format_step(i, rec)),
            json!({"check": label, "step": i, "node": rec.node.as_str(), "kind": rec.kind_label(), "record": rec.to_string()}),
        );
    }
}

fn cmd_check(
    cli: &Cli,
    out: &mut Out,
    path: &Path,
    liveness: bool,
    safety: Option<&str>,
    with_variants: bool,
) -> Result<u8, u8> {
    let s = load(path)?;
    let (liveness, safety) = match (liveness, safety) {
        (false, None) => (true, Some("all")),
        other => other,
    };
    let properties: Vec<(&String, _)> = match safety {
        None => Vec::new(),
        Some("all") => s.properties.iter().collect(),
        Some(name) => match s.properties.get_key_value(name) {
            Some(p) => vec![p],
            None => {
                eprintln!("{}: no such property `{name}`", path.display());
                return Err(USAGE);
            }
        },
    };
    require_valid(&s, path)?;
    let init = s.initial_state().map_err(|e| {
        eprintln!("{}: {e}", path.display());
        USAGE
    })?;
    let mut opts = s.explore_options();
    if let Some(n) = cli.max_steps {
        opts.max_steps = n;
    }
    if let Some(n) = cli.state_cap {
        opts.state_cap = n;
    }
    opts.workers = cli.workers;
    let variants = if with_variants {
        s.policy_variants()
    } else {
        Vec::new()
    };

    let space = match reachable(&s.workflow, &init, &s.registry(), &variants, opts) {
        Ok(space) => space,
        Err(e @ CheckError::StateLimitExceeded(_)) => {
            out.line(
                format!("EXPLORATION: {e}"),
                json!({"exploration": e.to_string()}),
            );
            return Ok(FAILED);
        }
        Err(e) => {
            eprintln!("{}: {e}", path.display());
            return Err(USAGE);
        }
    };
    out.line(
        format!(
            "EXPLORED: {} configs, variants {}",
            space.len(),
            space.variants.join(", ")
        ),
        json!({"explored": space.len(), "variants": space.variants}),
    );

    let mut code = OK;
    if liveness {
        let r = check_liveness(&space);
        if r.verdict == Verdict::Violated {
            code = FAILED;
        }
        report(out, "LIVENESS", &r, &space);
    }
    for (name, f) in properties {
        let r = check_safety(f, &space).map_err(|e| {
            eprintln!("{}: property `{name}`: {e}", path.display());
            USAGE
        })?;
        if r.verdict == Verdict::Violated {
            code = FAILED;
        }
        report(out, &format!("SAFETY {name}"), &r, &space);
    }
    Ok(code)
}

fn cmd_eval(
    out: &mut Out,
    path: &Path,
    agent: &str,
    coalition: &str,
    action: &str,
    info: &[String],
) -> Result<u8, u8> {
    let s = load(path)?;
    let usage = |msg: String| {
        eprintln!("{}: {msg}", path.display());
        USAGE
    };
    let agent: AgentId = agent.parse().map_err(|e| usage(format!("{e}")))?;
    let coalition: CoalitionId = coalition.parse().map_err(|e| usage(format!("{e}")))?;
    let action =
        Action::from_keyword(action).ok_or_else(|| usage(format!("unknown action `{action}`")))?;
    let items = info
        .iter()
        .map(|i| i.trim().parse::<Information>())
        .collect::<Result<BTreeSet<_>, _>>()
        .map_err(|e| usage(format!("{e}")))?;
    let state = s.initial_state().map_err(|e| usage(e.to_string()))?;
    let effect = state
        .request_info(&agent, &coalition, action, &items)
        .map_err(|e| usage(e.to_string()))?;
    out.line(
        format!("EFFECT: {effect}"),
        json!({"effect": effect.to_string()}),
    );
    Ok(if effect == Effect::Permit { OK } else { FAILED })
}

fn cmd_validate(out: &mut Out, path: &Path) -> Result<u8, u8> {
    let s = load(path)?;
    let report = validate_workflow(&s.workflow, &s.registry());
    for issue in &report.issues {
        out.line(
            issue.to_string(),
            json!({"severity": format!("{:?}", issue.severity).to_uppercase(), "kind": issue.kind.to_string(), "node": issue.node.as_ref().map(|n| n.as_str()), "message": issue.message}),
        );
    }
    let verdict = if report.is_valid() {
        "VALID"
    } else {
        "INVALID"
    };
    out.line(
        format!("WORKFLOW: {verdict}"),
        json!({"workflow": verdict, "errors": report.errors().count(), "warnings": report.warnings().count()}),
    );
    Ok(if report.is_valid() { OK } else { FAILED })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut out = Out {
        format: cli.format,
        buf: String::new(),
    };
    let result = match &cli.command {
        Command::Run { scenario, variant } => cmd_run(&cli, &mut out, scenario, variant.as_deref()),
        Command::Check {
            scenario,
            liveness,
            safety,
            with_variants,
        } => cmd_check(
            &cli,
            &mut out,
            scenario,
            *liveness,
            safety.as_deref(),
            *with_variants,
        ),
        Command::Eval {
            scenario,
            agent,
            coalition,
            action,
            info,
        } => cmd_eval(&mut out, scenario, agent, coalition, action, info),
        Command::Validate { scenario } => cmd_validate(&mut out, scenario),
    };
    print!("{}", out.buf);
    ExitCode::from(result.unwrap_or_else(|code| code))
}
