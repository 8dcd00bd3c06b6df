use std::fmt::Write;

use super::Scenario;
use crate::asm::{NodeKind, TerminalOutcome};
use crate::policy::Target;

fn list<T: ToString>(items: impl IntoIterator<Item = T>) -> String {
    let items: Vec<String> = items.into_iter().map(|i| i.to_string()).collect();
    format!("[{}]", items.join(", "))
}

fn target(t: &Target) -> String {
    format!(
        "(subjects={}, resources={}, actions={})",
        list(&t.subjects),
        list(&t.resources),
        list(&t.actions)
    )
}

fn quote(s: &str) -> String {
    let mut out = String::from("\"");
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Canonical text of `s`: blocks in a fixed order, entries sorted by name.
pub fn serialize_scenario(s: &Scenario) -> String {
    let mut out = String::new();
    let o = &mut out;

    if s.settings.max_steps.is_some() || s.settings.state_cap.is_some() {
        o.push_str("settings {\n");
        if let Some(n) = s.settings.max_steps {
            let _ = writeln!(o, "  max_steps = {n}");
        }
        if let Some(n) = s.settings.state_cap {
            let _ = writeln!(o, "  state_cap = {n}");
        }
        o.push_str("}\n\n");
    }

    for (name, p) in &s.policies {
        let _ = writeln!(o, "policy {name} {{");
        let _ = writeln!(o, "  target = {}", target(&p.target));
        let _ = writeln!(o, "  combine = {}", p.rule_comb_alg);
        for r in &p.rules {
            match r.target() {
                Some(t) => {
                    let _ = writeln!(
                        o,
                        "  rule {{ target = {} effect = {} }}",
                        target(t),
                        r.effect()
                    );
                }
                None => {
                    let _ = writeln!(o, "  rule {{ effect = {} }}", r.effect());
                }
            }
        }
        o.push_str("}\n\n");
    }

    for (id, a) in &s.agents {
        let _ = writeln!(o, "agent {id} {{");
        let _ = writeln!(o, "  info = {}", list(&a.info));
        let _ = writeln!(o, "  combine = {}", a.combine);
        for p in &a.policies {
            let _ = writeln!(o, "  policy {p}");
        }
        o.push_str("}\n\n");
    }

    for (id, c) in &s.coalitions {
        let _ = writeln!(o, "coalition {id} {{");
        let _ = writeln!(o, "  members = {}", list(&c.members));
        if !c.shares.is_empty() {
            let _ = writeln!(
                o,
                "  shares = {}",
                list(c.shares.iter().map(|(a, i)| format!("{a}:{i}")))
            );
        }
        o.push_str("}\n\n");
    }

    for (name, p) in &s.producers {
        let _ = writeln!(o, "producer {name} {{");
        let _ = writeln!(o, "  actor = {}", p.actor);
        if let Some(c) = &p.shares_into {
            let _ = writeln!(o, "  shares_into = {c}");
        }
        if let Some(a) = &p.attach_policy {
            let _ = writeln!(o, "  attach_policy = {a}");
        }
        o.push_str("}\n\n");
    }

    for (name, v) in &s.variants {
        let _ = writeln!(o, "variant {name} {{");
        for (a, ps) in &v.agents {
            let _ = writeln!(o, "  agent {a} = {}", list(ps));
        }
        for (p, attach) in &v.producers {
            match attach {
                Some(a) => {
                    let _ = writeln!(o, "  producer {p} = {a}");
                }
                None => {
                    let _ = writeln!(o, "  producer {p} detach");
                }
            }
        }
        o.push_str("}\n\n");
    }

    o.push_str("workflow {\n");
    let _ = writeln!(o, "  entry = {}", s.workflow.entry());
    for n in s.workflow.nodes() {
        let _ = write!(o, "  node {}: ", n.id);
        match &n.kind {
            NodeKind::Update {
                op,
                args,
                result,
                next,
            } => {
                let args: Vec<String> = args.iter().map(ToString::to_string).collect();
                let _ = write!(o, "update {op}({})", args.join(", "));
                if let Some(r) = result {
                    let _ = write!(o, " -> {r}");
                }
                let _ = write!(o, " then {next}");
            }
            NodeKind::Condition { guard, yes, no } => {
                let _ = write!(o, "if {guard}");
                if let Some(y) = yes {
                    let _ = write!(o, " yes {y}");
                }
                if let Some(n) = no {
                    let _ = write!(o, " no {n}");
                }
            }
            NodeKind::Terminal {
                outcome: TerminalOutcome::Success,
                message,
            } => {
                o.push_str("done");
                if !message.is_empty() {
                    let _ = write!(o, " {}", quote(message));
                }
            }
            NodeKind::Terminal {
                outcome: TerminalOutcome::Error,
                message,
            } => {
                let _ = write!(o, "fail {}", quote(message));
            }
        }
        o.push('\n');
    }
    o.push_str("}\n");

    for (name, f) in &s.properties {
        let _ = write!(o, "\nproperty {name} forbidden {{\n  {f}\n}}\n");
    }
    out
}
