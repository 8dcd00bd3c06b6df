#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use dcverify::asm::{Config, EventResult, Value};
use dcverify::checker::{carrier, Assignment, Atom, Expr, Formula, QuantKind, Term};
use dcverify::ids::{AgentId, CoalitionId, Information};
use dcverify::scenario::{parse_scenario, Scenario};

pub const GOLDEN: [&str; 2] = ["chemical_plant_v1", "chemical_plant_v2"];

pub fn golden_source(name: &str) -> String {
    let path = format!("{}/../../scenarios/{name}.dcs", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

pub fn golden(name: &str) -> Scenario {
    parse_scenario(&golden_source(name)).unwrap_or_else(|d| panic!("{name}: {d:?}"))
}

type Env = BTreeMap<String, Value>;

fn term_is(term: &Term, value: &Value, env: &Env) -> bool {
    match term {
        Term::Wildcard => true,
        Term::Name(n) => match env.get(n) {
            Some(v) => v == value,
            None => !matches!(value, Value::Infos(_)) && value.to_string() == *n,
        },
    }
}

fn atom_holds(atom: &Atom, cfg: &Config, env: &Env) -> bool {
    match atom {
        Atom::Event { op, args, result } => cfg.history.iter().any(|e| {
            e.op == *op
                && e.args.len() == args.len()
                && args.iter().zip(&e.args).all(|(t, v)| term_is(t, v, env))
                && match (result, &e.result) {
                    (None, _) => true,
                    (Some(t), EventResult::Value(v)) => term_is(t, v, env),
                    (Some(_), _) => false,
                }
        }),
        Atom::Eval {
            agent,
            coalition,
            action,
            infos,
            expected,
        } => {
            let name = |t: &Term| match t {
                Term::Name(n) => n.clone(),
                Term::Wildcard => unreachable!("checked formulas have no wildcard here"),
            };
            let a = match env.get(&name(agent)) {
                Some(Value::Agent(a)) => a.clone(),
                Some(_) => return false,
                None => match AgentId::new(name(agent)) {
                    Ok(a) => a,
                    Err(_) => return false,
                },
            };
            let c = match env.get(&name(coalition)) {
                Some(Value::Coalition(c)) => c.clone(),
                Some(_) => return false,
                None => match CoalitionId::new(name(coalition)) {
                    Ok(c) => c,
                    Err(_) => return false,
                },
            };
            let mut items = BTreeSet::new();
            for t in infos {
                match env.get(&name(t)) {
                    Some(Value::Info(i)) => {
                        items.insert(i.clone());
                    }
                    Some(_) => return false,
                    None => match Information::new(name(t)) {
                        Ok(i) => {
                            items.insert(i);
                        }
                        Err(_) => return false,
                    },
                }
            }
            cfg.state.request_info(&a, &c, *action, &items) == Ok(*expected)
        }
    }
}

fn body_holds(e: &Expr, cfg: &Config, env: &Env) -> bool {
    match e {
        Expr::Atom(a) => atom_holds(a, cfg, env),
        Expr::Not(x) => !body_holds(x, cfg, env),
        Expr::And(a, b) => body_holds(a, cfg, env) && body_holds(b, cfg, env),
        Expr::Implies(a, b) => !body_holds(a, cfg, env) || body_holds(b, cfg, env),
    }
}

/// Direct recursive definition over full assignments: every carrier value
/// is tried, the body is evaluated without any pruning.
fn holds_from(f: &Formula, i: usize, cfg: &Config, env: &mut Env) -> bool {
    if i == f.quantifiers.len() {
        return body_holds(&f.body, cfg, env);
    }
    let q = &f.quantifiers[i];
    let results: Vec<bool> = carrier(cfg, q.sort)
        .into_iter()
        .map(|v| {
            env.insert(q.var.clone(), v);
            let r = holds_from(f, i + 1, cfg, env);
            env.remove(&q.var);
            r
        })
        .collect();
    match q.kind {
        QuantKind::Exists => results.contains(&true),
        QuantKind::Forall => !results.contains(&false),
    }
}

/// Brute-force evaluation. When true, also returns the canonical witness
/// of the leading existential block: the first value of each variable under
/// which the rest of the formula still holds.
pub fn naive_eval(f: &Formula, cfg: &Config) -> (bool, Assignment) {
    let mut env = Env::new();
    let holds = holds_from(f, 0, cfg, &mut env);
    let mut witness = Vec::new();
    if holds {
        for (i, q) in f.quantifiers.iter().enumerate() {
            if q.kind != QuantKind::Exists {
                break;
            }
            let v = carrier(cfg, q.sort)
                .into_iter()
                .find(|v| {
                    env.insert(q.var.clone(), v.clone());
                    let r = holds_from(f, i + 1, cfg, &mut env);
                    env.remove(&q.var);
                    r
                })
                .expect("a true existential has a witness");
            env.insert(q.var.clone(), v.clone());
            witness.push((q.var.clone(), v));
        }
    }
    (holds, witness)
}
