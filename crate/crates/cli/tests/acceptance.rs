//! The acceptance suite. Each criterion prints one PASS/FAIL line; run with
//! `cargo test -p dcverify-cli --test acceptance -- --nocapture`.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use common::{golden, golden_source, naive_eval, GOLDEN};
use dcverify::checker::{eval_formula, reachable, ExploreOptions};
use dcverify::coalition::CoalitionState;
use dcverify::ids::{AgentId, CoalitionId, Information};
use dcverify::policy::{
    combine, evaluate_pdp, evaluate_policy, Action, CombAlg, Effect, Pdp, Policy, Request, Rule,
    Target,
};
use dcverify::scenario::{parse_scenario, parse_scenario_bytes, serialize_scenario};
use dcverify::testgen::{fuzz_input, random_formula, random_op_sequence, random_scenario};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Pinned limits.
const GOLDEN_RUNTIME: Duration = Duration::from_secs(1);
const ORACLE_RUNTIME: Duration = Duration::from_secs(10);
const OP_SEQUENCES: usize = 1000;
const MAX_OP_LEN: usize = 50;
const GENERATED_SCENARIOS: usize = 100;
const FUZZ_INPUTS: usize = 10_000;
const RANDOM_FORMULAS: usize = 200;
const REPEATS: usize = 3;

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn scenario_path(name: &str) -> String {
    format!("{}/../../scenarios/{name}.dcs", env!("CARGO_MANIFEST_DIR"))
}

fn dcv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dcv"))
        .args(args)
        .output()
        .expect("dcv binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn agent(s: &str) -> AgentId {
    AgentId::new(s).unwrap()
}

fn item(s: &str) -> Information {
    Information::new(s).unwrap()
}

fn deadlock_reproduction() -> Verdict {
    let v1 = scenario_path("chemical_plant_v1");
    let start = Instant::now();
    let check = dcv(&["check", "--liveness", &v1]);
    let run = dcv(&["run", &v1]);
    let elapsed = start.elapsed();

    let out = stdout(&check);
    ensure(out.contains("LIVENESS: VIOLATED"), || {
        format!("check output:\n{out}")
    })?;
    let last = out.lines().last().unwrap_or_default();
    ensure(
        last.contains("CONDITION EVAL request_info(compB, coal, READ, {PP#1}) = DENY"),
        || format!("witness does not end with the denied guard: {last}"),
    )?;
    let trace = stdout(&run);
    ensure(
        trace.ends_with("OUTCOME: DEADLOCK(n_signoff_check)\n"),
        || format!("run output:\n{trace}"),
    )?;
    ensure(run.status.code() == Some(1), || {
        format!("run exit {:?}", run.status)
    })?;
    ensure(elapsed < GOLDEN_RUNTIME, || format!("took {elapsed:?}"))?;
    Ok(format!(
        "witness ends `{}`, run DEADLOCK, {elapsed:?}",
        last.trim()
    ))
}

fn repaired_process() -> Verdict {
    let v2 = scenario_path("chemical_plant_v2");
    let start = Instant::now();
    let check = dcv(&[
        "check",
        "--liveness",
        "--safety",
        "psi",
        "--with-variants",
        &v2,
    ]);
    let relaxed = dcv(&["run", "--variant", "relaxed", &v2]);
    let elapsed = start.elapsed();

    let out = stdout(&check);
    ensure(
        out.contains("LIVENESS: HOLDS") && out.contains("SAFETY psi: HOLDS"),
        || format!("check output:\n{out}"),
    )?;
    ensure(check.status.code() == Some(0), || {
        format!("check exit {:?}", check.status)
    })?;
    let trace = stdout(&relaxed);
    ensure(
        trace
            .lines()
            .any(|l| l.contains(" n_signoff UPDATE signoff(")),
        || format!("signoff not executed:\n{trace}"),
    )?;
    ensure(trace.ends_with("OUTCOME: COMPLETED(SUCCESS)\n"), || {
        format!("relaxed run:\n{trace}")
    })?;
    ensure(elapsed < GOLDEN_RUNTIME, || format!("took {elapsed:?}"))?;
    Ok(format!(
        "liveness and psi HOLD, relaxed run COMPLETED(SUCCESS), {elapsed:?}"
    ))
}

fn policy_semantics() -> Verdict {
    let pp = item("PP");
    let rule_a1 = Rule::permit(Some(Target::new(
        [agent("compA")],
        [pp.clone()],
        Action::ALL,
    )));
    let rule_a2 = Rule::deny(Some(Target::new([], [pp.clone()], Action::ALL)));
    let policy = Policy::new(
        Target::new([], [pp.clone()], []),
        [rule_a1, rule_a2],
        CombAlg::PermitOverrides,
    );

    let shipped = golden("chemical_plant_v1").policies["pp_policy"].clone();
    ensure(shipped == policy, || {
        format!("shipped pp_policy differs: {shipped:?}")
    })?;

    for action in Action::ALL {
        for (who, want) in [("compA", Effect::Permit), ("compB", Effect::Deny)] {
            let req = Request::single(agent(who), BTreeSet::from([pp.clone()]), action).unwrap();
            let got = evaluate_policy(&policy, &req);
            ensure(got == want, || {
                format!("{who} {action}: {got}, expected {want}")
            })?;
        }
    }
    Ok("compA PERMIT, compB DENY for READ and WRITE".into())
}

/// Binary combination written out as a table; NOT_APPLICABLE is the unit.
fn table(alg: CombAlg, a: Effect, b: Effect) -> Effect {
    use Effect::{Deny as D, NotApplicable as N, Permit as P};
    match (alg, a, b) {
        (_, N, x) | (_, x, N) => x,
        (_, P, P) => P,
        (_, D, D) => D,
        (CombAlg::DenyOverrides, P, D) | (CombAlg::DenyOverrides, D, P) => D,
        (CombAlg::PermitOverrides, P, D) | (CombAlg::PermitOverrides, D, P) => P,
    }
}

fn effect_lists(max: usize) -> Vec<Vec<Effect>> {
    let mut all = Vec::new();
    let mut layer = vec![Vec::new()];
    for _ in 0..max {
        layer = layer
            .iter()
            .flat_map(|l: &Vec<Effect>| {
                Effect::ALL.iter().map(move |e| {
                    let mut n = l.clone();
                    n.push(*e);
                    n
                })
            })
            .collect();
        all.extend(layer.iter().cloned());
    }
    all
}

/// Request fields are tiny, so a request matches a target when every
/// concrete subject, resource and action it names is listed (or the field
/// is left open).
fn brute_matches(req: &Target, t: &Target) -> bool {
    let open_or = |empty: bool, listed: bool| empty || listed;
    req.subjects
        .iter()
        .all(|s| open_or(t.subjects.is_empty(), t.subjects.contains(s)))
        && req
            .resources
            .iter()
            .all(|r| open_or(t.resources.is_empty(), t.resources.contains(r)))
        && req
            .actions
            .iter()
            .all(|a| open_or(t.actions.is_empty(), t.actions.contains(a)))
}

fn brute_fold(alg: CombAlg, effects: &[Effect]) -> Effect {
    let (strong, weak) = match alg {
        CombAlg::DenyOverrides => (Effect::Deny, Effect::Permit),
        CombAlg::PermitOverrides => (Effect::Permit, Effect::Deny),
    };
    let count = |e| effects.iter().filter(|x| **x == e).count();
    if count(strong) > 0 {
        strong
    } else if count(weak) > 0 {
        weak
    } else {
        Effect::NotApplicable
    }
}

fn brute_policy(p: &Policy, req: &Target) -> Effect {
    if !brute_matches(req, &p.target) {
        return Effect::NotApplicable;
    }
    let effects: Vec<Effect> = p
        .rules
        .iter()
        .map(|r| match r.target() {
            Some(t) if !brute_matches(req, t) => Effect::NotApplicable,
            _ => r.effect(),
        })
        .collect();
    brute_fold(p.rule_comb_alg, &effects)
}

fn brute_pdp(pdp: &Pdp, req: &Target) -> Effect {
    let effects: Vec<Effect> = pdp.policies.iter().map(|p| brute_policy(p, req)).collect();
    brute_fold(pdp.policy_comb_alg, &effects)
}

fn subsets<T: Clone + Ord>(pool: &[T]) -> Vec<BTreeSet<T>> {
    (0..1usize << pool.len())
        .map(|mask| {
            pool.iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, x)| x.clone())
                .collect()
        })
        .collect()
}

fn combining_oracle() -> Verdict {
    let start = Instant::now();
    let lists = effect_lists(3);
    ensure(lists.len() == 39, || {
        format!("{} effect lists", lists.len())
    })?;
    for alg in CombAlg::ALL {
        ensure(combine(alg, []) == Effect::NotApplicable, || {
            format!("{alg} on []")
        })?;
        for l in &lists {
            let want = l
                .iter()
                .fold(Effect::NotApplicable, |acc, e| table(alg, acc, *e));
            let got = combine(alg, l.iter().copied());
            ensure(got == want, || {
                format!("{alg} {l:?}: {got}, table says {want}")
            })?;
        }
    }

    let agents = [agent("a1"), agent("a2")];
    let items = [item("r1"), item("r2")];
    let targets: Vec<Target> = subsets(&agents)
        .iter()
        .flat_map(|s| {
            subsets(&items).into_iter().flat_map(move |r| {
                subsets(&Action::ALL).into_iter().map({
                    let s = s.clone();
                    move |a| Target {
                        subjects: s.clone(),
                        resources: r.clone(),
                        actions: a,
                    }
                })
            })
        })
        .collect();
    let requests: Vec<Target> = targets
        .iter()
        .filter(|t| !t.subjects.is_empty() && !t.resources.is_empty() && !t.actions.is_empty())
        .cloned()
        .collect();
    let mut compared = 0usize;
    let mut agree = |pdp: &Pdp, reqs: &[Target]| -> Result<(), String> {
        for t in reqs {
            let req = Request::new(t.clone()).unwrap();
            let (got, want) = (evaluate_pdp(&req, pdp), brute_pdp(pdp, t));
            compared += 1;
            ensure(got == want, || {
                format!("{pdp:?} on {t:?}: {got}, brute force {want}")
            })?;
        }
        Ok(())
    };

    // Every rule target against every request, as a one-rule policy.
    for t in &targets {
        for rule in [Rule::permit(Some(t.clone())), Rule::deny(Some(t.clone()))] {
            for alg in CombAlg::ALL {
                agree(
                    &Pdp::new([Policy::new(Target::any(), [rule.clone()], alg)], alg),
                    &requests,
                )?;
            }
        }
    }

    // Every PDP of <= 2 policies x <= 2 rules over a representative target pool.
    let pool = [
        Target::any(),
        Target::new([agents[0].clone()], [items[0].clone()], [Action::Read]),
        Target::new([], [items[1].clone()], []),
        Target::new([agents[1].clone()], [], [Action::Write]),
    ];
    let mut rules: Vec<Option<Target>> = vec![None];
    rules.extend(pool.iter().cloned().map(Some));
    let rules: Vec<Rule> = rules
        .into_iter()
        .flat_map(|t| [Rule::permit(t.clone()), Rule::deny(t)])
        .collect();
    let mut rule_sets: Vec<Vec<Rule>> = vec![vec![]];
    for i in 0..rules.len() {
        rule_sets.push(vec![rules[i].clone()]);
        for j in i + 1..rules.len() {
            rule_sets.push(vec![rules[i].clone(), rules[j].clone()]);
        }
    }
    let mut policies = Vec::new();
    for t in &pool {
        for rs in &rule_sets {
            for alg in CombAlg::ALL {
                policies.push(Policy::new(t.clone(), rs.clone(), alg));
            }
        }
    }
    let singles: Vec<Target> = requests
        .iter()
        .filter(|t| t.subjects.len() == 1 && t.actions.len() == 1)
        .cloned()
        .collect();
    for alg in CombAlg::ALL {
        agree(&Pdp::new([], alg), &requests)?;
        for i in 0..policies.len() {
            agree(&Pdp::new([policies[i].clone()], alg), &requests)?;
            for j in i + 1..policies.len() {
                agree(
                    &Pdp::new([policies[i].clone(), policies[j].clone()], alg),
                    &singles,
                )?;
            }
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < ORACLE_RUNTIME, || format!("took {elapsed:?}"))?;
    Ok(format!(
        "78 combine cases, {compared} PDP evaluations agree, {elapsed:?}"
    ))
}

fn state_invariants() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0A1);
    let mut steps = 0usize;
    for n in 0..OP_SEQUENCES {
        let len = rng.gen_range(0..=MAX_OP_LEN);
        let mut s = CoalitionState::new();
        for op in random_op_sequence(&mut rng, len) {
            let Ok(next) = op.apply(&s) else { continue };
            steps += 1;
            ensure(next.membership_holds(), || {
                format!("sequence {n}: MEMBERSHIP broken by {op:?}")
            })?;
            for (aid, a) in s.agents() {
                let b = &next.agents()[aid];
                ensure(a.info.is_subset(&b.info), || {
                    format!("sequence {n}: {aid} lost information")
                })?;
            }
            for (cid, c) in s.coalitions() {
                let d = &next.coalitions()[cid];
                ensure(
                    c.info.is_subset(&d.info) && c.cac.policies.is_subset(&d.cac.policies),
                    || {
                        format!(
                            "sequence {n}: {cid} lost shared information or policies after {op:?}"
                        )
                    },
                )?;
            }
            s = next;
        }
    }
    Ok(format!(
        "{OP_SEQUENCES} sequences, {steps} successful steps, 0 violations"
    ))
}

fn formula_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0xF0);
    let mut compared = 0usize;
    for name in GOLDEN {
        let s = golden(name);
        let init = s.initial_state().unwrap();
        let space = reachable(
            &s.workflow,
            &init,
            &s.registry(),
            &s.policy_variants(),
            ExploreOptions::default(),
        )
        .map_err(|e| e.to_string())?;
        let agents: Vec<AgentId> = s.agents.keys().cloned().collect();
        let coals: Vec<CoalitionId> = s.coalitions.keys().cloned().collect();
        let items: Vec<Information> = init.all_information().into_iter().collect();
        let ops: Vec<String> = s.producers.keys().cloned().collect();
        let mut formulas: Vec<_> = s
            .properties
            .values()
            .flat_map(|f| [f.clone(), f.dual()])
            .collect();
        formulas.extend(
            (0..RANDOM_FORMULAS).map(|_| random_formula(&mut rng, &agents, &coals, &items, &ops)),
        );
        for f in &formulas {
            for e in &space.configs {
                let got = eval_formula(f, &e.config).map_err(|e| e.to_string())?;
                let (want, witness) = naive_eval(f, &e.config);
                compared += 1;
                ensure(got.holds == want, || {
                    format!(
                        "{name}: `{f}` at {}: {} vs {want}",
                        e.config.node, got.holds
                    )
                })?;
                ensure(!want || got.assignment == witness, || {
                    format!("{name}: `{f}` witness differs")
                })?;
            }
        }
    }
    Ok(format!("{compared} (formula, config) pairs agree"))
}

fn dsl_round_trip() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0xD51);
    let mut scenarios: Vec<_> = (0..GENERATED_SCENARIOS)
        .map(|_| random_scenario(&mut rng))
        .collect();
    scenarios.extend(GOLDEN.iter().map(|g| golden(g)));
    for (n, s) in scenarios.iter().enumerate() {
        let text = serialize_scenario(s);
        let back =
            parse_scenario(&text).map_err(|d| format!("scenario {n} does not reparse: {d:?}"))?;
        ensure(&back == s, || format!("scenario {n} changed:\n{text}"))?;
    }
    let seeds: Vec<String> = GOLDEN.iter().map(|g| golden_source(g)).collect();
    let seeds: Vec<&str> = seeds.iter().map(String::as_str).collect();
    let mut accepted = 0;
    for n in 0..FUZZ_INPUTS {
        let input = fuzz_input(&mut rng, &seeds);
        match catch_unwind(AssertUnwindSafe(|| parse_scenario_bytes(&input))) {
            Ok(Ok(_)) => accepted += 1,
            Ok(Err(d)) => ensure(!d.is_empty(), || {
                format!("fuzz input {n} rejected silently")
            })?,
            Err(_) => {
                return Err(format!(
                    "fuzz input {n} panicked: {:?}",
                    String::from_utf8_lossy(&input)
                ))
            }
        }
    }
    Ok(format!(
        "{} scenarios round-trip, {FUZZ_INPUTS} fuzz inputs without panic ({accepted} accepted)",
        scenarios.len()
    ))
}

fn determinism() -> Verdict {
    let mut invocations = 0;
    for name in GOLDEN {
        let path = scenario_path(name);
        let commands: [Vec<&str>; 3] = [
            vec!["run", &path],
            vec!["check", &path],
            vec!["check", "--with-variants", &path],
        ];
        for args in &commands {
            let mut reference: Option<Vec<u8>> = None;
            for workers in ["1", "4"] {
                for _ in 0..REPEATS {
                    let mut full = vec!["--workers", workers];
                    full.extend(args.iter().copied());
                    let o = dcv(&full);
                    invocations += 1;
                    match &reference {
                        None => reference = Some(o.stdout),
                        Some(r) => ensure(*r == o.stdout, || {
                            format!("{name}: `dcv {}` output differs", full.join(" "))
                        })?,
                    }
                }
            }
        }
    }
    Ok(format!(
        "{invocations} invocations, identical stdout per command"
    ))
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 8] = [
        ("deadlock reproduction", deadlock_reproduction),
        ("repaired process", repaired_process),
        ("policy semantics", policy_semantics),
        ("combining-algorithm oracle", combining_oracle),
        ("state invariants", state_invariants),
        ("formula evaluator oracle", formula_oracle),
        ("DSL round-trip and fuzzing", dsl_round_trip),
        ("determinism", determinism),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let verdict = catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        match verdict {
            Ok(detail) => println!("PASS criterion {} ({name}): {detail}", i + 1),
            Err(why) => {
                println!("FAIL criterion {} ({name}): {why}", i + 1);
                failed.push(i + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
