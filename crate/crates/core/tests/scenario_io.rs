mod common;

use common::golden_source;
use dcverify::checker::{Atom, Expr, QuantKind};
use dcverify::scenario::{parse_formula, parse_scenario, parse_scenario_bytes, ParseDiagnostic};
use proptest::prelude::*;

const MINIMAL: &str =
    "agent a { }\ncoalition c { members = [a] }\nworkflow {\n  node end: done\n  entry = end\n}\n";

fn errors(src: &str) -> Vec<ParseDiagnostic> {
    parse_scenario(src).expect_err("should be rejected")
}

fn assert_in_bounds(src: &str, diags: &[ParseDiagnostic]) {
    let lines: Vec<&str> = src.split('\n').collect();
    assert!(!diags.is_empty());
    for d in diags {
        assert!(
            d.line >= 1 && d.line <= lines.len(),
            "{d} in {} lines",
            lines.len()
        );
        let width = lines[d.line - 1].chars().count();
        assert!(d.column >= 1 && d.column <= width + 1, "{d} width {width}");
    }
}

fn count_atoms(e: &Expr, events: &mut usize, evals: &mut usize) {
    match e {
        Expr::Atom(Atom::Event { .. }) => *events += 1,
        Expr::Atom(Atom::Eval { .. }) => *evals += 1,
        Expr::Not(x) => count_atoms(x, events, evals),
        Expr::And(a, b) | Expr::Implies(a, b) => {
            count_atoms(a, events, evals);
            count_atoms(b, events, evals);
        }
    }
}

#[test]
fn minimal_file_is_valid() {
    let s = parse_scenario(MINIMAL).unwrap();
    assert_eq!(s.agents.len(), 1);
    assert_eq!(s.coalitions.len(), 1);
    assert_eq!(s.workflow.nodes().count(), 1);
}

#[test]
fn not_applicable_rule_effect_is_rejected() {
    let src = "policy p {\n  rule { effect = NOT_APPLICABLE }\n}\n".to_string() + MINIMAL;
    let d = errors(&src);
    assert_eq!(d[0].message, "rule effect must be PERMIT or DENY");
    assert_eq!((d[0].line, d[0].column), (2, 19));
    assert_eq!(
        errors(&src.replace("NOT_APPLICABLE", "NOTAPPLICABLE"))[0].message,
        "rule effect must be PERMIT or DENY"
    );
}

#[test]
fn phi_parses_into_three_quantifiers_two_events_one_eval() {
    let f = parse_formula(
        "exists ord:INFORMATION . exists HA:INFORMATION . exists PP:INFORMATION .\n\
         event createHA(compB, ord) -> HA and event createPP(ord, HA) -> PP\n\
         and request(compB, coal, READ, {PP}) == DENY",
    )
    .unwrap();
    assert_eq!(f.quantifiers.len(), 3);
    assert!(f.quantifiers.iter().all(|q| q.kind == QuantKind::Exists));
    let (mut events, mut evals) = (0, 0);
    count_atoms(&f.body, &mut events, &mut evals);
    assert_eq!((events, evals), (2, 1));
}

#[test]
fn psi_implication_form_has_implies_on_top() {
    let f = parse_formula(
        "exists ord:INFORMATION . exists HA:INFORMATION . exists PP:INFORMATION . \
         event createHA(compB, ord) -> HA and event createPP(ord, HA) -> PP \
         and request(compB, coal, READ, {PP}) == PERMIT implies event sendErr(compB, coal, PP)",
    )
    .unwrap();
    assert!(matches!(f.body, Expr::Implies(..)));
}

#[test]
fn trailing_connective_is_blamed() {
    let src = "exists x:INFORMATION . request(a,c,READ,{x}) == PERMIT and";
    let d = parse_formula(src).unwrap_err();
    assert_eq!(d.len(), 1);
    assert_eq!((d[0].line, d[0].column), (1, 56));
    assert!(d[0].message.contains("`and`"), "{}", d[0].message);
}

#[test]
fn formula_precedence_and_associativity() {
    let f = parse_formula("request(a,c,READ,{x}) == PERMIT implies not request(a,c,READ,{x}) == DENY and request(a,c,WRITE,{x}) == DENY implies request(b,c,READ,{x}) == DENY").unwrap();
    let Expr::Implies(_, rhs) = &f.body else {
        panic!("implies on top")
    };
    let Expr::Implies(mid, _) = rhs.as_ref() else {
        panic!("right associative")
    };
    let Expr::And(l, _) = mid.as_ref() else {
        panic!("and binds tighter")
    };
    assert!(matches!(l.as_ref(), Expr::Not(_)));
}

#[test]
fn formula_sort_mismatch_is_a_diagnostic() {
    let d = parse_formula("exists x:AGENT . request(a, x, READ, {i}) == PERMIT").unwrap_err();
    assert!(d[0].message.contains("x"));
}

#[test]
fn unknown_keys_and_blocks_are_rejected() {
    let d = errors(&MINIMAL.replace("agent a { }", "agent a { colour = [x] }"));
    assert!(d[0].message.contains("unknown agent key `colour`"));
    let d = errors(&format!("gadget g {{ }}\n{MINIMAL}"));
    assert!(d[0].message.contains("unknown block `gadget`"));
}

#[test]
fn duplicates_are_rejected() {
    let d = errors(&format!("agent a {{ }}\n{MINIMAL}"));
    assert!(d.iter().any(|d| d.message == "duplicate agent `a`"));
    let d = errors(&MINIMAL.replace("node end: done", "node end: done\n  node end: fail \"x\""));
    assert!(d.iter().any(|d| d.message == "duplicate node `end`"));
    let d = errors(&MINIMAL.replace("members = [a]", "members = [a] members = [a]"));
    assert!(d.iter().any(|d| d.message == "duplicate key `members`"));
}

#[test]
fn dangling_references_are_rejected() {
    let d = errors(&MINIMAL.replace("members = [a]", "members = [ghost]"));
    assert_eq!(d[0].message, "unknown agent `ghost`");
    assert_eq!((d[0].line, d[0].column), (2, 26));
    let d = errors(&MINIMAL.replace("agent a { }", "agent a { policy nope }"));
    assert_eq!(d[0].message, "unknown policy `nope`");
    let d = errors(&MINIMAL.replace("node end: done", "node end: update join(a, c) then nowhere"));
    assert!(d.iter().any(|d| d.message.contains("nowhere")));
    let d = errors(&MINIMAL.replace("node end: done", "node end: update frobnicate() then end"));
    assert!(d.iter().any(|d| d.message.contains("frobnicate")));
    let d = errors(&MINIMAL.replace("members = [a]", "members = [a] shares = [a:secret]"));
    assert!(d
        .iter()
        .any(|d| d.message.contains("does not hold `secret`")));
    let d = errors(&format!(
        "{MINIMAL}property p forbidden {{ request(a, c, READ, {{mystery}}) == DENY }}\n"
    ));
    assert!(d.iter().any(|d| d.message.contains("mystery")));
}

#[test]
fn exactly_one_workflow() {
    let d = errors("agent a { }\n");
    assert_eq!(d[0].message, "missing `workflow` block");
    let d = errors(&format!("{MINIMAL}workflow {{ node x: done entry = x }}\n"));
    assert!(d
        .iter()
        .any(|d| d.message == "a scenario has exactly one workflow"));
}

#[test]
fn recovery_reports_several_errors() {
    let src = "agent a { info = [ }\ncoalition c { members = [a], }\nagent b { bogus }\nworkflow { node end: done entry = end }\n";
    let d = errors(src);
    assert!(d.len() >= 3, "{d:?}");
    assert_in_bounds(src, &d);
}

#[test]
fn nesting_is_limited() {
    let deep = format!(
        "{}request(a,c,READ,{{i}}) == DENY{}",
        "(".repeat(200),
        ")".repeat(200)
    );
    let d = parse_formula(&deep).unwrap_err();
    assert!(d[0].message.contains("nested deeper"));
    let nots = format!("{}request(a,c,READ,{{i}}) == DENY", "not ".repeat(100));
    assert!(parse_formula(&nots).is_err());
    let ok = format!(
        "{}request(a,c,READ,{{i}}) == DENY{}",
        "(".repeat(10),
        ")".repeat(10)
    );
    assert!(parse_formula(&ok).is_ok());
}

#[test]
fn invalid_utf8_is_a_diagnostic() {
    let d = parse_scenario_bytes(b"agent a {\n  \xff }").unwrap_err();
    assert_eq!((d[0].line, d[0].column), (2, 3));
}

#[test]
fn string_escapes_survive() {
    let src = MINIMAL.replace(
        "node end: done",
        "node end: fail \"say \\\"hi\\\"\\\\ \\n\"",
    );
    let s = parse_scenario(&src).unwrap();
    let node = s.workflow.nodes().next().unwrap();
    let dcverify::asm::NodeKind::Terminal { message, .. } = &node.kind else {
        panic!()
    };
    assert_eq!(message, "say \"hi\"\\ \n");
}

#[test]
fn truncated_golden_prefixes_never_panic() {
    for name in common::GOLDEN {
        let src = golden_source(name);
        let chars: Vec<(usize, char)> = src.char_indices().collect();
        for (i, _) in chars.iter().step_by(7) {
            let prefix = &src[..*i];
            if let Err(d) = parse_scenario(prefix) {
                assert_in_bounds(prefix, &d);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn arbitrary_bytes_yield_positioned_diagnostics(bytes in proptest::collection::vec(any::<u8>(), 0..300)) {
        match parse_scenario_bytes(&bytes) {
            Ok(_) => {}
            Err(d) => {
                prop_assert!(!d.is_empty());
                if let Ok(src) = std::str::from_utf8(&bytes) {
                    assert_in_bounds(src, &d);
                }
            }
        }
    }

    #[test]
    fn arbitrary_text_yields_positioned_diagnostics(src in "[a-z{}()\\[\\],:.=\\-> \n\"#_A-Z0-9]{0,200}") {
        if let Err(d) = parse_scenario(&src) {
            assert_in_bounds(&src, &d);
        }
        if let Err(d) = parse_formula(&src) {
            assert_in_bounds(&src, &d);
        }
    }
}
