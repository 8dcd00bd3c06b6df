use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::str::FromStr;

use super::lexer::{lex, Pos, Tok, Token};
use super::{
    AgentDecl, CoalitionDecl, ParseDiagnostic, ProducerDecl, Scenario, Settings, VariantDecl,
    MAX_NESTING,
};
use crate::asm::{
    validate_workflow, Arg, Guard, IssueKind, NodeKind, OpRegistry, Severity, TerminalOutcome,
    Workflow, WorkflowNode,
};
use crate::checker::{Atom, Expr, Formula, QuantKind, Quantifier, Sort, Term};
use crate::ids::{AgentId, CoalitionId, Information, NodeId};
use crate::policy::{Action, CombAlg, Effect, Policy, Rule, Target};

/// Error already recorded in the diagnostics list.
struct Failed;

type PResult<T> = Result<T, Failed>;

const TOP_LEVEL: [&str; 8] = [
    "settings",
    "policy",
    "agent",
    "coalition",
    "producer",
    "variant",
    "workflow",
    "property",
];

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    braces: usize,
    nesting: usize,
    diags: Vec<ParseDiagnostic>,
}

impl Parser {
    fn new(src: &str) -> Self {
        let mut diags = Vec::new();
        let toks = lex(src, &mut diags);
        Self {
            toks,
            pos: 0,
            braces: 0,
            nesting: 0,
            diags,
        }
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn here(&self) -> Pos {
        self.toks[self.pos].pos
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        match t.tok {
            Tok::LBrace => self.braces += 1,
            Tok::RBrace => self.braces = self.braces.saturating_sub(1),
            Tok::Eof => return t,
            _ => {}
        }
        self.pos += 1;
        t
    }

    fn err<T>(&mut self, pos: Pos, msg: impl Into<String>) -> PResult<T> {
        self.diags.push(ParseDiagnostic::error(pos, msg));
        Err(Failed)
    }

    fn unexpected<T>(&mut self, wanted: &str) -> PResult<T> {
        let msg = format!("expected {wanted}, found {}", self.peek());
        self.err(self.here(), msg)
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok) -> PResult<Pos> {
        if *self.peek() == tok {
            Ok(self.bump().pos)
        } else {
            self.unexpected(&tok.to_string())
        }
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            self.unexpected(&format!("`{kw}`"))
        }
    }

    fn ident(&mut self, what: &str) -> PResult<(String, Pos)> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                let pos = self.bump().pos;
                Ok((s, pos))
            }
            _ => self.unexpected(what),
        }
    }

    fn typed<T: FromStr>(&mut self, what: &str) -> PResult<(T, Pos)>
    where
        T::Err: std::fmt::Display,
    {
        let (s, pos) = self.ident(what)?;
        match T::from_str(&s) {
            Ok(v) => Ok((v, pos)),
            Err(e) => self.err(pos, e.to_string()),
        }
    }

    fn keyword<T>(&mut self, what: &str, from: impl Fn(&str) -> Option<T>) -> PResult<T> {
        let (s, pos) = self.ident(what)?;
        match from(&s) {
            Some(v) => Ok(v),
            None => self.err(pos, format!("expected {what}, found `{s}`")),
        }
    }

    fn string(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Str(s) => {
                self.bump();
                Ok(s)
            }
            _ => self.unexpected("a string"),
        }
    }

    /// `[a, b, ...]`, possibly empty.
    fn list<T>(&mut self, mut item: impl FnMut(&mut Self) -> PResult<T>) -> PResult<Vec<T>> {
        self.expect(Tok::LBracket)?;
        let mut out = Vec::new();
        if self.eat(&Tok::RBracket) {
            return Ok(out);
        }
        loop {
            out.push(item(self)?);
            if self.eat(&Tok::RBracket) {
                return Ok(out);
            }
            self.expect(Tok::Comma)?;
        }
    }

    /// Comma-separated items between `open` and `close`, possibly empty.
    fn delimited<T>(
        &mut self,
        open: Tok,
        close: Tok,
        mut item: impl FnMut(&mut Self) -> PResult<T>,
    ) -> PResult<Vec<T>> {
        self.expect(open)?;
        let mut out = Vec::new();
        if self.eat(&close) {
            return Ok(out);
        }
        loop {
            out.push(item(self)?);
            if self.eat(&close) {
                return Ok(out);
            }
            self.expect(Tok::Comma)?;
        }
    }

    fn enter(&mut self) -> PResult<()> {
        self.nesting += 1;
        if self.nesting > MAX_NESTING {
            return self.err(
                self.here(),
                format!("expression nested deeper than {MAX_NESTING} levels"),
            );
        }
        Ok(())
    }

    fn leave(&mut self) {
        self.nesting -= 1;
    }

    /// Skips to the next top-level keyword outside any block.
    fn recover(&mut self) {
        self.nesting = 0;
        loop {
            match self.peek() {
                Tok::Eof => return,
                Tok::Ident(s) if self.braces == 0 && TOP_LEVEL.contains(&s.as_str()) => return,
                _ => {
                    self.bump();
                }
            }
        }
    }

    fn end_of_block(&mut self) -> bool {
        matches!(self.peek(), Tok::RBrace | Tok::Eof)
    }
}

fn dup_key(p: &mut Parser, seen: &mut BTreeSet<String>, key: &str, pos: Pos) -> PResult<()> {
    if !seen.insert(key.to_string()) {
        return p.err(pos, format!("duplicate key `{key}`"));
    }
    Ok(())
}

// ---- policies ----

fn parse_target(p: &mut Parser) -> PResult<Target> {
    let mut target = Target::any();
    let mut seen = BTreeSet::new();
    p.delimited(Tok::LParen, Tok::RParen, |p| {
        let (key, pos) = p.ident("a target field")?;
        dup_key(p, &mut seen, &key, pos)?;
        p.expect(Tok::Assign)?;
        match key.as_str() {
            "subjects" => {
                target.subjects = p
                    .list(|p| p.typed::<AgentId>("an agent id").map(|x| x.0))?
                    .into_iter()
                    .collect()
            }
            "resources" => {
                target.resources = p
                    .list(|p| p.typed::<Information>("an information id").map(|x| x.0))?
                    .into_iter()
                    .collect()
            }
            "actions" => {
                target.actions = p
                    .list(|p| p.keyword("READ or WRITE", Action::from_keyword))?
                    .into_iter()
                    .collect()
            }
            _ => return p.err(pos, format!("unknown target field `{key}`")),
        }
        Ok(())
    })?;
    Ok(target)
}

fn parse_rule(p: &mut Parser) -> PResult<Rule> {
    let open = p.expect(Tok::LBrace)?;
    let mut target = None;
    let mut effect = None;
    let mut seen = BTreeSet::new();
    while !p.end_of_block() {
        let (key, pos) = p.ident("a rule key")?;
        dup_key(p, &mut seen, &key, pos)?;
        p.expect(Tok::Assign)?;
        match key.as_str() {
            "target" => target = Some(parse_target(p)?),
            "effect" => {
                let (s, epos) = p.ident("PERMIT or DENY")?;
                match Effect::from_keyword(&s) {
                    Some(Effect::NotApplicable) => {
                        return p.err(epos, "rule effect must be PERMIT or DENY");
                    }
                    Some(e) => effect = Some(e),
                    None => return p.err(epos, format!("expected PERMIT or DENY, found `{s}`")),
                }
            }
            _ => return p.err(pos, format!("unknown rule key `{key}`")),
        }
    }
    p.expect(Tok::RBrace)?;
    match effect {
        Some(e) => Ok(Rule::new(target, e).expect("effect checked")),
        None => p.err(open, "rule has no `effect`"),
    }
}

fn parse_policy_body(p: &mut Parser) -> PResult<Policy> {
    p.expect(Tok::LBrace)?;
    let mut target = Target::any();
    let mut comb = CombAlg::DenyOverrides;
    let mut rules = BTreeSet::new();
    let mut seen = BTreeSet::new();
    while !p.end_of_block() {
        let (key, pos) = p.ident("a policy key")?;
        match key.as_str() {
            "target" => {
                dup_key(p, &mut seen, &key, pos)?;
                p.expect(Tok::Assign)?;
                target = parse_target(p)?;
            }
            "combine" => {
                dup_key(p, &mut seen, &key, pos)?;
                p.expect(Tok::Assign)?;
                comb = p.keyword("a combining algorithm", CombAlg::from_keyword)?;
            }
            "rule" => {
                rules.insert(parse_rule(p)?);
            }
            _ => return p.err(pos, format!("unknown policy key `{key}`")),
        }
    }
    p.expect(Tok::RBrace)?;
    Ok(Policy {
        target,
        rules,
        rule_comb_alg: comb,
    })
}

// ---- guards ----

fn parse_guard(p: &mut Parser) -> PResult<Guard> {
    let mut left = parse_guard_and(p)?;
    while p.eat_kw("or") {
        let right = parse_guard_and(p)?;
        left = Guard::Or(Box::new(left), Box::new(right));
    }
    Ok(left)
}

fn parse_guard_and(p: &mut Parser) -> PResult<Guard> {
    let mut left = parse_guard_unary(p)?;
    while p.eat_kw("and") {
        let right = parse_guard_unary(p)?;
        left = Guard::And(Box::new(left), Box::new(right));
    }
    Ok(left)
}

fn parse_guard_unary(p: &mut Parser) -> PResult<Guard> {
    p.enter()?;
    let g = if p.eat_kw("not") {
        Guard::Not(Box::new(parse_guard_unary(p)?))
    } else if p.eat(&Tok::LParen) {
        let g = parse_guard(p)?;
        p.expect(Tok::RParen)?;
        g
    } else if p.is_kw("request") {
        let (agent, coalition, action, infos, expected) =
            parse_request(p, |p| Ok(p.ident("a name")?.0))?;
        Guard::Request {
            agent,
            coalition,
            action,
            infos,
            expected,
        }
    } else {
        return p.unexpected("`request`, `not` or `(`");
    };
    p.leave();
    Ok(g)
}

type RequestParts<T> = (T, T, Action, Vec<T>, Effect);

/// `request(agent, coalition, ACTION, {items}) == EFFECT`
fn parse_request<T>(
    p: &mut Parser,
    mut term: impl FnMut(&mut Parser) -> PResult<T>,
) -> PResult<RequestParts<T>> {
    p.expect_kw("request")?;
    p.expect(Tok::LParen)?;
    let agent = term(p)?;
    p.expect(Tok::Comma)?;
    let coalition = term(p)?;
    p.expect(Tok::Comma)?;
    let action = p.keyword("READ or WRITE", Action::from_keyword)?;
    p.expect(Tok::Comma)?;
    let infos = p.delimited(Tok::LBrace, Tok::RBrace, &mut term)?;
    p.expect(Tok::RParen)?;
    p.expect(Tok::EqEq)?;
    let expected = p.keyword("an effect", Effect::from_keyword)?;
    Ok((agent, coalition, action, infos, expected))
}

// ---- workflow ----

fn parse_node(p: &mut Parser) -> PResult<NodeKind> {
    let (kind, pos) = p.ident("`update`, `if`, `done` or `fail`")?;
    match kind.as_str() {
        "update" => {
            let (op, _) = p.ident("an operation name")?;
            let args = p.delimited(Tok::LParen, Tok::RParen, |p| {
                if *p.peek() == Tok::LBrace {
                    let items =
                        p.delimited(Tok::LBrace, Tok::RBrace, |p| Ok(p.ident("a name")?.0))?;
                    Ok(Arg::Set(items))
                } else {
                    Ok(Arg::Name(p.ident("an argument")?.0))
                }
            })?;
            let result = if p.eat(&Tok::Arrow) {
                Some(p.ident("a result variable")?.0)
            } else {
                None
            };
            p.expect_kw("then")?;
            let (next, _) = p.typed::<NodeId>("a node id")?;
            Ok(NodeKind::Update {
                op,
                args,
                result,
                next,
            })
        }
        "if" => {
            let guard = parse_guard(p)?;
            let yes = if p.eat_kw("yes") {
                Some(p.typed::<NodeId>("a node id")?.0)
            } else {
                None
            };
            let no = if p.eat_kw("no") {
                Some(p.typed::<NodeId>("a node id")?.0)
            } else {
                None
            };
            Ok(NodeKind::Condition { guard, yes, no })
        }
        "done" => {
            let message = if matches!(p.peek(), Tok::Str(_)) {
                p.string()?
            } else {
                String::new()
            };
            Ok(NodeKind::Terminal {
                outcome: TerminalOutcome::Success,
                message,
            })
        }
        "fail" => Ok(NodeKind::Terminal {
            outcome: TerminalOutcome::Error,
            message: p.string()?,
        }),
        _ => p.err(pos, format!("unknown node kind `{kind}`")),
    }
}

struct WorkflowAst {
    nodes: Vec<WorkflowNode>,
    node_pos: HashMap<NodeId, Pos>,
    entry: Option<NodeId>,
}

fn parse_workflow(p: &mut Parser) -> PResult<WorkflowAst> {
    let open = p.expect(Tok::LBrace)?;
    let mut ast = WorkflowAst {
        nodes: Vec::new(),
        node_pos: HashMap::new(),
        entry: None,
    };
    while !p.end_of_block() {
        let (key, pos) = p.ident("`node` or `entry`")?;
        match key.as_str() {
            "node" => {
                let (id, npos) = p.typed::<NodeId>("a node id")?;
                p.expect(Tok::Colon)?;
                let kind = parse_node(p)?;
                if ast.node_pos.contains_key(&id) {
                    return p.err(npos, format!("duplicate node `{id}`"));
                }
                ast.node_pos.insert(id.clone(), npos);
                ast.nodes.push(WorkflowNode { id, kind });
            }
            "entry" => {
                if ast.entry.is_some() {
                    return p.err(pos, "duplicate key `entry`");
                }
                p.expect(Tok::Assign)?;
                ast.entry = Some(p.typed::<NodeId>("a node id")?.0);
            }
            _ => return p.err(pos, format!("unknown workflow key `{key}`")),
        }
    }
    p.expect(Tok::RBrace)?;
    if ast.entry.is_none() {
        return p.err(open, "workflow has no `entry`");
    }
    Ok(ast)
}

// ---- formulas ----

fn parse_term(p: &mut Parser) -> PResult<Term> {
    let (s, _) = p.ident("a name or `_`")?;
    Ok(if s == "_" {
        Term::Wildcard
    } else {
        Term::Name(s)
    })
}

fn parse_formula_tokens(p: &mut Parser) -> PResult<Formula> {
    let mut quantifiers = Vec::new();
    loop {
        let kind = if p.is_kw("exists") {
            QuantKind::Exists
        } else if p.is_kw("forall") {
            QuantKind::Forall
        } else {
            break;
        };
        p.bump();
        let (var, _) = p.ident("a variable")?;
        p.expect(Tok::Colon)?;
        let sort = p.keyword("INFORMATION, AGENT or COALITION", Sort::from_keyword)?;
        p.expect(Tok::Dot)?;
        quantifiers.push(Quantifier { kind, var, sort });
    }
    let body = parse_implies(p)?;
    Ok(Formula { quantifiers, body })
}

fn parse_implies(p: &mut Parser) -> PResult<Expr> {
    let left = parse_and(p)?;
    if p.is_kw("implies") {
        let at = p.bump().pos;
        let right = operand_after(p, at, "implies", parse_implies)?;
        return Ok(Expr::Implies(Box::new(left), Box::new(right)));
    }
    Ok(left)
}

fn parse_and(p: &mut Parser) -> PResult<Expr> {
    let mut left = parse_unary(p)?;
    while p.is_kw("and") {
        let at = p.bump().pos;
        let right = operand_after(p, at, "and", parse_unary)?;
        left = Expr::And(Box::new(left), Box::new(right));
    }
    Ok(left)
}

/// Parses the right operand of a connective, blaming the connective when the
/// operand is missing altogether.
fn operand_after(
    p: &mut Parser,
    at: Pos,
    conn: &str,
    f: fn(&mut Parser) -> PResult<Expr>,
) -> PResult<Expr> {
    if matches!(p.peek(), Tok::Eof | Tok::RBrace | Tok::RParen) {
        return p.err(at, format!("`{conn}` is missing its right operand"));
    }
    f(p)
}

fn parse_unary(p: &mut Parser) -> PResult<Expr> {
    p.enter()?;
    let e = if p.is_kw("not") {
        let at = p.bump().pos;
        Expr::Not(Box::new(operand_after(p, at, "not", parse_unary)?))
    } else if p.eat(&Tok::LParen) {
        let e = parse_implies(p)?;
        p.expect(Tok::RParen)?;
        e
    } else if p.eat_kw("event") {
        let (op, _) = p.ident("an operation name")?;
        let args = p.delimited(Tok::LParen, Tok::RParen, parse_term)?;
        let result = if p.eat(&Tok::Arrow) {
            Some(parse_term(p)?)
        } else {
            None
        };
        Expr::Atom(Atom::Event { op, args, result })
    } else if p.is_kw("request") {
        let (agent, coalition, action, infos, expected) = parse_request(p, parse_term)?;
        Expr::Atom(Atom::Eval {
            agent,
            coalition,
            action,
            infos,
            expected,
        })
    } else {
        return p.unexpected("`event`, `request`, `not` or `(`");
    };
    p.leave();
    Ok(e)
}

/// Parses a standalone property formula.
pub fn parse_formula(src: &str) -> Result<Formula, Vec<ParseDiagnostic>> {
    let mut p = Parser::new(src);
    let f = parse_formula_tokens(&mut p);
    if f.is_ok() && *p.peek() != Tok::Eof {
        let _ = p.unexpected::<()>("end of formula");
    }
    match f {
        Ok(f) if p.diags.is_empty() => match f.check() {
            Ok(()) => Ok(f),
            Err(e) => Err(vec![ParseDiagnostic::error(
                Pos { line: 1, column: 1 },
                e.to_string(),
            )]),
        },
        _ => Err(p.diags),
    }
}

// ---- scenario ----

#[derive(Default)]
struct Refs {
    /// (kind, name, where it was referenced)
    uses: Vec<(&'static str, String, Pos)>,
    shares: Vec<(AgentId, Information, Pos)>,
    decl_pos: HashMap<(&'static str, String), Pos>,
    property_pos: HashMap<String, Pos>,
    workflow_pos: Option<Pos>,
}

struct Acc {
    settings: Option<Settings>,
    policies: BTreeMap<String, Policy>,
    agents: BTreeMap<AgentId, AgentDecl>,
    coalitions: BTreeMap<CoalitionId, CoalitionDecl>,
    producers: BTreeMap<String, ProducerDecl>,
    variants: BTreeMap<String, VariantDecl>,
    workflow: Option<WorkflowAst>,
    properties: BTreeMap<String, Formula>,
    refs: Refs,
}

fn declare(
    p: &mut Parser,
    refs: &mut Refs,
    kind: &'static str,
    name: &str,
    pos: Pos,
) -> PResult<()> {
    if refs.decl_pos.contains_key(&(kind, name.to_string())) {
        return p.err(pos, format!("duplicate {kind} `{name}`"));
    }
    refs.decl_pos.insert((kind, name.to_string()), pos);
    Ok(())
}

fn parse_item(p: &mut Parser, acc: &mut Acc) -> PResult<()> {
    let (kw, kw_pos) = p.ident("a top-level block")?;
    match kw.as_str() {
        "settings" => {
            if acc.settings.is_some() {
                return p.err(kw_pos, "duplicate `settings` block");
            }
            p.expect(Tok::LBrace)?;
            let mut s = Settings::default();
            let mut seen = BTreeSet::new();
            while !p.end_of_block() {
                let (key, pos) = p.ident("a setting")?;
                dup_key(p, &mut seen, &key, pos)?;
                p.expect(Tok::Assign)?;
                let (n, npos) = p.ident("a positive integer")?;
                let value = match n.parse::<usize>() {
                    Ok(v) if v > 0 => v,
                    _ => return p.err(npos, format!("expected a positive integer, found `{n}`")),
                };
                match key.as_str() {
                    "max_steps" => s.max_steps = Some(value),
                    "state_cap" => s.state_cap = Some(value),
                    _ => return p.err(pos, format!("unknown setting `{key}`")),
                }
            }
            p.expect(Tok::RBrace)?;
            acc.settings = Some(s);
        }
        "policy" => {
            let (name, pos) = p.ident("a policy name")?;
            declare(p, &mut acc.refs, "policy", &name, pos)?;
            let policy = parse_policy_body(p)?;
            acc.policies.insert(name, policy);
        }
        "agent" => {
            let (id, pos) = p.typed::<AgentId>("an agent id")?;
            declare(p, &mut acc.refs, "agent", id.as_str(), pos)?;
            p.expect(Tok::LBrace)?;
            let mut decl = AgentDecl {
                info: BTreeSet::new(),
                policies: BTreeSet::new(),
                combine: CombAlg::DenyOverrides,
            };
            let mut seen = BTreeSet::new();
            while !p.end_of_block() {
                let (key, kpos) = p.ident("an agent key")?;
                match key.as_str() {
                    "info" => {
                        dup_key(p, &mut seen, &key, kpos)?;
                        p.expect(Tok::Assign)?;
                        decl.info = p
                            .list(|p| p.typed::<Information>("an information id").map(|x| x.0))?
                            .into_iter()
                            .collect();
                    }
                    "combine" => {
                        dup_key(p, &mut seen, &key, kpos)?;
                        p.expect(Tok::Assign)?;
                        decl.combine = p.keyword("a combining algorithm", CombAlg::from_keyword)?;
                    }
                    "policy" => {
                        let (name, npos) = p.ident("a policy name")?;
                        if !decl.policies.insert(name.clone()) {
                            return p.err(npos, format!("policy `{name}` listed twice"));
                        }
                        acc.refs.uses.push(("policy", name, npos));
                    }
                    _ => return p.err(kpos, format!("unknown agent key `{key}`")),
                }
            }
            p.expect(Tok::RBrace)?;
            acc.agents.insert(id, decl);
        }
        "coalition" => {
            let (id, pos) = p.typed::<CoalitionId>("a coalition id")?;
            declare(p, &mut acc.refs, "coalition", id.as_str(), pos)?;
            p.expect(Tok::LBrace)?;
            let mut decl = CoalitionDecl::default();
            let mut seen = BTreeSet::new();
            while !p.end_of_block() {
                let (key, kpos) = p.ident("a coalition key")?;
                dup_key(p, &mut seen, &key, kpos)?;
                p.expect(Tok::Assign)?;
                match key.as_str() {
                    "members" => {
                        let members = p.list(|p| p.typed::<AgentId>("an agent id"))?;
                        for (m, mpos) in members {
                            acc.refs.uses.push(("agent", m.to_string(), mpos));
                            decl.members.insert(m);
                        }
                    }
                    "shares" => {
                        let shares = p.list(|p| {
                            let (a, apos) = p.typed::<AgentId>("an agent id")?;
                            p.expect(Tok::Colon)?;
                            let (i, _) = p.typed::<Information>("an information id")?;
                            Ok((a, i, apos))
                        })?;
                        for (a, i, apos) in shares {
                            acc.refs.uses.push(("agent", a.to_string(), apos));
                            acc.refs.shares.push((a.clone(), i.clone(), apos));
                            decl.shares.insert((a, i));
                        }
                    }
                    _ => return p.err(kpos, format!("unknown coalition key `{key}`")),
                }
            }
            p.expect(Tok::RBrace)?;
            acc.coalitions.insert(id, decl);
        }
        "producer" => {
            let (name, pos) = p.ident("a producer name")?;
            declare(p, &mut acc.refs, "producer", &name, pos)?;
            if OpRegistry::is_builtin(&name) {
                return p.err(pos, format!("`{name}` is a built-in operation"));
            }
            p.expect(Tok::LBrace)?;
            let mut actor = None;
            let mut shares_into = None;
            let mut attach_policy = None;
            let mut seen = BTreeSet::new();
            while !p.end_of_block() {
                let (key, kpos) = p.ident("a producer key")?;
                dup_key(p, &mut seen, &key, kpos)?;
                p.expect(Tok::Assign)?;
                match key.as_str() {
                    "actor" => {
                        let (a, apos) = p.typed::<AgentId>("an agent id")?;
                        acc.refs.uses.push(("agent", a.to_string(), apos));
                        actor = Some(a);
                    }
                    "shares_into" => {
                        let (c, cpos) = p.typed::<CoalitionId>("a coalition id")?;
                        acc.refs.uses.push(("coalition", c.to_string(), cpos));
                        shares_into = Some(c);
                    }
                    "attach_policy" => {
                        let (n, npos) = p.ident("a policy name")?;
                        acc.refs.uses.push(("policy", n.clone(), npos));
                        attach_policy = Some(n);
                    }
                    _ => return p.err(kpos, format!("unknown producer key `{key}`")),
                }
            }
            p.expect(Tok::RBrace)?;
            let Some(actor) = actor else {
                return p.err(pos, format!("producer `{name}` has no `actor`"));
            };
            acc.producers.insert(
                name,
                ProducerDecl {
                    actor,
                    shares_into,
                    attach_policy,
                },
            );
        }
        "variant" => {
            let (name, pos) = p.ident("a variant name")?;
            declare(p, &mut acc.refs, "variant", &name, pos)?;
            p.expect(Tok::LBrace)?;
            let mut decl = VariantDecl::default();
            while !p.end_of_block() {
                let (key, kpos) = p.ident("`agent` or `producer`")?;
                match key.as_str() {
                    "agent" => {
                        let (a, apos) = p.typed::<AgentId>("an agent id")?;
                        if decl.agents.contains_key(&a) {
                            return p.err(apos, format!("agent `{a}` overridden twice"));
                        }
                        acc.refs.uses.push(("agent", a.to_string(), apos));
                        p.expect(Tok::Assign)?;
                        let names = p.list(|p| p.ident("a policy name"))?;
                        let mut set = BTreeSet::new();
                        for (n, npos) in names {
                            acc.refs.uses.push(("policy", n.clone(), npos));
                            set.insert(n);
                        }
                        decl.agents.insert(a, set);
                    }
                    "producer" => {
                        let (n, npos) = p.ident("a producer name")?;
                        if decl.producers.contains_key(&n) {
                            return p.err(npos, format!("producer `{n}` overridden twice"));
                        }
                        acc.refs.uses.push(("producer", n.clone(), npos));
                        let attach = if p.eat_kw("detach") {
                            None
                        } else {
                            p.expect(Tok::Assign)?;
                            let (pn, ppos) = p.ident("a policy name")?;
                            acc.refs.uses.push(("policy", pn.clone(), ppos));
                            Some(pn)
                        };
                        decl.producers.insert(n, attach);
                    }
                    _ => return p.err(kpos, format!("unknown variant key `{key}`")),
                }
            }
            p.expect(Tok::RBrace)?;
            acc.variants.insert(name, decl);
        }
        "workflow" => {
            if acc.workflow.is_some() {
                return p.err(kw_pos, "a scenario has exactly one workflow");
            }
            acc.refs.workflow_pos = Some(kw_pos);
            let w = parse_workflow(p)?;
            acc.workflow = Some(w);
        }
        "property" => {
            let (name, pos) = p.ident("a property name")?;
            declare(p, &mut acc.refs, "property", &name, pos)?;
            p.expect_kw("forbidden")?;
            p.expect(Tok::LBrace)?;
            let f = parse_formula_tokens(p)?;
            p.expect(Tok::RBrace)?;
            acc.refs.property_pos.insert(name.clone(), pos);
            acc.properties.insert(name, f);
        }
        _ => return p.err(kw_pos, format!("unknown block `{kw}`")),
    }
    Ok(())
}

fn free_names(e: &Expr, out: &mut Vec<String>) {
    match e {
        Expr::Atom(Atom::Event { args, result, .. }) => {
            for t in args.iter().chain(result.iter()) {
                if let Term::Name(n) = t {
                    out.push(n.clone());
                }
            }
        }
        Expr::Atom(Atom::Eval {
            agent,
            coalition,
            infos,
            ..
        }) => {
            for t in [agent, coalition].into_iter().chain(infos) {
                if let Term::Name(n) = t {
                    out.push(n.clone());
                }
            }
        }
        Expr::Not(a) => free_names(a, out),
        Expr::And(a, b) | Expr::Implies(a, b) => {
            free_names(a, out);
            free_names(b, out);
        }
    }
}

/// Cross-reference checks that need the whole file.
fn resolve(acc: Acc, eof: Pos, diags: &mut Vec<ParseDiagnostic>) -> Option<Scenario> {
    let refs = &acc.refs;
    for (kind, name, pos) in &refs.uses {
        let known = match *kind {
            "agent" => AgentId::new(name).is_ok_and(|a| acc.agents.contains_key(&a)),
            "coalition" => CoalitionId::new(name).is_ok_and(|c| acc.coalitions.contains_key(&c)),
            "policy" => acc.policies.contains_key(name),
            "producer" => acc.producers.contains_key(name),
            _ => true,
        };
        if !known {
            diags.push(ParseDiagnostic::error(
                *pos,
                format!("unknown {kind} `{name}`"),
            ));
        }
    }
    for (a, i, pos) in &refs.shares {
        if acc.agents.get(a).is_some_and(|d| !d.info.contains(i)) {
            diags.push(ParseDiagnostic::error(
                *pos,
                format!("agent `{a}` does not hold `{i}`"),
            ));
        }
    }

    let mut constants: BTreeSet<String> = acc.agents.keys().map(|a| a.to_string()).collect();
    constants.extend(acc.coalitions.keys().map(|c| c.to_string()));
    constants.extend(
        acc.agents
            .values()
            .flat_map(|a| a.info.iter().map(|i| i.to_string())),
    );
    for (name, f) in &acc.properties {
        let pos = refs.property_pos[name];
        if let Err(e) = f.check() {
            diags.push(ParseDiagnostic::error(
                pos,
                format!("property `{name}`: {e}"),
            ));
            continue;
        }
        let mut names = Vec::new();
        free_names(&f.body, &mut names);
        for n in names {
            if f.sort_of(&n).is_none() && !constants.contains(&n) {
                diags.push(ParseDiagnostic::error(
                    pos,
                    format!("property `{name}`: `{n}` is neither quantified nor a declared agent, coalition or information item"),
                ));
            }
        }
    }

    let Some(wast) = acc.workflow else {
        diags.push(ParseDiagnostic::error(eof, "missing `workflow` block"));
        return None;
    };
    let wpos = refs.workflow_pos.unwrap_or(eof);
    let entry = wast.entry.expect("parse_workflow requires entry");
    let workflow = Workflow::new(wast.nodes, entry);

    let scenario = Scenario {
        settings: acc.settings.unwrap_or_default(),
        policies: acc.policies,
        agents: acc.agents,
        coalitions: acc.coalitions,
        producers: acc.producers,
        variants: acc.variants,
        workflow,
        properties: acc.properties,
    };
    if !diags.is_empty() {
        return None;
    }

    let report = validate_workflow(&scenario.workflow, &scenario.registry());
    for issue in report.errors() {
        if matches!(
            issue.kind,
            IssueKind::MissingEntry | IssueKind::DanglingEdge | IssueKind::UnregisteredOp
        ) {
            let pos = issue
                .node
                .as_ref()
                .and_then(|n| wast.node_pos.get(n).copied())
                .unwrap_or(wpos);
            diags.push(ParseDiagnostic::error(pos, issue.message.clone()));
        }
    }
    match scenario.initial_state() {
        Ok(init) => {
            let reg = scenario.registry();
            for v in scenario.policy_variants() {
                if let Err(e) = v.apply(&init, &reg) {
                    diags.push(ParseDiagnostic::error(eof, e.to_string()));
                }
            }
        }
        Err(e) => diags.push(ParseDiagnostic::error(eof, format!("initial state: {e}"))),
    }
    diags.is_empty().then_some(scenario)
}

/// Parses a whole scenario file. Every failure comes with at least one
/// positioned diagnostic.
pub fn parse_scenario(src: &str) -> Result<Scenario, Vec<ParseDiagnostic>> {
    let mut p = Parser::new(src);
    let mut acc = Acc {
        settings: None,
        policies: BTreeMap::new(),
        agents: BTreeMap::new(),
        coalitions: BTreeMap::new(),
        producers: BTreeMap::new(),
        variants: BTreeMap::new(),
        workflow: None,
        properties: BTreeMap::new(),
        refs: Refs::default(),
    };
    while *p.peek() != Tok::Eof {
        if *p.peek() == Tok::RBrace {
            let _ = p.unexpected::<()>("a top-level block");
            p.bump();
            continue;
        }
        if parse_item(&mut p, &mut acc).is_err() {
            p.recover();
        }
    }
    let eof = p.here();
    let mut diags = std::mem::take(&mut p.diags);
    let had_syntax_errors = !diags.is_empty();
    let scenario = resolve(acc, eof, &mut diags);
    match scenario {
        Some(s) if !had_syntax_errors => Ok(s),
        _ => {
            if diags.is_empty() {
                diags.push(ParseDiagnostic::error(eof, "scenario rejected"));
            }
            diags.sort_by_key(|d| (d.line, d.column));
            Err(diags)
        }
    }
}

/// Like [`parse_scenario`] for raw bytes; invalid UTF-8 is a diagnostic.
pub fn parse_scenario_bytes(bytes: &[u8]) -> Result<Scenario, Vec<ParseDiagnostic>> {
    match std::str::from_utf8(bytes) {
        Ok(src) => parse_scenario(src),
        Err(e) => {
            let valid = std::str::from_utf8(&bytes[..e.valid_up_to()]).unwrap_or_default();
            let line = valid.matches('\n').count() + 1;
            let column = valid.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
            Err(vec![ParseDiagnostic {
                severity: Severity::Error,
                line,
                column,
                message: "input is not valid UTF-8".into(),
            }])
        }
    }
}
