//! Rule syntax shared by Datalog¬ programs and Netlog programs.

use super::formula::{CmpOp, NodeId, Term};
use super::lexer::{tokenize, Cursor, Tok};
use super::LogicError;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RelLit {
    pub pred: String,
    pub args: Vec<Term>,
    /// Index of the `@`-marked argument.
    pub hold: Option<usize>,
    pub negated: bool,
}

impl RelLit {
    pub fn new(pred: &str, args: Vec<Term>, hold: Option<usize>) -> RelLit {
        RelLit { pred: pred.to_string(), args, hold, negated: false }
    }

    pub fn holding_term(&self) -> Option<&Term> {
        self.hold.map(|i| &self.args[i])
    }

    pub fn holding_var(&self) -> Option<&str> {
        self.holding_term().and_then(Term::as_var)
    }

    pub fn vars(&self) -> Vec<String> {
        let mut out = Vec::new();
        for t in &self.args {
            if let Term::Var(v) = t {
                if !out.contains(v) {
                    out.push(v.clone());
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Guard {
    Cmp(CmpOp, Term, Term),
    /// `lhs = rhs - by`
    Dec { lhs: Term, rhs: Term, by: u32 },
}

impl Guard {
    pub fn vars(&self) -> Vec<String> {
        let (a, b) = match self {
            Guard::Cmp(_, a, b) => (a, b),
            Guard::Dec { lhs, rhs, .. } => (lhs, rhs),
        };
        let mut out = Vec::new();
        for t in [a, b] {
            if let Term::Var(v) = t {
                if !out.contains(v) {
                    out.push(v.clone());
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Literal {
    Rel(RelLit),
    Guard(Guard),
}

impl Literal {
    pub fn vars(&self) -> Vec<String> {
        match self {
            Literal::Rel(r) => r.vars(),
            Literal::Guard(g) => g.vars(),
        }
    }

    pub fn as_rel(&self) -> Option<&RelLit> {
        match self {
            Literal::Rel(r) => Some(r),
            Literal::Guard(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Rule {
    pub push: bool,
    pub head: RelLit,
    pub body: Vec<Literal>,
}

impl Rule {
    pub fn body_rels(&self) -> impl Iterator<Item = &RelLit> {
        self.body.iter().filter_map(Literal::as_rel)
    }

    pub fn vars(&self) -> BTreeSet<String> {
        let mut out: BTreeSet<String> = self.head.vars().into_iter().collect();
        for l in &self.body {
            out.extend(l.vars());
        }
        out
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Program {
    pub rules: Vec<Rule>,
}

impl Program {
    /// Relations appearing in some head.
    pub fn intentional(&self) -> BTreeSet<String> {
        self.rules.iter().map(|r| r.head.pred.clone()).collect()
    }

    /// Relations used only in bodies.
    pub fn extensional(&self) -> BTreeSet<String> {
        let idb = self.intentional();
        self.rules
            .iter()
            .flat_map(|r| r.body_rels().map(|l| l.pred.clone()).collect::<Vec<_>>())
            .filter(|p| !idb.contains(p))
            .collect()
    }

    pub fn arities(&self) -> Result<BTreeMap<String, usize>, LogicError> {
        let mut out: BTreeMap<String, usize> = BTreeMap::new();
        out.insert("G".into(), 2);
        for r in &self.rules {
            for l in std::iter::once(&r.head).chain(r.body_rels()) {
                let e = *out.entry(l.pred.clone()).or_insert(l.args.len());
                if e != l.args.len() {
                    return Err(LogicError::Arity { pred: l.pred.clone(), expected: e, found: l.args.len() });
                }
            }
        }
        Ok(out)
    }
}

impl fmt::Display for RelLit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.negated {
            write!(f, "!")?;
        }
        write!(f, "{}(", self.pred)?;
        for (i, t) in self.args.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            if self.hold == Some(i) {
                write!(f, "@")?;
            }
            write!(f, "{t}")?;
        }
        write!(f, ")")
    }
}

impl fmt::Display for Guard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Guard::Cmp(op, a, b) => write!(f, "{a} {} {b}", op.symbol()),
            Guard::Dec { lhs, rhs, by } => write!(f, "{lhs} = {rhs} - {by}"),
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Rel(r) => r.fmt(f),
            Literal::Guard(g) => g.fmt(f),
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.push {
            write!(f, "^")?;
        }
        write!(f, "{}", self.head)?;
        if !self.body.is_empty() {
            write!(f, " :- ")?;
            for (i, l) in self.body.iter().enumerate() {
                if i > 0 {
                    write!(f, "; ")?;
                }
                write!(f, "{l}")?;
            }
        }
        write!(f, ".")
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.rules {
            writeln!(f, "{r}")?;
        }
        Ok(())
    }
}

/// Which surface syntax is being parsed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dialect {
    /// `,` or `;` separators, no `@`, no `^`.
    Datalog,
    Netlog,
}

pub fn parse_program(text: &str, dialect: Dialect) -> Result<Program, LogicError> {
    let mut cur = Cursor::new(tokenize(text, '%')?, text);
    let mut rules = Vec::new();
    while !cur.at_end() {
        rules.push(rule(&mut cur, dialect)?);
    }
    let p = Program { rules };
    p.arities()?;
    Ok(p)
}

fn rule(cur: &mut Cursor, dialect: Dialect) -> Result<Rule, LogicError> {
    let push = if cur.peek() == Some(&Tok::Caret) {
        if dialect == Dialect::Datalog {
            return Err(cur.error("'^' is not allowed in Datalog"));
        }
        cur.bump();
        true
    } else {
        false
    };
    let head = rel_lit(cur, dialect, false)?;
    let mut body = Vec::new();
    if cur.eat(&Tok::Rule) {
        loop {
            body.push(literal(cur, dialect)?);
            if cur.eat(&Tok::Semi) || cur.eat(&Tok::Comma) {
                continue;
            }
            break;
        }
    }
    cur.expect(&Tok::Dot, "'.' at end of rule")?;
    Ok(Rule { push, head, body })
}

fn term(cur: &mut Cursor) -> Result<Term, LogicError> {
    match cur.peek() {
        Some(Tok::Ident(_)) => Ok(Term::Var(cur.ident("term")?)),
        Some(Tok::Int(_)) => Ok(Term::Const(cur.int("term")?)),
        _ => Err(cur.error("expected variable or constant")),
    }
}

fn rel_lit(cur: &mut Cursor, dialect: Dialect, negated: bool) -> Result<RelLit, LogicError> {
    let pred = cur.ident("relation name")?;
    cur.expect(&Tok::LParen, "'('")?;
    let mut args = Vec::new();
    let mut hold = None;
    if !cur.eat(&Tok::RParen) {
        loop {
            if cur.peek() == Some(&Tok::At) {
                if dialect == Dialect::Datalog {
                    return Err(cur.error("'@' is not allowed in Datalog"));
                }
                if hold.is_some() {
                    return Err(cur.error("second '@' in one literal"));
                }
                cur.bump();
                hold = Some(args.len());
            }
            args.push(term(cur)?);
            if !cur.eat(&Tok::Comma) {
                break;
            }
        }
        cur.expect(&Tok::RParen, "')'")?;
    }
    Ok(RelLit { pred, args, hold, negated })
}

fn literal(cur: &mut Cursor, dialect: Dialect) -> Result<Literal, LogicError> {
    if cur.eat(&Tok::Bang) {
        return Ok(Literal::Rel(rel_lit(cur, dialect, true)?));
    }
    if matches!(cur.peek(), Some(Tok::Ident(_))) && cur.peek_at(1) == Some(&Tok::LParen) {
        return Ok(Literal::Rel(rel_lit(cur, dialect, false)?));
    }
    let lhs = term(cur)?;
    let op = match cur.bump() {
        Some(Tok::Eq) => CmpOp::Eq,
        Some(Tok::Ne) => CmpOp::Ne,
        Some(Tok::Ge) => CmpOp::Ge,
        _ => return Err(cur.error("expected comparison operator")),
    };
    let rhs = term(cur)?;
    if op == CmpOp::Eq && cur.eat(&Tok::Minus) {
        let by = cur.int("decrement")?;
        return Ok(Literal::Guard(Guard::Dec { lhs, rhs, by }));
    }
    Ok(Literal::Guard(Guard::Cmp(op, lhs, rhs)))
}

/// Fact store consulted during body evaluation.
pub trait Facts {
    fn scan(&self, lit: &RelLit, f: &mut dyn FnMut(&[NodeId]));
    fn contains(&self, lit: &RelLit, args: &[NodeId]) -> bool;
}

pub type Env = Vec<(String, NodeId)>;

fn lookup(env: &Env, v: &str) -> Option<NodeId> {
    env.iter().find(|(n, _)| n == v).map(|(_, c)| *c)
}

fn value(env: &Env, t: &Term) -> Option<NodeId> {
    match t {
        Term::Const(c) => Some(*c),
        Term::Var(v) => lookup(env, v),
    }
}

/// Order in which body literals are evaluated given initially bound
/// variables. Filters run as soon as their variables are bound.
pub fn plan_body(body: &[Literal], bound: &[String]) -> Result<Vec<usize>, String> {
    let mut bound: BTreeSet<String> = bound.iter().cloned().collect();
    let mut done = vec![false; body.len()];
    let mut order = Vec::new();
    let is_bound = |t: &Term, b: &BTreeSet<String>| t.as_var().is_none_or(|v| b.contains(v));
    while order.len() < body.len() {
        let mut pick = None;
        // filters and bindings first
        for (i, l) in body.iter().enumerate() {
            if done[i] {
                continue;
            }
            let ready = match l {
                Literal::Rel(r) if r.negated => r.args.iter().all(|t| is_bound(t, &bound)),
                Literal::Rel(_) => false,
                Literal::Guard(Guard::Cmp(CmpOp::Eq, a, b)) => is_bound(a, &bound) || is_bound(b, &bound),
                Literal::Guard(Guard::Cmp(_, a, b)) => is_bound(a, &bound) && is_bound(b, &bound),
                Literal::Guard(Guard::Dec { rhs, .. }) => is_bound(rhs, &bound),
            };
            if ready {
                pick = Some(i);
                break;
            }
        }
        if pick.is_none() {
            pick = body.iter().enumerate().position(|(i, l)| !done[i] && matches!(l, Literal::Rel(r) if !r.negated));
        }
        let Some(i) = pick else {
            let stuck: Vec<String> = body.iter().enumerate().filter(|(i, _)| !done[*i]).map(|(_, l)| l.to_string()).collect();
            return Err(format!("unsafe body: cannot bind variables of {}", stuck.join(", ")));
        };
        done[i] = true;
        order.push(i);
        bound.extend(body[i].vars());
    }
    Ok(order)
}

/// All satisfying extensions of `env` for the body, evaluated in `order`.
pub fn eval_body(body: &[Literal], order: &[usize], env: Env, facts: &dyn Facts, out: &mut Vec<Env>) {
    eval_from(body, order, 0, env, facts, out)
}

fn eval_from(body: &[Literal], order: &[usize], at: usize, env: Env, facts: &dyn Facts, out: &mut Vec<Env>) {
    if at == order.len() {
        out.push(env);
        return;
    }
    match &body[order[at]] {
        Literal::Rel(r) if r.negated => {
            let args: Vec<NodeId> = r.args.iter().map(|t| value(&env, t).expect("planned")).collect();
            if !facts.contains(r, &args) {
                eval_from(body, order, at + 1, env, facts, out);
            }
        }
        Literal::Rel(r) => {
            let mut matches = Vec::new();
            facts.scan(r, &mut |tuple| {
                if tuple.len() != r.args.len() {
                    return;
                }
                let mut e = env.clone();
                for (t, &c) in r.args.iter().zip(tuple) {
                    match t {
                        Term::Const(k) if *k != c => return,
                        Term::Const(_) => {}
                        Term::Var(v) => match lookup(&e, v) {
                            Some(b) if b != c => return,
                            Some(_) => {}
                            None => e.push((v.clone(), c)),
                        },
                    }
                }
                matches.push(e);
            });
            for e in matches {
                eval_from(body, order, at + 1, e, facts, out);
            }
        }
        Literal::Guard(Guard::Cmp(op, a, b)) => match (value(&env, a), value(&env, b)) {
            (Some(x), Some(y)) => {
                if op.holds(x, y) {
                    eval_from(body, order, at + 1, env, facts, out);
                }
            }
            (None, Some(y)) => {
                let mut e = env;
                e.push((a.as_var().unwrap().to_string(), y));
                eval_from(body, order, at + 1, e, facts, out);
            }
            (Some(x), None) => {
                let mut e = env;
                e.push((b.as_var().unwrap().to_string(), x));
                eval_from(body, order, at + 1, e, facts, out);
            }
            (None, None) => unreachable!("planned"),
        },
        Literal::Guard(Guard::Dec { lhs, rhs, by }) => {
            let Some(r) = value(&env, rhs) else { unreachable!("planned") };
            let Some(v) = r.checked_sub(*by) else { return };
            match value(&env, lhs) {
                Some(l) if l == v => eval_from(body, order, at + 1, env, facts, out),
                Some(_) => {}
                None => {
                    let mut e = env;
                    e.push((lhs.as_var().unwrap().to_string(), v));
                    eval_from(body, order, at + 1, e, facts, out);
                }
            }
        }
    }
}

/// Instantiate a head under a complete environment.
pub fn ground_head(head: &RelLit, env: &Env) -> Option<Vec<NodeId>> {
    head.args.iter().map(|t| value(env, t)).collect()
}

/// Static safety: every head variable is bound by the body.
pub fn check_safe(rule: &Rule, prebound: &[String]) -> Result<Vec<usize>, String> {
    let order = plan_body(&rule.body, prebound)?;
    let mut bound: BTreeSet<String> = prebound.iter().cloned().collect();
    for l in &rule.body {
        bound.extend(l.vars());
    }
    for v in rule.head.vars() {
        if !bound.contains(&v) {
            return Err(format!("head variable {v} of {} is not bound by the body", rule.head.pred));
        }
    }
    Ok(order)
}
