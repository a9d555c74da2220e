//! Datalog¬ to Netlog compiler.
//!
//! Relations are held at their first argument. Rule bodies that span
//! several nodes are split into sub-query rules whose results are pushed
//! back to the head's holder. A per-node clock of period `kappa + 1` keeps
//! every node in the same Datalog stage, and `inf`/`continue`/`stop` detect
//! the global fixpoint.

use crate::logic::rules::{check_safe, Guard, Literal, Program, RelLit, Rule};
use crate::logic::{CmpOp, Term};
use crate::netlog::{check_localization, NetlogError};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

const RESERVED: [&str; 5] = ["start", "clock", "continue", "inf", "stop"];

#[derive(Debug, Error)]
pub enum RewriteError {
    #[error("relation {0} has no argument to hold")]
    Nullary(String),
    #[error("rule {rule}: {pred} has a constant in its holding position")]
    ConstantHolder { rule: usize, pred: String },
    #[error("relation name {0} is reserved by the compiler")]
    Reserved(String),
    #[error("rule {0} has no relational body literal")]
    NoBody(usize),
    #[error("rule {rule}: guard {guard} cannot be placed in any sub-query")]
    Guard { rule: usize, guard: String },
    #[error("rule {rule}: {msg}")]
    Unsafe { rule: usize, msg: String },
    #[error("emitted program is not localized: {0}")]
    Localization(NetlogError),
}

/// Guard on forwarding `inf` messages.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum InformGuard {
    /// `q >= Delta`, the original guard. Informs then travel
    /// only `kappa - Delta + 2` hops, which is short of the diameter when
    /// `kappa < 2 Delta - 2`.
    #[default]
    Diameter,
    /// `q >= c`. With `c = 2` informs cover the whole diameter.
    AtLeast(u32),
}

#[derive(Clone, Copy, Debug, Default)]
pub struct CompileOptions {
    pub inform_guard: InformGuard,
}

/// Rules produced for one source rule and the rounds they need.
#[derive(Clone, Debug)]
pub struct RuleTrace {
    pub source: Rule,
    pub rules: Vec<Rule>,
    pub kappa: u32,
}

#[derive(Clone, Debug)]
pub struct CompileOutput {
    pub program: Program,
    pub kappa: u32,
    pub delta: u32,
    pub traces: Vec<RuleTrace>,
}

impl CompileOutput {
    /// Program text with the `% kappa=K delta=D` header.
    pub fn to_text(&self) -> String {
        format!("% kappa={} delta={}\n{}", self.kappa, self.delta, self.program)
    }
}

fn var(v: &str) -> Term {
    Term::Var(v.to_string())
}

fn rel(pred: &str, args: Vec<Term>) -> RelLit {
    RelLit::new(pred, args, Some(0))
}

fn neg(mut l: RelLit) -> RelLit {
    l.negated = true;
    l
}

fn temp_name(r: &str) -> String {
    format!("temp{r}")
}

/// Mark the leftmost argument of every literal as holding.
pub fn localize(p: &Program) -> Result<Program, RewriteError> {
    let mut out = p.clone();
    for (i, r) in out.rules.iter_mut().enumerate() {
        for l in std::iter::once(&mut r.head).chain(r.body.iter_mut().filter_map(|l| match l {
            Literal::Rel(x) => Some(x),
            Literal::Guard(_) => None,
        })) {
            match l.args.first() {
                None => return Err(RewriteError::Nullary(l.pred.clone())),
                Some(Term::Const(_)) => return Err(RewriteError::ConstantHolder { rule: i + 1, pred: l.pred.clone() }),
                Some(Term::Var(_)) => l.hold = Some(0),
            }
        }
    }
    Ok(out)
}

struct Ctx {
    rule: usize,
    delta: u32,
    next_component: usize,
}

/// Turn edge literals touching `h` into `G(@h, other)`; the edge relation
/// is symmetric.
fn normalize_edges(body: &mut [Literal], h: &str) {
    for l in body {
        if let Literal::Rel(r) = l {
            if r.pred == "G" && r.holding_var() != Some(h) && r.args.iter().any(|t| t.as_var() == Some(h)) {
                if r.args[1].as_var() == Some(h) {
                    r.args.swap(0, 1);
                }
                r.hold = Some(0);
            }
        }
    }
}

fn held_at(l: &Literal, h: &str) -> bool {
    matches!(l, Literal::Rel(r) if r.holding_var() == Some(h))
}

fn vars_of<'a>(ls: impl IntoIterator<Item = &'a Literal>) -> Vec<String> {
    let mut out = Vec::new();
    for l in ls {
        for v in l.vars() {
            if !out.contains(&v) {
                out.push(v);
            }
        }
    }
    out
}

fn fresh(base: &str, taken: &BTreeSet<String>) -> String {
    if !taken.contains(base) {
        return base.to_string();
    }
    (1..).map(|i| format!("{base}{i}")).find(|c| !taken.contains(c)).unwrap()
}

/// Split a localized rule until every body is held at a single variable.
/// Returns the rules and the rounds one firing chain needs.
pub fn rewrite_rule(r: &Rule, rule: usize, delta: u32) -> Result<(Vec<Rule>, u32), RewriteError> {
    let h = r.head.holding_var().expect("localized").to_string();
    let mut ctx = Ctx { rule, delta, next_component: 0 };
    rewrite(&mut ctx, r.clone(), &h, &BTreeSet::from([h.clone()]), 1)
}

// `h` is where `r` is evaluated, `cn` the connection variables of the
// enclosing rules.
fn rewrite(ctx: &mut Ctx, mut r: Rule, h: &str, cn: &BTreeSet<String>, depth: usize) -> Result<(Vec<Rule>, u32), RewriteError> {
    normalize_edges(&mut r.body, h);
    if r.body.iter().all(|l| held_at(l, h) || matches!(l, Literal::Guard(_))) {
        return Ok((vec![r], 1));
    }
    let local: Vec<&Literal> = r.body.iter().filter(|l| held_at(l, h)).collect();
    let mut anchor: BTreeSet<String> = vars_of(local.iter().copied()).into_iter().collect();
    anchor.extend(r.head.vars());

    let mut kept = Vec::new();
    let mut remote = Vec::new();
    for l in &r.body {
        match l {
            _ if held_at(l, h) => kept.push(l.clone()),
            Literal::Guard(_) if l.vars().iter().all(|v| anchor.contains(v)) => kept.push(l.clone()),
            _ => remote.push(l.clone()),
        }
    }

    // components: literals linked by a shared variable outside cn
    let mut comp: Vec<usize> = (0..remote.len()).collect();
    fn find(c: &mut [usize], i: usize) -> usize {
        if c[i] != i {
            let root = find(c, c[i]);
            c[i] = root;
        }
        c[i]
    }
    for i in 0..remote.len() {
        for j in i + 1..remote.len() {
            let vi = remote[i].vars();
            if remote[j].vars().iter().any(|v| !cn.contains(v) && vi.contains(v)) {
                let (a, b) = (find(&mut comp, i), find(&mut comp, j));
                comp[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<Literal>> = BTreeMap::new();
    for (i, l) in remote.iter().enumerate() {
        groups.entry(find(&mut comp, i)).or_default().push(l.clone());
    }

    let neighbours: BTreeSet<&str> = local
        .iter()
        .filter_map(|l| l.as_rel())
        .filter(|l| l.pred == "G" && !l.negated)
        .filter_map(|l| l.args[1].as_var())
        .collect();

    let mut out = Vec::new();
    let mut subqueries = Vec::new();
    let mut kappa = 0;
    for (_, mut part) in groups {
        let rels: Vec<&RelLit> = part.iter().filter_map(Literal::as_rel).collect();
        if rels.is_empty() {
            return Err(RewriteError::Guard { rule: ctx.rule, guard: part[0].to_string() });
        }
        let connectors: BTreeSet<&str> =
            rels.iter().filter_map(|l| l.holding_var()).filter(|v| neighbours.contains(v)).collect();
        ctx.next_component += 1;
        let name = format!("Q_{}_{}_{}", ctx.rule, ctx.next_component, depth);
        let (holder, d, relay) = if let Some(&c) = connectors.first() {
            let c = c.to_string();
            part.push(Literal::Rel(rel("G", vec![var(&c), var(h)])));
            (c, 1, false)
        } else {
            let pivot = rels
                .iter()
                .filter(|l| !l.negated)
                .min_by_key(|l| l.to_string())
                .or_else(|| rels.iter().min_by_key(|l| l.to_string()))
                .unwrap();
            (pivot.holding_var().expect("localized").to_string(), 1 + ctx.delta, true)
        };
        let mut shared: Vec<String> = vars_of(part.iter()).into_iter().filter(|v| anchor.contains(v)).collect();
        if !relay {
            shared.retain(|v| v != h);
            shared.insert(0, h.to_string());
        }
        let at = |loc: &str, vs: &[String]| {
            let mut args = vec![var(loc)];
            if relay {
                args.extend(vs.iter().map(|v| var(v)));
            } else {
                args.extend(vs[1..].iter().map(|v| var(v)));
            }
            rel(&name, args)
        };
        let head = at(if relay { &holder } else { h }, &shared);
        subqueries.push(Literal::Rel(at(h, &shared)));
        if relay {
            let taken: BTreeSet<String> = shared.iter().cloned().collect();
            let (to, from) = (fresh("x'", &taken), fresh("y'", &taken));
            out.push(Rule {
                push: false,
                head: at(&to, &shared),
                body: vec![Literal::Rel(at(&from, &shared)), Literal::Rel(rel("G", vec![var(&from), var(&to)]))],
            });
        }
        let mut cn2 = cn.clone();
        cn2.insert(holder.clone());
        let (rules, k) = rewrite(ctx, Rule { push: false, head, body: part }, &holder, &cn2, depth + 1)?;
        out.extend(rules);
        kappa = kappa.max(k + d);
    }
    kept.extend(subqueries);
    out.insert(0, Rule { push: false, head: r.head, body: kept });
    Ok((out, kappa))
}

fn body_holder(r: &Rule) -> Option<&str> {
    r.body_rels().find_map(|l| l.holding_var())
}

/// Mark heads held away from their body with `^`.
pub fn add_comm(p: &Program) -> Program {
    let mut out = p.clone();
    for r in &mut out.rules {
        r.push = body_holder(r).is_some_and(|b| r.head.holding_var() != Some(b));
    }
    out
}

fn clock_guard(r: &Rule) -> [Literal; 2] {
    let q = fresh("q", &r.vars());
    let x = body_holder(r).expect("rewritten body is held").to_string();
    [Literal::Rel(rel("clock", vec![var(&x), var(&q)])), Literal::Guard(Guard::Cmp(CmpOp::Ne, var(&q), Term::Const(0)))]
}

fn tuple(arity: usize) -> Vec<Term> {
    (0..arity).map(|i| var(&format!("x{i}"))).collect()
}

fn parse_rule(text: &str) -> Rule {
    crate::logic::rules::parse_program(text, crate::logic::rules::Dialect::Netlog).expect("template parses").rules.remove(0)
}

/// Stage clocks, commit rules for the source's intentional relations and
/// the termination bookkeeping.
pub fn add_clocks(p: &Program, idb: &BTreeMap<String, usize>, kappa: u32, delta: u32, guard: InformGuard) -> Program {
    let mut rules = Vec::new();
    for r in &p.rules {
        let mut r = r.clone();
        r.body.extend(clock_guard(&r));
        if idb.contains_key(&r.head.pred) {
            r.head.pred = temp_name(&r.head.pred);
        }
        rules.push(r);
    }
    for (name, &arity) in idb {
        let xs = tuple(arity);
        let x = xs[0].clone();
        let clock0 = Literal::Rel(rel("clock", vec![x.clone(), Term::Const(0)]));
        let temp = Literal::Rel(rel(&temp_name(name), xs.clone()));
        let missing = Literal::Rel(neg(rel(name, xs.clone())));
        rules.push(Rule { push: false, head: rel(name, xs.clone()), body: vec![temp.clone(), clock0.clone()] });
        rules.push(Rule {
            push: false,
            head: rel("continue", vec![x.clone()]),
            body: vec![temp.clone(), missing.clone(), clock0.clone()],
        });
        rules.push(Rule {
            push: true,
            head: rel("inf", vec![var("y"), x.clone()]),
            body: vec![temp, missing, clock0, Literal::Rel(rel("G", vec![x.clone(), var("y")]))],
        });
    }
    let bound = match guard {
        InformGuard::Diameter => delta,
        InformGuard::AtLeast(c) => c,
    };
    for t in [
        "continue(@x) :- start(@x).".to_string(),
        "^inf(@y,x) :- start(@x); G(@x,y).".into(),
        format!("clock(@x,{kappa}) :- start(@x)."),
        "clock(@x,p) :- clock(@x,q); q >= 1; p = q - 1; !stop(@x).".into(),
        format!("clock(@x,{kappa}) :- clock(@x,0); !stop(@x)."),
        // the holder's own clock: guarding on the origin's clock would
        // put the body at two holders
        format!("^inf(@z,x) :- inf(@y,x); G(@y,z); x != z; clock(@y,q); q >= {bound}."),
        "continue(@x) :- inf(@x,y); clock(@x,q); q != 0.".into(),
        "continue(@x) :- continue(@x); clock(@x,q); q != 0.".into(),
        "stop(@x) :- !continue(@x); clock(@x,0).".into(),
    ] {
        rules.push(parse_rule(&t));
    }
    Program { rules }
}

/// Copy rules: auxiliary relations live for one stage, the source's
/// intentional relations forever.
pub fn inflate(p: &Program, source: &Program) -> Program {
    let mut out = p.clone();
    let arities = p.arities().expect("consistent arities");
    let src = source.arities().expect("consistent arities");
    let idb = source.intentional();
    for (name, &arity) in &arities {
        if RESERVED.contains(&name.as_str()) || (src.contains_key(name) && !idb.contains(name)) {
            continue;
        }
        let lit = rel(name, tuple(arity));
        let mut body = vec![Literal::Rel(lit.clone())];
        if !idb.contains(name) {
            body.push(Literal::Rel(rel("clock", vec![var("x0"), var("q")])));
            body.push(Literal::Guard(Guard::Cmp(CmpOp::Ne, var("q"), Term::Const(0))));
        }
        out.rules.push(Rule { push: false, head: lit, body });
    }
    out
}

pub fn compile(p: &Program, delta: u32) -> Result<CompileOutput, RewriteError> {
    compile_with(p, delta, CompileOptions::default())
}

pub fn compile_with(p: &Program, delta: u32, opts: CompileOptions) -> Result<CompileOutput, RewriteError> {
    let idb = p.intentional();
    for name in p.arities().map_err(|e| RewriteError::Unsafe { rule: 0, msg: e.to_string() })?.keys() {
        let shadows_temp = idb.iter().any(|r| *name == temp_name(r));
        if RESERVED.contains(&name.as_str()) || name.starts_with("Q_") || shadows_temp {
            return Err(RewriteError::Reserved(name.clone()));
        }
    }
    for (i, r) in p.rules.iter().enumerate() {
        if r.body_rels().next().is_none() {
            return Err(RewriteError::NoBody(i + 1));
        }
        check_safe(r, &[]).map_err(|msg| RewriteError::Unsafe { rule: i + 1, msg })?;
    }
    let p1 = localize(p)?;
    let mut traces = Vec::new();
    let mut kappa = delta;
    let mut p2 = Program::default();
    for (i, r) in p1.rules.iter().enumerate() {
        let (rules, k) = rewrite_rule(r, i + 1, delta)?;
        for e in &rules {
            let hv = body_holder(e).expect("rewritten body is held").to_string();
            check_safe(e, &[hv]).map_err(|msg| RewriteError::Unsafe { rule: i + 1, msg })?;
        }
        kappa = kappa.max(k);
        p2.rules.extend(rules.iter().cloned());
        traces.push(RuleTrace { source: p.rules[i].clone(), rules, kappa: k });
    }
    let p3 = add_comm(&p2);
    let arities = p.arities().expect("checked above");
    let idb_arity: BTreeMap<String, usize> = idb.iter().map(|r| (r.clone(), arities[r])).collect();
    let p4 = add_clocks(&p3, &idb_arity, kappa, delta, opts.inform_guard);
    let program = inflate(&p4, p);
    check_localization(&program).map_err(RewriteError::Localization)?;
    Ok(CompileOutput { program, kappa, delta, traces })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;

    fn lines(rules: &[Rule]) -> Vec<String> {
        rules.iter().map(|r| r.to_string()).collect()
    }

    #[test]
    fn localize_marks_leftmost() {
        let p = localize(&corpus::datalog(corpus::TC_DATALOG)).unwrap();
        assert_eq!(p.to_string(), "T(@x,y) :- G(@x,y).\nT(@x,y) :- G(@x,z); T(@z,y).\n");
        let r = localize(&corpus::datalog("R(x) :- R(x).")).unwrap();
        assert_eq!(r.to_string(), "R(@x) :- R(@x).\n");
        assert!(matches!(localize(&corpus::datalog("R(1,x) :- A(x).")), Err(RewriteError::ConstantHolder { .. })));
        assert!(matches!(localize(&corpus::datalog("R() :- A(x).")), Err(RewriteError::Nullary(_))));
    }

    #[test]
    fn tc_recursive_rule() {
        let p = localize(&corpus::datalog(corpus::TC_DATALOG)).unwrap();
        let (rules, k) = rewrite_rule(&p.rules[1], 2, 2).unwrap();
        assert_eq!(lines(&rules), ["T(@x,y) :- G(@x,z); Q_2_1_1(@x,z,y).", "Q_2_1_1(@x,z,y) :- T(@z,y); G(@z,x)."]);
        assert_eq!(k, 2);
        let (local, k) = rewrite_rule(&p.rules[0], 1, 2).unwrap();
        assert_eq!(local, vec![p.rules[0].clone()]);
        assert_eq!(k, 1);
        let p3 = add_comm(&Program { rules });
        assert!(!p3.rules[0].push && p3.rules[1].push);
    }

    #[test]
    fn disconnected_component_relays() {
        let p = localize(&corpus::datalog("P(x,y) :- A(x), B(y).")).unwrap();
        let (rules, k) = rewrite_rule(&p.rules[0], 1, 3).unwrap();
        assert_eq!(
            lines(&rules),
            ["P(@x,y) :- A(@x); Q_1_1_1(@x,y).", "Q_1_1_1(@x',y) :- Q_1_1_1(@y',y); G(@y',x').", "Q_1_1_1(@y,y) :- B(@y)."]
        );
        assert_eq!(k, 1 + 1 + 3);
        let p3 = add_comm(&Program { rules });
        assert_eq!(p3.rules.iter().map(|r| r.push).collect::<Vec<_>>(), [false, true, false]);
    }

    #[test]
    fn tc_compiles_with_kappa_two() {
        let out = compile(&corpus::datalog(corpus::TC_DATALOG), 2).unwrap();
        assert_eq!(out.kappa, 2);
        assert!(out.to_text().starts_with("% kappa=2 delta=2\n"));
        let text = out.program.to_string();
        assert!(text.contains("^inf(@z,x) :- inf(@y,x); G(@y,z); x != z; clock(@y,q); q >= 2."));
        assert!(text.contains("tempT(@x0,x1) :- tempT(@x0,x1); clock(@x0,q); q != 0."));
        assert!(text.contains("T(@x0,x1) :- T(@x0,x1).\n"));
        assert!(text.contains("^Q_2_1_1(@x,z,y) :- T(@z,y); G(@z,x); clock(@z,q); q != 0."));
        assert_eq!(out.traces.iter().map(|t| t.kappa).collect::<Vec<_>>(), [1, 2]);
        // a pure function of its inputs
        assert_eq!(compile(&corpus::datalog(corpus::TC_DATALOG), 2).unwrap().to_text(), out.to_text());
    }

    #[test]
    fn kappa_is_at_least_delta() {
        let out = compile(&corpus::datalog(corpus::TC_DATALOG), 5).unwrap();
        assert_eq!(out.kappa, 5);
        let empty = compile(&Program::default(), 3).unwrap();
        assert_eq!(empty.kappa, 3);
        assert!(empty.program.rules.iter().all(|r| ["continue", "inf", "clock", "stop"].contains(&r.head.pred.as_str())));
    }

    #[test]
    fn reserved_and_unsafe_programs() {
        assert!(matches!(compile(&corpus::datalog("clock(x) :- G(x,y)."), 2), Err(RewriteError::Reserved(_))));
        assert!(matches!(compile(&corpus::datalog("tempR(x) :- G(x,y). R(x) :- G(x,y)."), 2), Err(RewriteError::Reserved(_))));
        assert!(matches!(compile(&corpus::datalog("R(x) :- G(x,y), !S(z)."), 2), Err(RewriteError::Unsafe { .. })));
    }

    #[test]
    fn corpus_programs_are_localized() {
        for (text, delta) in [(corpus::TC_DATALOG, 2), (corpus::SAME_GENERATION_DATALOG, 3), (corpus::WIN_DATALOG, 4)] {
            let out = compile(&corpus::datalog(text), delta).unwrap();
            check_localization(&out.program).unwrap();
            assert!(out.kappa >= delta && out.traces.iter().all(|t| t.kappa >= 1 && t.kappa <= out.kappa));
        }
    }
}
