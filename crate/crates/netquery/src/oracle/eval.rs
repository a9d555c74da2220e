use super::{Graph, OracleError, Relation, StageTrace};
use crate::logic::rules::{check_safe, eval_body, Dialect, Facts, Program, RelLit};
use crate::logic::{FixpointQuery, Formula, NodeId, Quantifier, Term};
use std::collections::{BTreeMap, BTreeSet};

/// Interpretation of the relation symbols: the graph, its facts and extra
/// relations (the fixpoint relation, input relations).
pub struct Interp<'a> {
    pub graph: &'a Graph,
    pub extra: BTreeMap<String, &'a BTreeSet<Vec<NodeId>>>,
}

impl<'a> Interp<'a> {
    pub fn new(graph: &'a Graph) -> Self {
        Interp { graph, extra: BTreeMap::new() }
    }

    pub fn with(mut self, name: &str, rel: &'a BTreeSet<Vec<NodeId>>) -> Self {
        self.extra.insert(name.to_string(), rel);
        self
    }

    pub fn atom(&self, pred: &str, args: &[NodeId]) -> bool {
        if pred == "G" {
            return args.len() == 2 && self.graph.has_edge(args[0], args[1]);
        }
        if let Some(r) = self.extra.get(pred) {
            return r.contains(args);
        }
        self.graph.has_fact(pred, args)
    }

    fn check(&self, f: &Formula) -> Result<(), OracleError> {
        for (p, _) in f.predicates() {
            if p != "G" && !self.extra.contains_key(&p) && self.graph.relation(&p).is_none() {
                return Err(OracleError::UnknownPredicate(p));
            }
        }
        for c in f.constants() {
            if !self.graph.contains(c) {
                return Err(OracleError::ConstantNotInGraph(c));
            }
        }
        Ok(())
    }

    /// Truth of `f` under `env`, which must bind every free variable.
    pub fn eval(&self, f: &Formula, env: &mut Vec<(String, NodeId)>) -> bool {
        let val = |t: &Term, env: &Vec<(String, NodeId)>| match t {
            Term::Const(c) => *c,
            Term::Var(v) => env.iter().rev().find(|(n, _)| n == v).map(|(_, c)| *c).expect("unbound variable"),
        };
        match f {
            Formula::Bool(b) => *b,
            Formula::Atom(a) => {
                let args: Vec<NodeId> = a.args.iter().map(|t| val(t, env)).collect();
                self.atom(&a.pred, &args)
            }
            Formula::Cmp(op, a, b) => op.holds(val(a, env), val(b, env)),
            Formula::InNbhd { elem, center, radius } => self.graph.dist(val(center, env), val(elem, env)) <= *radius,
            Formula::Not(g) => !self.eval(g, env),
            Formula::And(a, b) => self.eval(a, env) && self.eval(b, env),
            Formula::Or(a, b) => self.eval(a, env) || self.eval(b, env),
            Formula::Quant { q, var, range, body } => {
                let center = range.as_ref().map(|r| (val(&r.center, env), r.radius));
                let mut result = *q == Quantifier::Forall;
                for v in self.graph.nodes() {
                    if let Some((c, k)) = center {
                        if self.graph.dist(c, v) > k {
                            continue;
                        }
                    }
                    env.push((var.clone(), v));
                    let b = self.eval(body, env);
                    env.pop();
                    if b != result {
                        result = b;
                        break;
                    }
                }
                result
            }
        }
    }

    /// All assignments to `vars` (in order) satisfying `f`.
    pub fn satisfying(&self, f: &Formula, vars: &[String]) -> BTreeSet<Vec<NodeId>> {
        let mut out = BTreeSet::new();
        let mut tuple = Vec::with_capacity(vars.len());
        self.enumerate(f, vars, &mut tuple, &mut out);
        out
    }

    fn enumerate(&self, f: &Formula, vars: &[String], tuple: &mut Vec<NodeId>, out: &mut BTreeSet<Vec<NodeId>>) {
        if tuple.len() == vars.len() {
            let mut env: Vec<(String, NodeId)> = vars.iter().cloned().zip(tuple.iter().copied()).collect();
            if self.eval(f, &mut env) {
                out.insert(tuple.clone());
            }
            return;
        }
        for v in self.graph.nodes() {
            tuple.push(v);
            self.enumerate(f, vars, tuple, out);
            tuple.pop();
        }
    }
}

pub fn eval_fo(g: &Graph, f: &Formula) -> Result<Relation, OracleError> {
    eval_fo_with(&Interp::new(g), f)
}

pub fn eval_fo_with(interp: &Interp, f: &Formula) -> Result<Relation, OracleError> {
    interp.check(f)?;
    let vars = f.free_vars();
    Ok(Relation { arity: vars.len(), tuples: interp.satisfying(f, &vars) })
}

pub fn eval_fp(g: &Graph, q: &FixpointQuery) -> Result<StageTrace, OracleError> {
    eval_fp_with(g, q, &BTreeMap::new())
}

/// Inflationary iteration with extra input relations.
pub fn eval_fp_with(
    g: &Graph,
    q: &FixpointQuery,
    inputs: &BTreeMap<String, BTreeSet<Vec<NodeId>>>,
) -> Result<StageTrace, OracleError> {
    let empty = BTreeSet::new();
    let mut probe = Interp::new(g).with(&q.name, &empty);
    for (k, v) in inputs {
        probe = probe.with(k, v);
    }
    probe.check(&q.body)?;
    let mut stages = vec![BTreeSet::new()];
    loop {
        let cur = stages.last().unwrap();
        let mut interp = Interp::new(g).with(&q.name, cur);
        for (k, v) in inputs {
            interp = interp.with(k, v);
        }
        let mut next = interp.satisfying(&q.body, &q.vars);
        next.extend(cur.iter().cloned());
        let done = &next == cur;
        stages.push(next);
        if done {
            break;
        }
    }
    Ok(StageTrace { arity: q.arity(), stages })
}

pub fn eval_fp_loc(g: &Graph, q: &FixpointQuery) -> Result<StageTrace, OracleError> {
    eval_fp_loc_with(g, q, &BTreeMap::new())
}

pub fn eval_fp_loc_with(
    g: &Graph,
    q: &FixpointQuery,
    inputs: &BTreeMap<String, BTreeSet<Vec<NodeId>>>,
) -> Result<StageTrace, OracleError> {
    if q.radius.is_none() {
        return Err(OracleError::NotLocal);
    }
    eval_fp_with(g, q, inputs)
}

/// A Datalog instance: relation name to tuples.
pub type Instance = BTreeMap<String, BTreeSet<Vec<NodeId>>>;

struct GlobalFacts<'a> {
    graph: &'a Graph,
    idb: &'a Instance,
}

impl GlobalFacts<'_> {
    fn rel(&self, pred: &str) -> Option<&BTreeSet<Vec<NodeId>>> {
        self.idb.get(pred).or_else(|| self.graph.relation(pred))
    }
}

impl Facts for GlobalFacts<'_> {
    fn scan(&self, lit: &RelLit, f: &mut dyn FnMut(&[NodeId])) {
        if lit.pred == "G" {
            for u in self.graph.nodes() {
                for &v in self.graph.neighbors(u) {
                    f(&[u, v]);
                }
            }
        } else if let Some(r) = self.rel(&lit.pred) {
            r.iter().for_each(|t| f(t));
        }
    }

    fn contains(&self, lit: &RelLit, args: &[NodeId]) -> bool {
        if lit.pred == "G" {
            return args.len() == 2 && self.graph.has_edge(args[0], args[1]);
        }
        self.rel(&lit.pred).is_some_and(|r| r.contains(args))
    }
}

/// Stages of the inflationary Datalog¬ computation, intentional relations only.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatalogTrace {
    pub stages: Vec<Instance>,
}

impl DatalogTrace {
    pub fn final_instance(&self) -> &Instance {
        self.stages.last().unwrap()
    }
}

pub fn eval_datalog(p: &Program, g: &Graph) -> Result<DatalogTrace, OracleError> {
    let idb = p.intentional();
    for e in p.extensional() {
        if e != "G" && g.relation(&e).is_none() {
            return Err(OracleError::UnknownPredicate(e));
        }
    }
    let mut plans = Vec::new();
    for r in &p.rules {
        plans.push(check_safe(r, &[]).map_err(OracleError::Unsafe)?);
    }
    let empty: Instance = idb.iter().map(|r| (r.clone(), BTreeSet::new())).collect();
    let mut stages = vec![empty];
    loop {
        let cur = stages.last().unwrap();
        let facts = GlobalFacts { graph: g, idb: cur };
        let mut next = cur.clone();
        for (r, plan) in p.rules.iter().zip(&plans) {
            let mut envs = Vec::new();
            eval_body(&r.body, plan, Vec::new(), &facts, &mut envs);
            for env in envs {
                let t = crate::logic::rules::ground_head(&r.head, &env).expect("safe rule");
                next.get_mut(&r.head.pred).unwrap().insert(t);
            }
        }
        let done = &next == cur;
        stages.push(next);
        if done {
            break;
        }
    }
    Ok(DatalogTrace { stages })
}

/// Parse a Datalog¬ program (convenience for tests and the CLI).
pub fn parse_datalog(text: &str) -> Result<Program, crate::logic::LogicError> {
    crate::logic::rules::parse_program(text, Dialect::Datalog)
}
