//! Distributed FO query engine: query floods, variable instantiation,
//! clocks and witness/counterevidence aggregation.
//!
//! The per-node logic lives in [`FoCore`], which the FP engine reuses for
//! every iteration of its body.

use crate::logic::{
    prenex, simplify, split_prenex, stats, substitute, Formula, NodeId, Quantifier, Term,
};
use crate::oracle::{OracleError, Relation};
use crate::simnet::{self, BitModel, Ctx, Engine, Incoming, Metrics, Network, NodeInfo, Payload, RunConfig, Size};
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FoError {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Sim(#[from] simnet::SimError),
    #[error("requesting node {0} is not in the network")]
    BadRequester(NodeId),
    #[error("the engine needs globally unique ids")]
    NeedsIds,
    #[error("relativized quantifiers and neighbourhood atoms belong to the local engine")]
    Relativized,
    #[error("network has a single node; clocks need a diameter of at least 1")]
    Trivial,
}

/// Value of the requester's clock.
pub fn clock_value(w: usize, delta: u32) -> u64 {
    2 * delta as u64 * w as u64
}

#[derive(Clone, Debug, PartialEq)]
pub enum FoMsg {
    /// `?B φ`
    Query { formula: Formula, key: String, hops: u32 },
    /// `?x1..?xi !a(i+1)..!al φ`
    Open { formula: Formula, free: Vec<String>, suffix: Vec<NodeId>, hops: u32 },
    /// `!B φ`, identified by its canonical key.
    Answer { key: String, value: bool, hops: u32 },
}

impl Payload for FoMsg {
    fn size(&self, bm: &BitModel) -> Size {
        match self {
            FoMsg::Query { formula, .. } => Size::tag().raw(BitModel::formula(formula.printed_len())).ids(bm, 1),
            FoMsg::Open { formula, suffix, .. } => {
                Size::tag().raw(BitModel::formula(formula.printed_len())).ids(bm, suffix.len() + 1)
            }
            FoMsg::Answer { key, .. } => Size::tag().raw(BitModel::formula(key.len()) + 1).ids(bm, 1),
        }
    }
}

impl FoMsg {
    fn flood_key(&self) -> String {
        match self {
            FoMsg::Query { key, .. } => format!("?{key}"),
            FoMsg::Open { formula, free, suffix, .. } => open_key(formula, free, suffix),
            FoMsg::Answer { key, value, .. } => format!("!{value}{key}"),
        }
    }

    fn hops(&self) -> u32 {
        match self {
            FoMsg::Query { hops, .. } | FoMsg::Open { hops, .. } | FoMsg::Answer { hops, .. } => *hops,
        }
    }

    fn with_hops(&self, h: u32) -> FoMsg {
        let mut m = self.clone();
        match &mut m {
            FoMsg::Query { hops, .. } | FoMsg::Open { hops, .. } | FoMsg::Answer { hops, .. } => *hops = h,
        }
        m
    }
}

fn open_key(formula: &Formula, free: &[String], suffix: &[NodeId]) -> String {
    format!("?{}{:?}{:?}", formula.canonical_key(), free, suffix)
}

/// Where a decided query's value goes.
#[derive(Clone, Debug, PartialEq, Eq)]
enum Link {
    Root,
    /// Instance of a quantified parent.
    Instance(String),
    /// Residual of a ground parent.
    Equivalent(String),
    /// Boolean form of an open query for this tuple.
    Tuple(Vec<NodeId>),
}

#[derive(Clone, Debug)]
struct Record {
    formula: Formula,
    parents: Vec<Link>,
    owned: bool,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum How {
    Evidence,
    Received,
    Default,
}

/// Message leaving a node: broadcast to all ports but `except`.
#[derive(Clone, Debug)]
pub struct Out {
    pub except: Option<usize>,
    pub msg: FoMsg,
}

/// Local knowledge: decides the ground atoms this node can decide.
pub type Know<'a> = &'a dyn Fn(&Formula) -> Option<bool>;

/// One node's query and answer tables, clocks and flood bookkeeping.
#[derive(Clone, Debug)]
pub struct FoCore {
    me: NodeId,
    delta: u32,
    records: HashMap<String, Record>,
    answers: HashMap<String, bool>,
    clocks: BTreeMap<u64, Vec<String>>,
    /// Largest hop budget sent per flood key.
    best: HashMap<String, u32>,
    opens: HashSet<String>,
    pub tuples: BTreeSet<Vec<NodeId>>,
    pub root: Option<bool>,
    pub out: Vec<Out>,
    pub steps: u64,
}

impl FoCore {
    pub fn new(me: NodeId, delta: u32) -> FoCore {
        FoCore {
            me,
            delta,
            records: HashMap::new(),
            answers: HashMap::new(),
            clocks: BTreeMap::new(),
            best: HashMap::new(),
            opens: HashSet::new(),
            tuples: BTreeSet::new(),
            root: None,
            out: Vec::new(),
            steps: 0,
        }
    }

    pub fn quiescent(&self) -> bool {
        self.clocks.is_empty()
    }

    pub fn answer(&self, key: &str) -> Option<bool> {
        self.answers.get(key).copied()
    }

    fn originate(&mut self, msg: FoMsg) {
        if self.delta == 0 {
            return;
        }
        let h = self.delta - 1;
        let key = msg.flood_key();
        let best = self.best.entry(key).or_insert(h);
        *best = (*best).max(h);
        self.out.push(Out { except: None, msg: msg.with_hops(h) });
    }

    /// Flood relay; true if the content is new to this node.
    fn relay(&mut self, port: usize, msg: &FoMsg) -> bool {
        let key = msg.flood_key();
        let first = !self.best.contains_key(&key);
        let h = msg.hops();
        let prev = self.best.get(&key).copied();
        if h >= 1 && prev.is_none_or(|p| h - 1 > p) {
            self.best.insert(key, h - 1);
            self.out.push(Out { except: Some(port), msg: msg.with_hops(h - 1) });
        } else if prev.is_none() {
            self.best.insert(key, 0);
        }
        first
    }

    fn set_clock(&mut self, now: u64, value: u64, key: &str) {
        self.clocks.entry(now + value).or_default().push(key.to_string());
    }

    /// The requester's Boolean query, clocked at `clock` rounds.
    pub fn start_boolean(&mut self, now: u64, f: &Formula, clock: u64, know: Know) {
        let q = simplify(&prenex(f), know);
        self.steps += 1;
        if let Formula::Bool(v) = q {
            self.root = Some(v);
            return;
        }
        let key = q.canonical_key();
        self.records.insert(key.clone(), Record { formula: q.clone(), parents: vec![Link::Root], owned: true });
        self.set_clock(now, clock, &key);
        self.originate(FoMsg::Query { formula: q.clone(), key: key.clone(), hops: 0 });
        self.expand(now, &key, &q, know);
    }

    /// The requester's open query: flood it and instantiate here too.
    pub fn start_open(&mut self, now: u64, f: &Formula, free: &[String], know: Know) {
        let f = prenex(f);
        self.opens.insert(open_key(&f, free, &[]));
        self.originate(FoMsg::Open { formula: f.clone(), free: free.to_vec(), suffix: vec![], hops: 0 });
        self.instantiate_open(now, &f, free, &[], know);
    }

    /// An open query with the last free variable bound to this node, without
    /// flooding the uninstantiated form (every node starts its own).
    pub fn start_open_here(&mut self, now: u64, f: &Formula, free: &[String], know: Know) {
        self.instantiate_open(now, &prenex(f), free, &[], know);
    }

    pub fn receive(&mut self, now: u64, port: usize, msg: FoMsg, know: Know) {
        let first = self.relay(port, &msg);
        self.steps += 1;
        if !first {
            return;
        }
        match msg {
            FoMsg::Query { formula, key, .. } => {
                if self.records.contains_key(&key) || self.answers.contains_key(&key) {
                    return;
                }
                self.records.insert(key.clone(), Record { formula: formula.clone(), parents: vec![], owned: false });
                self.expand(now, &key, &formula, know);
            }
            FoMsg::Open { formula, free, suffix, .. } => {
                if self.opens.insert(open_key(&formula, &free, &suffix)) {
                    self.instantiate_open(now, &formula, &free, &suffix, know);
                }
            }
            FoMsg::Answer { key, value, .. } => self.resolve(&key, value, How::Received),
        }
    }

    /// Fire the clocks due at `now`.
    pub fn tick(&mut self, now: u64) {
        let due: Vec<u64> = self.clocks.range(..=now).map(|(t, _)| *t).collect();
        for t in due {
            for key in self.clocks.remove(&t).unwrap() {
                if self.answers.contains_key(&key) {
                    continue;
                }
                let default = match self.records.get(&key).map(|r| &r.formula) {
                    Some(Formula::Quant { q: Quantifier::Exists, .. }) => false,
                    Some(Formula::Quant { q: Quantifier::Forall, .. }) => true,
                    _ => continue,
                };
                self.steps += 1;
                self.resolve(&key, default, How::Default);
            }
        }
    }

    /// Local work on a Boolean query present in the table.
    fn expand(&mut self, now: u64, key: &str, q: &Formula, know: Know) {
        self.steps += 1;
        match q {
            Formula::Quant { var, body, .. } => {
                let child = simplify(&substitute(body, var, self.me), know);
                self.handle_child(now, child, Link::Instance(key.to_string()), know);
            }
            _ => {
                let s = simplify(q, know);
                match s {
                    Formula::Bool(v) => self.resolve(key, v, How::Evidence),
                    s if &s != q => self.handle_child(now, s, Link::Equivalent(key.to_string()), know),
                    _ => {}
                }
            }
        }
    }

    fn instantiate_open(&mut self, now: u64, f: &Formula, free: &[String], suffix: &[NodeId], know: Know) {
        self.steps += 1;
        let (last, rest) = free.split_last().expect("open query has a free variable");
        let g = simplify(&substitute(f, last, self.me), know);
        if g == Formula::Bool(false) {
            return;
        }
        let mut suffix2 = vec![self.me];
        suffix2.extend_from_slice(suffix);
        if rest.is_empty() {
            match g {
                Formula::Bool(true) => {
                    self.tuples.insert(suffix2);
                }
                g => self.handle_child(now, g, Link::Tuple(suffix2), know),
            }
            return;
        }
        if self.opens.insert(open_key(&g, rest, &suffix2)) {
            self.originate(FoMsg::Open { formula: g.clone(), free: rest.to_vec(), suffix: suffix2.clone(), hops: 0 });
            self.instantiate_open(now, &g, rest, &suffix2, know);
        }
    }

    fn handle_child(&mut self, now: u64, c: Formula, link: Link, know: Know) {
        self.steps += 1;
        if let Formula::Bool(v) = c {
            return self.apply(link, v);
        }
        let key = c.canonical_key();
        if let Some(&v) = self.answers.get(&key) {
            return self.apply(link, v);
        }
        let clock = matches!(c, Formula::Quant { .. }).then(|| subquery_clock(&c, self.delta));
        if let Some(rec) = self.records.get_mut(&key) {
            rec.parents.push(link);
            if !rec.owned {
                rec.owned = true;
                if let Some(v) = clock {
                    self.set_clock(now, v, &key);
                }
            }
            return;
        }
        self.records.insert(key.clone(), Record { formula: c.clone(), parents: vec![link], owned: true });
        if let Some(v) = clock {
            self.set_clock(now, v, &key);
        }
        self.originate(FoMsg::Query { formula: c.clone(), key: key.clone(), hops: 0 });
        if matches!(c, Formula::Quant { .. }) {
            self.expand(now, &key, &c, know);
        }
    }

    fn apply(&mut self, link: Link, v: bool) {
        match link {
            Link::Root => {
                self.root.get_or_insert(v);
            }
            Link::Tuple(t) => {
                if v {
                    self.tuples.insert(t);
                }
            }
            Link::Equivalent(p) => self.resolve(&p, v, How::Evidence),
            Link::Instance(p) => {
                let decisive = match self.records.get(&p).map(|r| &r.formula) {
                    Some(Formula::Quant { q: Quantifier::Exists, .. }) => v,
                    Some(Formula::Quant { q: Quantifier::Forall, .. }) => !v,
                    _ => false,
                };
                if decisive {
                    self.resolve(&p, v, How::Evidence);
                }
            }
        }
    }

    fn resolve(&mut self, key: &str, v: bool, how: How) {
        if self.answers.contains_key(key) {
            return;
        }
        self.steps += 1;
        self.answers.insert(key.to_string(), v);
        let rec = self.records.get(key).cloned();
        let top_only = rec
            .as_ref()
            .is_some_and(|r| r.owned && r.parents.iter().all(|l| matches!(l, Link::Root | Link::Tuple(_))));
        if how == How::Evidence && !top_only {
            self.originate(FoMsg::Answer { key: key.to_string(), value: v, hops: 0 });
        }
        if let Some(r) = rec.filter(|r| r.owned) {
            for l in r.parents {
                self.apply(l, v);
            }
        }
    }
}

/// Clock of a quantified subquery: twice Δ per bound variable left plus per
/// remote decider still to visit.
pub fn subquery_clock(q: &Formula, delta: u32) -> u64 {
    let (prefix, matrix) = split_prenex(q);
    let order: Vec<&str> = prefix.iter().map(|e| e.var.as_str()).collect();
    let mut need: Vec<BTreeSet<Term>> = Vec::new();
    matrix.visit(&mut |g| {
        if let Formula::Atom(a) = g {
            let decider_pos: &[usize] = if a.pred == "G" { &[0, 1] } else { &[0] };
            let last = a
                .args
                .iter()
                .enumerate()
                .filter_map(|(i, t)| t.as_var().and_then(|v| order.iter().position(|o| *o == v)).map(|p| (p, i)))
                .max();
            let local = last.is_some_and(|(_, i)| decider_pos.contains(&i));
            if !local {
                need.push(decider_pos.iter().filter_map(|&i| a.args.get(i).cloned()).collect());
            }
        }
    });
    clock_value(prefix.len() + min_hitting_set(&need), delta)
}

fn min_hitting_set(sets: &[BTreeSet<Term>]) -> usize {
    if sets.is_empty() {
        return 0;
    }
    let universe: Vec<&Term> = sets.iter().flatten().collect::<BTreeSet<_>>().into_iter().collect();
    if universe.len() > 16 {
        return sets.len();
    }
    (0u32..1 << universe.len())
        .filter(|mask| sets.iter().all(|s| universe.iter().enumerate().any(|(i, t)| mask >> i & 1 == 1 && s.contains(t))))
        .map(|m| m.count_ones() as usize)
        .min()
        .unwrap_or(sets.len())
}

/// Facts a node can decide from its own data: its edges and the facts it holds.
pub fn local_knowledge<'a>(info: &'a NodeInfo, extra: &'a BTreeMap<String, BTreeSet<Vec<NodeId>>>) -> impl Fn(&Formula) -> Option<bool> + 'a {
    let me = info.id.expect("named node");
    move |f: &Formula| {
        let Formula::Atom(a) = f else { return None };
        let c = a.consts()?;
        if a.pred == "G" {
            let names = info.neighbor_names.as_ref()?;
            return if c[0] == me {
                Some(names.contains(&c[1]))
            } else if c[1] == me {
                Some(names.contains(&c[0]))
            } else {
                None
            };
        }
        if c.first() != Some(&me) {
            return None;
        }
        if let Some(r) = extra.get(&a.pred) {
            return Some(r.contains(&c));
        }
        Some(info.held.get(&a.pred).is_some_and(|r| r.contains(&c)))
    }
}

/// Standalone engine for one FO query.
pub struct FoEngine {
    core: FoCore,
    info: NodeInfo,
    query: Option<(Formula, Vec<String>, u64)>,
    empty: BTreeMap<String, BTreeSet<Vec<NodeId>>>,
}

impl FoEngine {
    pub fn core(&self) -> &FoCore {
        &self.core
    }
}

impl Engine for FoEngine {
    type Msg = FoMsg;

    fn start(&mut self, ctx: &mut Ctx<FoMsg>) {
        if let Some((f, free, clock)) = self.query.take() {
            let know = local_knowledge(&self.info, &self.empty);
            if free.is_empty() {
                self.core.start_boolean(0, &f, clock, &know);
            } else {
                self.core.start_open(0, &f, &free, &know);
            }
        }
        flush(&mut self.core, ctx);
    }

    fn on_round(&mut self, ctx: &mut Ctx<FoMsg>, inbox: Vec<Incoming<FoMsg>>) {
        let know = local_knowledge(&self.info, &self.empty);
        for m in inbox {
            self.core.receive(ctx.round, m.port, m.msg, &know);
        }
        self.core.tick(ctx.round);
        flush(&mut self.core, ctx);
    }

    fn quiescent(&self) -> bool {
        self.core.quiescent()
    }
}

pub(crate) fn flush<M: Clone>(core: &mut FoCore, ctx: &mut Ctx<M>)
where
    FoMsg: Into<M>,
{
    for o in core.out.drain(..) {
        match o.except {
            Some(p) => ctx.broadcast_except(p, o.msg.into()),
            None => ctx.broadcast(o.msg.into()),
        }
    }
    ctx.step(std::mem::take(&mut core.steps));
}

/// Result of a distributed run: the union of the answer tables, plus each
/// node's own table.
#[derive(Clone, Debug)]
pub struct DistResult {
    pub relation: Relation,
    pub per_node: Vec<BTreeSet<Vec<NodeId>>>,
    pub metrics: Metrics,
}

pub(crate) fn check_query(net: &Network, f: &Formula, extra: &[&str]) -> Result<(), FoError> {
    if f.has_relativization() {
        return Err(FoError::Relativized);
    }
    let sig = net.graph().signature();
    for (p, _) in f.predicates() {
        if !sig.contains_key(&p) && !extra.contains(&p.as_str()) {
            return Err(OracleError::UnknownPredicate(p).into());
        }
    }
    for c in f.constants() {
        if !net.graph().contains(c) {
            return Err(OracleError::ConstantNotInGraph(c).into());
        }
    }
    if !matches!(net.mode(), simnet::Mode::Global) {
        return Err(FoError::NeedsIds);
    }
    if net.n() < 2 {
        return Err(FoError::Trivial);
    }
    Ok(())
}

pub fn run_qe_fo(net: &Network, f: &Formula, req: NodeId, cfg: RunConfig) -> Result<DistResult, FoError> {
    check_query(net, f, &[])?;
    if !net.graph().contains(req) {
        return Err(FoError::BadRequester(req));
    }
    let free = f.free_vars();
    let delta = net.graph().diameter();
    let clock = clock_value(stats(f).w, delta);
    let factory = |info: &NodeInfo| {
        let me = info.id.unwrap();
        FoEngine {
            core: FoCore::new(me, delta),
            info: info.clone(),
            query: (me == req).then(|| (f.clone(), free.clone(), clock)),
            empty: BTreeMap::new(),
        }
    };
    let out = simnet::run(net, factory, cfg)?;
    let per_node: Vec<BTreeSet<Vec<NodeId>>> = if free.is_empty() {
        out.engines
            .iter()
            .map(|e| if e.core.root == Some(true) { BTreeSet::from([vec![]]) } else { BTreeSet::new() })
            .collect()
    } else {
        out.engines.iter().map(|e| e.core.tuples.clone()).collect()
    };
    let tuples = per_node.iter().flatten().cloned().collect();
    Ok(DistResult { relation: Relation::new(free.len(), tuples), per_node, metrics: out.metrics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::parse_formula;
    use crate::oracle::eval_fo;
    use crate::oracle::fixtures::{path, ring};
    use crate::simnet::Mode;

    fn global(g: crate::oracle::Graph) -> Network {
        Network::new(g, Mode::Global, 1).unwrap()
    }

    #[test]
    fn clock_values() {
        assert_eq!(clock_value(3, 2), 12);
        assert_eq!(clock_value(1, 1), 2);
        assert_eq!(clock_value(5, 3), 30);
    }

    #[test]
    fn subquery_clocks_count_remote_deciders() {
        let f = prenex(&parse_formula("exists z. T(3,z)").unwrap());
        assert_eq!(subquery_clock(&f, 2), clock_value(2, 2));
        let f = prenex(&parse_formula("exists z. G(3,z)").unwrap());
        assert_eq!(subquery_clock(&f, 2), clock_value(1, 2));
        let f = prenex(&parse_formula("exists z. exists u. (T(4,z) & T(4,u) & G(z,u))").unwrap());
        assert_eq!(subquery_clock(&f, 1), clock_value(3, 1));
    }

    #[test]
    fn boolean_witness() {
        let net = global(ring(5));
        let f = parse_formula("exists x. exists y. G(x,y)").unwrap();
        let r = run_qe_fo(&net, &f, 3, RunConfig::default()).unwrap();
        assert!(r.relation.truth());
    }

    #[test]
    fn open_query_on_path() {
        let net = global(path(3));
        let f = parse_formula("exists y. G(x,y)").unwrap();
        let r = run_qe_fo(&net, &f, 1, RunConfig::default()).unwrap();
        for a in 1..=3 {
            assert_eq!(r.per_node[a as usize - 1], BTreeSet::from([vec![a]]));
        }
    }

    #[test]
    fn distributed_answer_matches_oracle() {
        let g = path(3);
        let f = parse_formula("forall y. (!G(x,y) | exists z. (G(y,z) & z != x))").unwrap();
        let r = run_qe_fo(&global(g.clone()), &f, 1, RunConfig::default()).unwrap();
        assert_eq!(r.relation, eval_fo(&g, &f).unwrap());
        assert_eq!(r.per_node[0], BTreeSet::from([vec![1]]));
        assert_eq!(r.per_node[2], BTreeSet::from([vec![3]]));
        for (i, ts) in r.per_node.iter().enumerate() {
            assert!(ts.iter().all(|t| t[0] == i as NodeId + 1));
        }
    }

    #[test]
    fn w2_on_ring6_within_clock() {
        let net = global(ring(6));
        let f = parse_formula("exists y. G(x,y)").unwrap();
        let r = run_qe_fo(&net, &f, 2, RunConfig::default()).unwrap();
        assert_eq!(r.relation.len(), 6);
        assert!(r.metrics.dist_time <= 12, "{}", r.metrics.dist_time);
    }

    #[test]
    fn rejections() {
        let net = global(path(3));
        let f = crate::logic::relativize(&parse_formula("exists y. G(x,y)").unwrap(), "x", 1).unwrap();
        assert!(matches!(run_qe_fo(&net, &f, 1, RunConfig::default()), Err(FoError::Relativized)));
        let f = parse_formula("Foo(x)").unwrap();
        assert!(matches!(run_qe_fo(&net, &f, 1, RunConfig::default()), Err(FoError::Oracle(_))));
        let f = parse_formula("G(x,y)").unwrap();
        assert!(matches!(run_qe_fo(&net, &f, 7, RunConfig::default()), Err(FoError::BadRequester(7))));
        let anon = Network::new(path(3), Mode::Anonymous, 0).unwrap();
        assert!(matches!(run_qe_fo(&anon, &f, 1, RunConfig::default()), Err(FoError::NeedsIds)));
    }

    #[test]
    fn duplicate_delivery_is_idempotent() {
        let me = 2;
        let know = |_: &Formula| None;
        let q = prenex(&parse_formula("exists x. P(x)").unwrap());
        let msg = FoMsg::Query { key: q.canonical_key(), formula: q, hops: 1 };
        let mut core = FoCore::new(me, 2);
        core.receive(1, 1, msg.clone(), &know);
        let before = (core.out.len(), core.records.len(), core.answers.len());
        core.receive(1, 1, msg, &know);
        assert_eq!(before, (core.out.len(), core.records.len(), core.answers.len()));
    }
}
