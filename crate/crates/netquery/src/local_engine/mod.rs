//! FO_loc / FP_loc evaluation without global ids. Every node rebuilds its
//! neighbourhood from port traces and names other nodes by the walks that
//! reach them, so the engine runs in all three labelling modes.
//!
//! Walks are keyed by their collector (id, label, or a random per-run
//! nonce when the network is anonymous). With a single shared tracelist,
//! walks of different collectors that meet at one node become
//! indistinguishable and the quotient glues distinct nodes together;
//! [`Keying::Shared`] keeps that behaviour for comparison.

mod collect;
mod eval;
mod topology;

pub use collect::{CollectMsg, Collector, Key, LABEL_BITS, NONCE_BITS};
pub use eval::LocalQuery;
pub use topology::{
    check_locally_consistent, follow, matches_neighborhood, reduce, reverse, translate_name, Entry, LocalNode,
    LocalTopology, OutOfFrame, Port, Trace,
};

use crate::logic::{FixpointQuery, Formula, LogicError, NodeId, Term};
use crate::simnet::{self, BitModel, Ctx, Engine, Incoming, Metrics, Mode, Network, NodeInfo, Payload, RunConfig, Size};
use eval::{Capabilities, Eval};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;
use std::rc::Rc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LocalError {
    #[error("not a local query: {0}")]
    NotLocal(String),
    #[error("order comparisons need node names")]
    NoOrder,
    #[error("constants need globally unique ids")]
    Constant,
    #[error("unsupported atom {0}")]
    Unsupported(String),
    #[error("labels must be {needed}-locally consistent for a {needed}-hop collection")]
    Labels { needed: u32 },
    #[error("requesting node {0} is not in the network")]
    BadRequester(NodeId),
    #[error(transparent)]
    Logic(#[from] LogicError),
    #[error(transparent)]
    Sim(#[from] simnet::SimError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Keying {
    /// One tracelist per collector.
    #[default]
    PerCollector,
    /// One tracelist per node (diagnostic; unsound when collections overlap).
    Shared,
}

#[derive(Clone, Copy, Debug)]
pub struct LocalConfig {
    pub run: RunConfig,
    pub keying: Keying,
    /// Seeds the anonymous collectors' nonces.
    pub nonce_seed: u64,
}

impl Default for LocalConfig {
    fn default() -> Self {
        LocalConfig { run: RunConfig::default(), keying: Keying::default(), nonce_seed: 0x5eed }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LocMsg {
    Query { text: Rc<str>, hops: u32 },
    Collect(CollectMsg),
    /// Ask the node at the end of `route` for its committed tuples.
    Read { route: Trace, at: u32 },
    Answer { route: Trace, at: u32, tuples: Vec<Vec<Trace>> },
    Inform { iteration: u32, hops: u32 },
}

impl Payload for LocMsg {
    fn size(&self, bm: &BitModel) -> Size {
        match self {
            LocMsg::Query { text, .. } => Size::tag().raw(BitModel::formula(text.len())).ids(bm, 1),
            LocMsg::Collect(m) => m.size(bm),
            LocMsg::Read { route, .. } => Size::tag().ports(bm, route.len()).ids(bm, 1),
            LocMsg::Answer { route, tuples, .. } => {
                let ports: usize = tuples.iter().flatten().map(Vec::len).sum();
                // one separator bit per component
                let seps = tuples.iter().map(Vec::len).sum::<usize>() as u64;
                Size::tag().ports(bm, route.len() + ports).raw(seps).ids(bm, 1)
            }
            LocMsg::Inform { .. } => Size::tag().ids(bm, 2),
        }
    }
}

fn capabilities(mode: &Mode) -> Capabilities {
    Capabilities { constants: matches!(mode, Mode::Global), order: !matches!(mode, Mode::Anonymous) }
}

fn check_labels(net: &Network, hops: u32) -> Result<(), LocalError> {
    match net.mode() {
        Mode::LocallyConsistent { labels, .. } if !check_locally_consistent(net.graph(), labels, hops) => {
            Err(LocalError::Labels { needed: hops })
        }
        _ => Ok(()),
    }
}

/// Collector keys for every node, by node index.
fn keys(net: &Network, cfg: &LocalConfig) -> Vec<Key> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.nonce_seed);
    net.graph()
        .nodes()
        .map(|a| match (cfg.keying, net.mode()) {
            (Keying::Shared, _) => Key::Unkeyed,
            (_, Mode::Global) => Key::Id(a),
            (_, Mode::LocallyConsistent { .. }) => Key::Label(net.label(a).unwrap()),
            (_, Mode::Anonymous) => Key::Nonce(rng.gen()),
        })
        .collect()
}

fn collector(info: &NodeInfo, key: Key) -> Collector {
    Collector::new(key, info.name(), info.unary.iter().cloned().collect(), info.degree)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Stage {
    Idle,
    Flooding { sigma_at: u64 },
    Collecting { ready_at: Option<u64> },
    Iterating { next_at: u64 },
    Done,
}

pub struct LocEngine {
    q: Rc<LocalQuery>,
    text: Rc<str>,
    fixpoint: bool,
    requester: bool,
    delta: u32,
    hops: u32,
    stage: Stage,
    collector: Collector,
    pub topology: Option<LocalTopology>,
    /// Result tuples held here, components named in this node's frame.
    pub table: BTreeSet<Vec<Trace>>,
    /// `table` after each commit.
    pub history: Vec<BTreeSet<Vec<Trace>>>,
    pub iteration: u32,
    /// Iterations in which this node evaluated the body.
    pub evaluated: Vec<u32>,
    buffer: BTreeSet<Vec<Trace>>,
    view: BTreeSet<Vec<usize>>,
    awaiting: usize,
    eval_at: Option<u64>,
    informed: bool,
    inform_best: Option<u32>,
}

impl LocEngine {
    fn emit(ctx: &mut Ctx<LocMsg>, out: Vec<(usize, CollectMsg)>) {
        for (p, m) in out {
            ctx.send(p, LocMsg::Collect(m));
        }
    }

    fn begin_collection(&mut self, now: u64, ctx: &mut Ctx<LocMsg>) {
        let ready_at = self.fixpoint.then_some(now + 2 * self.hops as u64);
        self.stage = Stage::Collecting { ready_at };
        let out = self.collector.begin(self.hops);
        Self::emit(ctx, out);
    }

    fn names(top: &LocalTopology, t: &[usize]) -> Vec<Trace> {
        t.iter().map(|&i| top.nodes[i].rep.clone()).collect()
    }

    fn evaluate(&mut self, ctx: &mut Ctx<LocMsg>) -> BTreeSet<Vec<Trace>> {
        let top = self.topology.as_ref().unwrap();
        let fix = self.q.fix.as_deref().map(|n| (n, &self.view));
        let mut ev = Eval { top, fix, steps: 0 };
        let found = ev.satisfying(&self.q);
        ctx.step(ev.steps);
        found.iter().map(|t| Self::names(top, t)).collect()
    }

    fn begin_iteration(&mut self, now: u64, ctx: &mut Ctx<LocMsg>) {
        let k = self.q.k;
        let fresh = std::mem::take(&mut self.buffer);
        let go = self.iteration == 0 || !fresh.is_empty() || self.informed;
        if self.iteration > 0 {
            self.table.extend(fresh);
            self.history.push(self.table.clone());
        }
        self.iteration += 1;
        self.informed = false;
        self.inform_best = None;
        self.stage = Stage::Iterating { next_at: now + 3 * k as u64 };
        if !go {
            return;
        }
        self.evaluated.push(self.iteration);
        let top = self.topology.as_ref().unwrap();
        self.view = self
            .table
            .iter()
            .map(|t| t.iter().map(|c| top.resolve(c).expect("own names resolve")).collect())
            .collect();
        self.awaiting = 0;
        for i in top.within(k).filter(|&i| i != top.center()) {
            let route = top.nodes[i].rep.clone();
            ctx.send(route[0] as usize, LocMsg::Read { route, at: 1 });
            self.awaiting += 1;
        }
        self.eval_at = Some(now + 2 * k as u64);
    }

    fn end_evaluation(&mut self, ctx: &mut Ctx<LocMsg>) {
        debug_assert_eq!(self.awaiting, 0, "answers outstanding at evaluation time");
        self.eval_at = None;
        let found = self.evaluate(ctx);
        self.buffer = found.difference(&self.table).cloned().collect();
        let k = self.q.k;
        if !self.buffer.is_empty() && k >= 1 {
            self.inform_best = Some(k - 1);
            ctx.broadcast(LocMsg::Inform { iteration: self.iteration, hops: k - 1 });
        }
    }

    fn handle(&mut self, now: u64, m: Incoming<LocMsg>, ctx: &mut Ctx<LocMsg>, walks: &mut Vec<(usize, CollectMsg)>) {
        match m.msg {
            LocMsg::Query { text, hops } => {
                if self.stage != Stage::Idle {
                    return;
                }
                if hops > 0 {
                    ctx.broadcast_except(m.port, LocMsg::Query { text, hops: hops - 1 });
                }
                if self.fixpoint {
                    self.stage = Stage::Flooding { sigma_at: now + hops as u64 };
                } else {
                    self.begin_collection(now, ctx);
                }
            }
            LocMsg::Collect(c) => walks.push((m.port, c)),
            LocMsg::Read { route, at } => {
                if 2 * at as usize == route.len() {
                    let back = reverse(&route);
                    let tuples = self.table.iter().cloned().collect();
                    ctx.send(back[0] as usize, LocMsg::Answer { route: back, at: 1, tuples });
                } else {
                    let p = route[2 * at as usize] as usize;
                    ctx.send(p, LocMsg::Read { route, at: at + 1 });
                }
            }
            LocMsg::Answer { route, at, tuples } => {
                if 2 * at as usize != route.len() {
                    let p = route[2 * at as usize] as usize;
                    ctx.send(p, LocMsg::Answer { route, at: at + 1, tuples });
                    return;
                }
                let there = reverse(&route);
                let top = self.topology.as_ref().unwrap();
                for t in tuples {
                    let mine: Option<Vec<usize>> = t
                        .iter()
                        .map(|c| {
                            let mut w = there.clone();
                            w.extend_from_slice(c);
                            top.resolve(&w)
                        })
                        .collect();
                    self.view.insert(mine.expect("names within 2k resolve"));
                }
                ctx.step(1);
                self.awaiting -= 1;
            }
            LocMsg::Inform { iteration, hops } => {
                if iteration != self.iteration {
                    return;
                }
                self.informed = true;
                if hops >= 1 && self.inform_best.is_none_or(|b| hops - 1 > b) {
                    self.inform_best = Some(hops - 1);
                    ctx.broadcast_except(m.port, LocMsg::Inform { iteration, hops: hops - 1 });
                }
            }
        }
    }
}

impl Engine for LocEngine {
    type Msg = LocMsg;

    fn start(&mut self, ctx: &mut Ctx<LocMsg>) {
        if !self.requester {
            return;
        }
        if self.delta > 0 {
            ctx.broadcast(LocMsg::Query { text: self.text.clone(), hops: self.delta - 1 });
        }
        if self.fixpoint {
            self.stage = Stage::Flooding { sigma_at: self.delta as u64 };
        } else {
            self.begin_collection(0, ctx);
        }
    }

    fn on_round(&mut self, ctx: &mut Ctx<LocMsg>, inbox: Vec<Incoming<LocMsg>>) {
        let now = ctx.round;
        let mut walks = Vec::new();
        for m in inbox {
            self.handle(now, m, ctx, &mut walks);
        }
        let out = self.collector.handle(walks);
        Self::emit(ctx, out);
        if let Some(entries) = &self.collector.result {
            if self.topology.is_none() {
                // keep the rim: constants adjacent to the k-ball live there
                self.topology = Some(LocalTopology::build(entries, self.hops));
                ctx.step(entries.len() as u64);
            }
        }
        match self.stage {
            Stage::Flooding { sigma_at } if now >= sigma_at => self.begin_collection(now, ctx),
            Stage::Collecting { ready_at: None } if self.topology.is_some() => {
                self.table = self.evaluate(ctx);
                self.stage = Stage::Done;
            }
            Stage::Collecting { ready_at: Some(t) } if now >= t => {
                assert!(self.topology.is_some(), "collection overran its clock");
                self.begin_iteration(now, ctx);
            }
            Stage::Iterating { next_at } => {
                if self.eval_at.is_some_and(|t| now >= t) {
                    self.end_evaluation(ctx);
                }
                if now >= next_at {
                    self.begin_iteration(now, ctx);
                }
            }
            _ => {}
        }
    }

    fn quiescent(&self) -> bool {
        match self.stage {
            Stage::Idle | Stage::Done => true,
            Stage::Flooding { .. } | Stage::Collecting { .. } => false,
            Stage::Iterating { .. } => {
                self.buffer.is_empty() && !self.informed && self.eval_at.is_none() && self.awaiting == 0
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct LocalRun {
    pub query: LocalQuery,
    /// Tuples held by each node (by index), named in the holder's frame.
    pub per_node: Vec<BTreeSet<Vec<Trace>>>,
    /// Per node: the table after each commit (fixpoint runs).
    pub history: Vec<Vec<BTreeSet<Vec<Trace>>>>,
    /// Last iteration in which any node evaluated.
    pub iterations: u32,
    pub metrics: Metrics,
}

fn ground(net: &Network, holder: NodeId, t: &[Trace]) -> Vec<NodeId> {
    t.iter().map(|c| follow(net, holder, c).expect("local name leads nowhere")).collect()
}

impl LocalRun {
    /// The answer as a relation over real nodes (for checking only).
    pub fn resolve(&self, net: &Network) -> BTreeSet<Vec<NodeId>> {
        let mut out = BTreeSet::new();
        for (i, ts) in self.per_node.iter().enumerate() {
            out.extend(ts.iter().map(|t| ground(net, i as NodeId + 1, t)));
        }
        out
    }

    /// ∅ followed by the union of committed tuples after each iteration.
    pub fn stages(&self, net: &Network) -> Vec<BTreeSet<Vec<NodeId>>> {
        let len = self.history.iter().map(Vec::len).max().unwrap_or(0);
        let mut out = vec![BTreeSet::new()];
        for i in 0..len {
            let mut s = BTreeSet::new();
            for (a, h) in self.history.iter().enumerate() {
                if let Some(t) = h.get(i).or(h.last()) {
                    s.extend(t.iter().map(|t| ground(net, a as NodeId + 1, t)));
                }
            }
            out.push(s);
        }
        out
    }
}

/// The centre of a local formula: the centre of its ranges, else its first
/// free variable.
pub fn infer_center(f: &Formula) -> Option<String> {
    let mut c = None;
    f.visit(&mut |g| {
        let t = match g {
            Formula::Quant { range: Some(r), .. } => Some(&r.center),
            Formula::InNbhd { center, .. } => Some(center),
            _ => None,
        };
        if let (None, Some(Term::Var(v))) = (&c, t) {
            c = Some(v.clone());
        }
    });
    c.or_else(|| f.free_vars().into_iter().next())
}

fn execute(net: &Network, q: LocalQuery, fixpoint: bool, req: NodeId, cfg: LocalConfig) -> Result<LocalRun, LocalError> {
    if !net.graph().contains(req) {
        return Err(LocalError::BadRequester(req));
    }
    let hops = if fixpoint { 2 * q.k } else { q.k + 1 };
    check_labels(net, hops)?;
    let keys = keys(net, &cfg);
    let delta = net.graph().diameter();
    let text: Rc<str> = Rc::from(q.formula.to_string());
    let q = Rc::new(q);
    let factory = |info: &NodeInfo| LocEngine {
        q: q.clone(),
        text: text.clone(),
        fixpoint,
        requester: info.index + 1 == req as usize,
        delta,
        hops,
        stage: Stage::Idle,
        collector: collector(info, keys[info.index].clone()),
        topology: None,
        table: BTreeSet::new(),
        history: Vec::new(),
        iteration: 0,
        evaluated: Vec::new(),
        buffer: BTreeSet::new(),
        view: BTreeSet::new(),
        awaiting: 0,
        eval_at: None,
        informed: false,
        inform_best: None,
    };
    let out = simnet::run(net, factory, cfg.run)?;
    let iterations = out.engines.iter().flat_map(|e| e.evaluated.last().copied()).max().unwrap_or(0);
    Ok(LocalRun {
        query: (*q).clone(),
        per_node: out.engines.iter().map(|e| e.table.clone()).collect(),
        history: out.engines.iter().map(|e| e.history.clone()).collect(),
        iterations,
        metrics: out.metrics,
    })
}

/// Check `f` for locality in this network's mode. The centre comes first,
/// then the other free variables in order of appearance.
pub fn local_query(net: &Network, f: &Formula) -> Result<LocalQuery, LocalError> {
    let center = infer_center(f).ok_or_else(|| LocalError::NotLocal("no free variable to centre on".into()))?;
    let mut vars = vec![center.clone()];
    vars.extend(f.free_vars().into_iter().filter(|v| *v != center));
    LocalQuery::new(f.clone(), vars, None, None, capabilities(net.mode()))
}

/// Distributed FO_loc evaluation: each node collects k+1 hops of traces
/// and evaluates in place.
pub fn run_qe_fo_loc(net: &Network, f: &Formula, req: NodeId, cfg: LocalConfig) -> Result<LocalRun, LocalError> {
    let q = local_query(net, f)?;
    execute(net, q, false, req, cfg)
}

/// Distributed FP_loc evaluation. `q` must carry its radius.
pub fn run_qe_fp_loc(net: &Network, q: &FixpointQuery, req: NodeId, cfg: LocalConfig) -> Result<LocalRun, LocalError> {
    let k = q.radius.ok_or_else(|| LocalError::NotLocal("fixpoint query has no radius".into()))?;
    let lq = LocalQuery::new(q.body.clone(), q.vars.clone(), Some(k), Some(q.name.clone()), capabilities(net.mode()))?;
    execute(net, lq, true, req, cfg)
}

struct CollectOnly {
    collector: Collector,
    hops: u32,
}

impl Engine for CollectOnly {
    type Msg = LocMsg;

    fn start(&mut self, ctx: &mut Ctx<LocMsg>) {
        let out = self.collector.begin(self.hops);
        LocEngine::emit(ctx, out);
    }

    fn on_round(&mut self, ctx: &mut Ctx<LocMsg>, inbox: Vec<Incoming<LocMsg>>) {
        let walks = inbox
            .into_iter()
            .filter_map(|m| match m.msg {
                LocMsg::Collect(c) => Some((m.port, c)),
                _ => None,
            })
            .collect();
        let out = self.collector.handle(walks);
        LocEngine::emit(ctx, out);
    }

    fn quiescent(&self) -> bool {
        self.collector.result.is_some()
    }
}

/// Every node collects `hops` hops at once; returns each node's view
/// truncated to `radius`, with the run's metrics.
pub fn collect_all(
    net: &Network,
    hops: u32,
    radius: u32,
    cfg: LocalConfig,
) -> Result<(Vec<LocalTopology>, Metrics), LocalError> {
    check_labels(net, hops)?;
    let keys = keys(net, &cfg);
    let out = simnet::run(net, |info| CollectOnly { collector: collector(info, keys[info.index].clone()), hops }, cfg.run)?;
    let tops = out
        .engines
        .iter()
        .map(|e| LocalTopology::build(e.collector.result.as_ref().expect("collection finished"), radius))
        .collect();
    Ok((tops, out.metrics))
}

/// Whether every node's (k+1)-hop collection reconstructs its
/// k-neighbourhood exactly.
pub fn verify_reconstruction(net: &Network, k: u32, cfg: LocalConfig) -> Result<bool, LocalError> {
    let (tops, _) = collect_all(net, k + 1, k, cfg)?;
    Ok(net.graph().nodes().zip(&tops).all(|(a, t)| matches_neighborhood(net, a, t, k)))
}
