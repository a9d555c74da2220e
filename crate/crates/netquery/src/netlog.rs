//! Netlog: localized rules run at every node, with `^` heads pushed to a
//! neighbour. Each round a node fires its rules once on the facts it holds
//! (last round's local derivations plus what it just received) and the EDB.
//! The run ends when no node's facts change between consecutive rounds.

use crate::logic::rules::{check_safe, eval_body, ground_head, Facts, Program, RelLit, Rule};
use crate::logic::NodeId;
use crate::oracle::Instance;
use crate::simnet::{self, BitModel, Ctx, Engine, Incoming, Metrics, Network, NodeInfo, Payload, RunConfig, Size, Verdict};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetlogError {
    #[error("rule {rule}: restriction ({restriction}) violated: {msg}")]
    Violation { rule: usize, restriction: &'static str, msg: String },
    #[error("relation {0} is held at different argument positions")]
    HoldingPosition(String),
    #[error("rule {rule}: {msg}")]
    Unsafe { rule: usize, msg: String },
    #[error("unknown extensional relation {0}")]
    UnknownEdb(String),
    #[error("the interpreter needs globally unique ids")]
    NeedsIds,
    #[error("no convergence within {0} rounds")]
    NoConvergence(u64),
    #[error(transparent)]
    Sim(simnet::SimError),
}

/// Check the three localization restrictions and holding-position
/// consistency. Returns the holding position of every marked relation.
pub fn check_localization(p: &Program) -> Result<BTreeMap<String, usize>, NetlogError> {
    let idb = p.intentional();
    let mut pos: BTreeMap<String, usize> = BTreeMap::new();
    for (i, r) in p.rules.iter().enumerate() {
        let rule = i + 1;
        let v = |restriction, msg: String| NetlogError::Violation { rule, restriction, msg };
        let body_hv = body_holder(r, &idb).map_err(|m| v("i", m))?;
        let Some(head_hv) = r.head.holding_var() else {
            return Err(v("i", format!("head {} has no holding variable", r.head.pred)));
        };
        if !r.push && head_hv != body_hv {
            return Err(v("ii", format!("head held at {head_hv} but body at {body_hv}; mark the head with ^")));
        }
        if r.push {
            let linked = r.body_rels().any(|l| {
                !l.negated
                    && l.pred == "G"
                    && l.holding_var() == Some(body_hv)
                    && l.args.iter().any(|t| t.as_var() == Some(head_hv))
                    && head_hv != body_hv
            });
            if !linked {
                return Err(v("iii", format!("pushed head needs G(@{body_hv},{head_hv}) in the body")));
            }
        }
        for l in std::iter::once(&r.head).chain(r.body_rels()) {
            if let (Some(h), true) = (l.hold, l.pred != "G") {
                if *pos.entry(l.pred.clone()).or_insert(h) != h {
                    return Err(NetlogError::HoldingPosition(l.pred.clone()));
                }
            }
        }
    }
    Ok(pos)
}

/// The shared holding variable of the body's marked literals.
fn body_holder<'a>(r: &'a Rule, idb: &BTreeSet<String>) -> Result<&'a str, String> {
    let mut hv: Option<&str> = None;
    for l in r.body_rels() {
        match (l.hold, l.holding_var()) {
            (None, _) if idb.contains(&l.pred) || l.pred == "G" => {
                return Err(format!("literal {} has no holding marker", l.pred));
            }
            (None, _) => {}
            (Some(_), None) => return Err(format!("literal {} is held at a constant", l.pred)),
            (Some(_), Some(x)) => match hv {
                Some(h) if h != x => return Err(format!("body literals held at both {h} and {x}")),
                _ => hv = Some(x),
            },
        }
    }
    hv.ok_or_else(|| "body has no holding variable".to_string())
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Fact {
    pub pred: String,
    pub args: Vec<NodeId>,
}

impl Payload for Fact {
    fn size(&self, bm: &BitModel) -> Size {
        Size::tag().ids(bm, self.args.len())
    }
}

struct Compiled {
    rule: Rule,
    holder: String,
    order: Vec<usize>,
}

struct Local<'a> {
    me: NodeId,
    neighbors: &'a [NodeId],
    store: &'a Instance,
    edb: &'a BTreeMap<String, BTreeSet<Vec<NodeId>>>,
}

impl Facts for Local<'_> {
    fn scan(&self, lit: &RelLit, f: &mut dyn FnMut(&[NodeId])) {
        if lit.pred == "G" {
            for &u in self.neighbors {
                if lit.hold == Some(1) {
                    f(&[u, self.me]);
                } else {
                    f(&[self.me, u]);
                }
            }
        } else if let Some(r) = self.store.get(&lit.pred) {
            r.iter().for_each(|t| f(t));
        } else if let Some(r) = self.edb.get(&lit.pred) {
            for t in r {
                if lit.hold.is_none_or(|p| t.get(p) == Some(&self.me)) {
                    f(t);
                }
            }
        }
    }

    fn contains(&self, lit: &RelLit, args: &[NodeId]) -> bool {
        if lit.pred == "G" {
            let other = if lit.hold == Some(1) { args[0] } else { args[1] };
            return self.neighbors.contains(&other);
        }
        if let Some(r) = self.store.get(&lit.pred) {
            return r.contains(args);
        }
        self.edb.get(&lit.pred).is_some_and(|r| r.contains(args))
    }
}

pub struct NetlogEngine<'p> {
    me: NodeId,
    neighbors: Vec<NodeId>,
    rules: &'p [Compiled],
    edb: &'p BTreeMap<String, BTreeSet<Vec<NodeId>>>,
    /// Facts held this round.
    pub store: Instance,
    pending: Instance,
    changed: bool,
    /// Round in which each fact was first held here.
    pub first_seen: BTreeMap<(String, Vec<NodeId>), u64>,
}

impl NetlogEngine<'_> {
    fn fire(&mut self, ctx: &mut Ctx<Fact>) {
        let mut next = Instance::new();
        let mut pushes = BTreeSet::new();
        let facts = Local { me: self.me, neighbors: &self.neighbors, store: &self.store, edb: self.edb };
        for c in self.rules {
            let mut envs = Vec::new();
            eval_body(&c.rule.body, &c.order, vec![(c.holder.clone(), self.me)], &facts, &mut envs);
            ctx.step(1 + envs.len() as u64);
            for env in envs {
                let t = ground_head(&c.rule.head, &env).expect("safe rule");
                if c.rule.push {
                    let to = t[c.rule.head.hold.unwrap()];
                    pushes.insert((to, Fact { pred: c.rule.head.pred.clone(), args: t }));
                } else {
                    next.entry(c.rule.head.pred.clone()).or_default().insert(t);
                }
            }
        }
        for (to, f) in pushes {
            let port = self.neighbors.iter().position(|&u| u == to).expect("pushed to a neighbour") + 1;
            ctx.send(port, f);
        }
        self.pending = next;
    }

    fn install(&mut self, store: Instance, round: u64) {
        let store: Instance = store.into_iter().filter(|(_, s)| !s.is_empty()).collect();
        self.changed = store != self.store;
        for (p, ts) in &store {
            for t in ts {
                self.first_seen.entry((p.clone(), t.clone())).or_insert(round);
            }
        }
        self.store = store;
    }
}

impl Engine for NetlogEngine<'_> {
    type Msg = Fact;

    fn start(&mut self, ctx: &mut Ctx<Fact>) {
        let start = Instance::from([("start".to_string(), BTreeSet::from([vec![self.me]]))]);
        self.install(start, 0);
        self.changed = true;
        self.fire(ctx);
    }

    fn on_round(&mut self, ctx: &mut Ctx<Fact>, inbox: Vec<Incoming<Fact>>) {
        let mut store = std::mem::take(&mut self.pending);
        for m in inbox {
            store.entry(m.msg.pred).or_default().insert(m.msg.args);
        }
        self.install(store, ctx.round);
        self.fire(ctx);
    }

    fn quiescent(&self) -> bool {
        !self.changed
    }
}

#[derive(Clone, Debug)]
pub struct NetlogRun {
    /// Final facts per node.
    pub stores: Vec<Instance>,
    pub first_seen: Vec<BTreeMap<(String, Vec<NodeId>), u64>>,
    pub metrics: Metrics,
}

impl NetlogRun {
    /// Union over nodes of a relation's final facts.
    pub fn relation(&self, pred: &str) -> BTreeSet<Vec<NodeId>> {
        self.stores.iter().filter_map(|s| s.get(pred)).flatten().cloned().collect()
    }

    /// Facts of `pred` held somewhere at `round` that were present since
    /// their first appearance (true for relations with a copy rule).
    pub fn relation_by(&self, pred: &str, round: u64) -> BTreeSet<Vec<NodeId>> {
        self.first_seen
            .iter()
            .flat_map(|m| m.iter())
            .filter(|((p, _), &r)| p == pred && r <= round)
            .map(|((_, t), _)| t.clone())
            .collect()
    }
}

/// Run a Netlog program. `globals` are extra extensional relations (such
/// as query parameters) visible to every node.
pub fn run_netlog(net: &Network, p: &Program, cfg: RunConfig) -> Result<NetlogRun, NetlogError> {
    if !matches!(net.mode(), simnet::Mode::Global) {
        return Err(NetlogError::NeedsIds);
    }
    check_localization(p)?;
    let idb = p.intentional();
    let mut edb = BTreeMap::new();
    for e in p.extensional() {
        if e == "G" || e == "start" {
            continue;
        }
        let r = net.graph().relation(&e).ok_or_else(|| NetlogError::UnknownEdb(e.clone()))?;
        edb.insert(e, r.clone());
    }
    let mut compiled = Vec::new();
    for (i, r) in p.rules.iter().enumerate() {
        let holder = body_holder(r, &idb).unwrap().to_string();
        let order = check_safe(r, std::slice::from_ref(&holder)).map_err(|msg| NetlogError::Unsafe { rule: i + 1, msg })?;
        compiled.push(Compiled { rule: r.clone(), holder, order });
    }
    let factory = |info: &NodeInfo| {
        let me = info.id.unwrap();
        NetlogEngine {
            me,
            // by port, so a neighbour's index is its port - 1
            neighbors: info.neighbor_names.clone().unwrap(),
            rules: &compiled,
            edb: &edb,
            store: Instance::new(),
            pending: Instance::new(),
            changed: true,
            first_seen: BTreeMap::new(),
        }
    };
    let observer = |round: u64, es: &[NetlogEngine]| {
        if round > 0 && es.iter().all(|e| !e.changed) {
            Verdict::Stop
        } else {
            Verdict::Continue
        }
    };
    match simnet::run_observed(net, factory, cfg, observer) {
        Ok(out) => Ok(NetlogRun {
            stores: out.engines.iter().map(|e| e.store.clone()).collect(),
            first_seen: out.engines.into_iter().map(|e| e.first_seen).collect(),
            metrics: out.metrics,
        }),
        Err(simnet::SimError::RoundCap { cap, .. }) => Err(NetlogError::NoConvergence(cap)),
        Err(e) => Err(NetlogError::Sim(e)),
    }
}
