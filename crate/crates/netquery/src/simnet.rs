//! Synchronous round-based network simulator with port numbering, three
//! labelling modes and the four cost measures.
//!
//! Round 0 is the engines' start hook. Every later round delivers all
//! out-buffers and then steps every node. A run ends after the first round
//! in which nothing is left to send and every engine is quiescent; the
//! number of rounds executed is the distributed time.

use crate::logic::NodeId;
use crate::oracle::{Graph, GraphError};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("labels are not {k}-locally consistent: nodes {a} and {b} share label {label} near node {center}")]
    Inconsistent { k: u32, center: NodeId, a: NodeId, b: NodeId, label: NodeId },
    #[error("label map has {found} entries for {n} nodes")]
    LabelCount { n: usize, found: usize },
    #[error("round cap {cap} exceeded")]
    RoundCap { cap: u64, metrics: Box<Metrics> },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Mode {
    Global,
    /// Labels distinct inside every k-neighbourhood.
    LocallyConsistent { k: u32, labels: Vec<NodeId> },
    Anonymous,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Global => "global",
            Mode::LocallyConsistent { .. } => "lc",
            Mode::Anonymous => "anon",
        }
    }
}

/// What a node knows about itself before any communication.
#[derive(Clone, Debug)]
pub struct NodeInfo {
    /// Position in the simulator's node vector; engines must not treat it
    /// as an identifier unless `id` is set.
    pub index: usize,
    pub id: Option<NodeId>,
    pub label: Option<NodeId>,
    pub degree: usize,
    /// Neighbour ids (global mode) or labels (lc mode) by port - 1.
    pub neighbor_names: Option<Vec<NodeId>>,
    pub n: usize,
    pub diameter: u32,
    pub degree_bound: usize,
    /// Unary predicates true here.
    pub unary: BTreeSet<String>,
    /// Facts whose first argument is this node (named modes only).
    pub held: BTreeMap<String, BTreeSet<Vec<NodeId>>>,
}

impl NodeInfo {
    /// The node's name in the current mode: id, else label.
    pub fn name(&self) -> Option<NodeId> {
        self.id.or(self.label)
    }
}

#[derive(Clone, Debug)]
pub struct Network {
    graph: Graph,
    /// ports[a-1][j-1] is the neighbour behind port j of a.
    ports: Vec<Vec<NodeId>>,
    mode: Mode,
}

impl Network {
    pub fn new(graph: Graph, mode: Mode, port_seed: u64) -> Result<Network, SimError> {
        if let Mode::LocallyConsistent { k, labels } = &mode {
            check_labels(&graph, *k, labels)?;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(port_seed);
        let ports = graph
            .nodes()
            .map(|a| {
                let mut p = graph.neighbors(a).to_vec();
                p.shuffle(&mut rng);
                p
            })
            .collect();
        Ok(Network { graph, ports, mode })
    }

    pub fn load(text: &str, degree_bound: Option<usize>, mode: Mode, port_seed: u64) -> Result<Network, SimError> {
        Network::new(Graph::parse(text, degree_bound)?, mode, port_seed)
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn mode(&self) -> &Mode {
        &self.mode
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn neighbor(&self, a: NodeId, port: usize) -> NodeId {
        self.ports[a as usize - 1][port - 1]
    }

    pub fn port_to(&self, a: NodeId, b: NodeId) -> Option<usize> {
        self.ports[a as usize - 1].iter().position(|&x| x == b).map(|p| p + 1)
    }

    pub fn label(&self, a: NodeId) -> Option<NodeId> {
        match &self.mode {
            Mode::Global => Some(a),
            Mode::LocallyConsistent { labels, .. } => Some(labels[a as usize - 1]),
            Mode::Anonymous => None,
        }
    }

    pub fn info(&self, a: NodeId) -> NodeInfo {
        let g = &self.graph;
        let id = matches!(self.mode, Mode::Global).then_some(a);
        let label = match self.mode {
            Mode::LocallyConsistent { .. } => self.label(a),
            _ => None,
        };
        let neighbor_names = match self.mode {
            Mode::Anonymous => None,
            _ => Some(self.ports[a as usize - 1].iter().map(|&b| self.label(b).unwrap()).collect()),
        };
        let mut unary = BTreeSet::new();
        let mut held = BTreeMap::new();
        for (p, ts) in g.facts() {
            if ts.contains(&vec![a]) {
                unary.insert(p.clone());
            }
            if id.is_some() {
                let mine: BTreeSet<Vec<NodeId>> = ts.iter().filter(|t| t.first() == Some(&a)).cloned().collect();
                held.insert(p.clone(), mine);
            }
        }
        NodeInfo {
            index: a as usize - 1,
            id,
            label,
            degree: g.degree(a),
            neighbor_names,
            n: g.n(),
            diameter: g.diameter(),
            degree_bound: g.degree_bound(),
            unary,
            held,
        }
    }

    pub fn bit_model(&self) -> BitModel {
        BitModel::new(self.graph.n(), self.graph.degree_bound())
    }
}

fn check_labels(g: &Graph, k: u32, labels: &[NodeId]) -> Result<(), SimError> {
    if labels.len() != g.n() {
        return Err(SimError::LabelCount { n: g.n(), found: labels.len() });
    }
    for a in g.nodes() {
        let mut seen: BTreeMap<NodeId, NodeId> = BTreeMap::new();
        for b in g.nodes().filter(|&b| g.dist(a, b) <= k) {
            let l = labels[b as usize - 1];
            if let Some(&c) = seen.get(&l) {
                return Err(SimError::Inconsistent { k, center: a, a: c, b, label: l });
            }
            seen.insert(l, b);
        }
    }
    Ok(())
}

/// Canonical encoding widths.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BitModel {
    pub id_bits: u64,
    pub port_bits: u64,
}

pub fn ceil_log2(x: usize) -> u64 {
    if x <= 1 {
        0
    } else {
        (usize::BITS - (x - 1).leading_zeros()) as u64
    }
}

impl BitModel {
    pub fn new(n: usize, degree_bound: usize) -> BitModel {
        // a one-node network still needs one bit to write its id
        BitModel { id_bits: ceil_log2(n).max(1), port_bits: ceil_log2(degree_bound).max(1) }
    }

    pub const TAG: u64 = 8;

    pub fn formula(len: usize) -> u64 {
        8 * len as u64
    }
}

/// Encoded size of one message.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Size {
    pub bits: u64,
    /// Number of id-width fields counted in `bits`.
    pub id_fields: u64,
}

impl Size {
    pub fn tag() -> Size {
        Size { bits: BitModel::TAG, id_fields: 0 }
    }

    pub fn ids(self, bm: &BitModel, count: usize) -> Size {
        Size { bits: self.bits + bm.id_bits * count as u64, id_fields: self.id_fields + count as u64 }
    }

    pub fn ports(self, bm: &BitModel, count: usize) -> Size {
        Size { bits: self.bits + bm.port_bits * count as u64, ..self }
    }

    pub fn raw(self, bits: u64) -> Size {
        Size { bits: self.bits + bits, ..self }
    }

    pub fn sans_ids(&self, bm: &BitModel) -> u64 {
        self.bits - self.id_fields * bm.id_bits
    }
}

pub trait Payload: Clone + std::fmt::Debug {
    fn size(&self, bm: &BitModel) -> Size;
}

#[derive(Clone, Debug)]
pub struct Incoming<M> {
    /// Port of the receiving node the message arrived on.
    pub port: usize,
    pub msg: M,
}

pub struct Ctx<'a, M> {
    pub round: u64,
    pub info: &'a NodeInfo,
    out: Vec<(usize, M)>,
    steps: u64,
}

impl<M: Clone> Ctx<'_, M> {
    pub fn send(&mut self, port: usize, msg: M) {
        debug_assert!(port >= 1 && port <= self.info.degree);
        self.out.push((port, msg));
    }

    pub fn broadcast(&mut self, msg: M) {
        for p in 1..=self.info.degree {
            self.out.push((p, msg.clone()));
        }
    }

    pub fn broadcast_except(&mut self, port: usize, msg: M) {
        for p in (1..=self.info.degree).filter(|&p| p != port) {
            self.out.push((p, msg.clone()));
        }
    }

    /// Count elementary operations for the in-node time measure.
    pub fn step(&mut self, n: u64) {
        self.steps += n;
    }
}

pub trait Engine {
    type Msg: Payload;

    /// Round 0: initial computation (the requester emits its query).
    fn start(&mut self, ctx: &mut Ctx<Self::Msg>);

    fn on_round(&mut self, ctx: &mut Ctx<Self::Msg>, inbox: Vec<Incoming<Self::Msg>>);

    /// No pending clocks and no buffered work.
    fn quiescent(&self) -> bool;
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Metrics {
    pub dist_time: u64,
    /// Messages sent per node, indexed by node - 1. A broadcast counts once
    /// per port.
    pub msgs_per_node: Vec<u64>,
    pub max_msg_bits: u64,
    /// Id-width fields in the largest message.
    pub max_msg_id_fields: u64,
    /// Largest message size with id-width fields removed.
    pub max_msg_bits_sans_ids: u64,
    pub max_in_steps_per_round: u64,
}

impl Metrics {
    pub fn total_msgs(&self) -> u64 {
        self.msgs_per_node.iter().sum()
    }

    pub fn max_msgs_per_node(&self) -> u64 {
        self.msgs_per_node.iter().copied().max().unwrap_or(0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Csv,
}

/// The four measures in the usual column order, then messages per node.
pub fn metrics_report(m: &Metrics, format: ReportFormat) -> String {
    let mut rows: Vec<(String, String, u64)> = vec![
        ("IN-TIME/ROUND".into(), String::new(), m.max_in_steps_per_round),
        ("DIST-TIME".into(), String::new(), m.dist_time),
        ("MSG-SIZE".into(), String::new(), m.max_msg_bits),
        ("#MSG/NODE".into(), String::new(), m.max_msgs_per_node()),
    ];
    for (i, c) in m.msgs_per_node.iter().enumerate() {
        rows.push(("#MSG".into(), (i + 1).to_string(), *c));
    }
    let mut s = String::new();
    match format {
        ReportFormat::Csv => {
            s.push_str("measure,node,value\n");
            for (a, b, c) in rows {
                let _ = writeln!(s, "{a},{b},{c}");
            }
        }
        ReportFormat::Table => {
            let w = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max(7);
            let _ = writeln!(s, "{:<w$}  {:>4}  {:>10}", "measure", "node", "value");
            for (a, b, c) in rows {
                let _ = writeln!(s, "{a:<w$}  {b:>4}  {c:>10}");
            }
        }
    }
    s
}

#[derive(Clone, Copy, Debug)]
pub struct RunConfig {
    pub order_seed: u64,
    pub round_cap: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { order_seed: 0, round_cap: 100_000 }
    }
}

pub struct Outcome<E> {
    pub engines: Vec<E>,
    pub metrics: Metrics,
}

/// What an observer tells the simulator after a round.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Continue,
    Stop,
}

pub fn run<E: Engine>(
    net: &Network,
    factory: impl FnMut(&NodeInfo) -> E,
    cfg: RunConfig,
) -> Result<Outcome<E>, SimError> {
    run_observed(net, factory, cfg, |_, _| Verdict::Continue)
}

/// Like [`run`], with a global observer called after every round (round 0
/// included) that may end the run early.
pub fn run_observed<E: Engine>(
    net: &Network,
    mut factory: impl FnMut(&NodeInfo) -> E,
    cfg: RunConfig,
    mut observer: impl FnMut(u64, &[E]) -> Verdict,
) -> Result<Outcome<E>, SimError> {
    let n = net.n();
    let bm = net.bit_model();
    let infos: Vec<NodeInfo> = net.graph().nodes().map(|a| net.info(a)).collect();
    let mut engines: Vec<E> = infos.iter().map(&mut factory).collect();
    let mut metrics = Metrics { msgs_per_node: vec![0; n], ..Metrics::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.order_seed);
    let mut inboxes: Vec<Vec<Incoming<E::Msg>>> = (0..n).map(|_| Vec::new()).collect();
    let mut round = 0u64;
    loop {
        let mut pending = false;
        let mut outboxes = Vec::with_capacity(n);
        for (i, e) in engines.iter_mut().enumerate() {
            let mut ctx = Ctx { round, info: &infos[i], out: Vec::new(), steps: 0 };
            if round == 0 {
                e.start(&mut ctx);
            } else {
                let inbox = std::mem::take(&mut inboxes[i]);
                ctx.steps += inbox.len() as u64;
                e.on_round(&mut ctx, inbox);
            }
            metrics.max_in_steps_per_round = metrics.max_in_steps_per_round.max(ctx.steps);
            pending |= !ctx.out.is_empty();
            outboxes.push(ctx.out);
        }
        let verdict = observer(round, &engines);
        if round > 0 && (verdict == Verdict::Stop || (!pending && engines.iter().all(Engine::quiescent))) {
            metrics.dist_time = round;
            return Ok(Outcome { engines, metrics });
        }
        if round >= cfg.round_cap {
            metrics.dist_time = round;
            return Err(SimError::RoundCap { cap: cfg.round_cap, metrics: Box::new(metrics) });
        }
        // delivery event
        for (i, out) in outboxes.into_iter().enumerate() {
            let a = i as NodeId + 1;
            metrics.msgs_per_node[i] += out.len() as u64;
            for (port, msg) in out {
                let size = msg.size(&bm);
                if size.bits > metrics.max_msg_bits
                    || (size.bits == metrics.max_msg_bits && size.id_fields > metrics.max_msg_id_fields)
                {
                    metrics.max_msg_bits = size.bits;
                    metrics.max_msg_id_fields = size.id_fields;
                }
                metrics.max_msg_bits_sans_ids = metrics.max_msg_bits_sans_ids.max(size.sans_ids(&bm));
                let b = net.neighbor(a, port);
                let back = net.port_to(b, a).expect("ports are symmetric");
                inboxes[b as usize - 1].push(Incoming { port: back, msg });
            }
        }
        for inbox in &mut inboxes {
            inbox.shuffle(&mut rng);
        }
        round += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::fixtures::{path, ring, star};

    #[derive(Clone, Debug)]
    struct Ping;

    impl Payload for Ping {
        fn size(&self, _: &BitModel) -> Size {
            Size::tag()
        }
    }

    struct Silent;

    impl Engine for Silent {
        type Msg = Ping;
        fn start(&mut self, _: &mut Ctx<Ping>) {}
        fn on_round(&mut self, _: &mut Ctx<Ping>, _: Vec<Incoming<Ping>>) {}
        fn quiescent(&self) -> bool {
            true
        }
    }

    /// Floods once from the node at index 0.
    struct Flood {
        seen: bool,
        got: Vec<u64>,
    }

    impl Engine for Flood {
        type Msg = Ping;
        fn start(&mut self, ctx: &mut Ctx<Ping>) {
            if ctx.info.index == 0 {
                self.seen = true;
                ctx.broadcast(Ping);
            }
        }
        fn on_round(&mut self, ctx: &mut Ctx<Ping>, inbox: Vec<Incoming<Ping>>) {
            for m in inbox {
                self.got.push(ctx.round);
                if !self.seen {
                    self.seen = true;
                    ctx.broadcast_except(m.port, Ping);
                }
            }
        }
        fn quiescent(&self) -> bool {
            true
        }
    }

    fn flood() -> Flood {
        Flood { seen: false, got: Vec::new() }
    }

    #[test]
    fn silent_engine_takes_one_round() {
        let net = Network::new(path(3), Mode::Global, 0).unwrap();
        let out = run(&net, |_| Silent, RunConfig::default()).unwrap();
        assert_eq!(out.metrics.dist_time, 1);
        assert_eq!(out.metrics.total_msgs(), 0);
    }

    #[test]
    fn flood_on_path() {
        let net = Network::load("3 2\n1 2\n2 3\n", None, Mode::Global, 0).unwrap();
        assert_eq!(net.graph().diameter(), 2);
        let out = run(&net, |_| flood(), RunConfig::default()).unwrap();
        assert_eq!(out.metrics.dist_time, 2);
        for a in net.graph().nodes() {
            assert!(out.metrics.msgs_per_node[a as usize - 1] <= net.graph().degree(a) as u64);
        }
        // synchrony: node 3 hears in round 2, not earlier
        assert_eq!(out.engines[2].got, vec![2]);
    }

    #[test]
    fn ports_are_consistent_bijections() {
        for seed in 0..10 {
            let net = Network::new(ring(6), Mode::Anonymous, seed).unwrap();
            for a in net.graph().nodes() {
                let mut seen: Vec<NodeId> = (1..=net.graph().degree(a)).map(|p| net.neighbor(a, p)).collect();
                seen.sort();
                assert_eq!(seen, net.graph().neighbors(a));
                for p in 1..=net.graph().degree(a) {
                    let b = net.neighbor(a, p);
                    assert_eq!(net.neighbor(b, net.port_to(b, a).unwrap()), a);
                }
            }
        }
    }

    #[test]
    fn modes_hide_names() {
        let net = Network::new(ring(4), Mode::Anonymous, 3).unwrap();
        let info = net.info(2);
        assert_eq!((info.id, info.label, info.neighbor_names), (None, None, None));
        assert_eq!(info.degree, 2);
        let labels = crate::oracle::fixtures::local_labels(&ring(6), 1);
        let net = Network::new(ring(6), Mode::LocallyConsistent { k: 1, labels: labels.clone() }, 0).unwrap();
        assert_eq!(net.info(1).label, Some(labels[0]));
        assert!(net.info(1).id.is_none());
        let bad = Network::new(ring(6), Mode::LocallyConsistent { k: 1, labels: vec![1, 2, 1, 2, 1, 2] }, 0);
        assert!(matches!(bad, Err(SimError::Inconsistent { .. })));
    }

    #[test]
    fn degree_bound_on_load() {
        assert!(Network::load("4 3\n1 2\n1 3\n1 4\n", Some(3), Mode::Global, 0).is_ok());
        assert!(matches!(
            Network::load("4 3\n1 2\n1 3\n1 4\n", Some(2), Mode::Global, 0),
            Err(SimError::Graph(GraphError::Degree { .. }))
        ));
    }

    #[test]
    fn broadcast_fidelity() {
        let net = Network::new(star(5), Mode::Global, 0).unwrap();
        let out = run(&net, |_| flood(), RunConfig::default()).unwrap();
        assert_eq!(out.metrics.msgs_per_node[0], 4);
        assert!(out.metrics.msgs_per_node[1..].iter().all(|&c| c == 0));
    }

    #[test]
    fn round_cap_reports_partial_metrics() {
        struct Chatter;
        impl Engine for Chatter {
            type Msg = Ping;
            fn start(&mut self, ctx: &mut Ctx<Ping>) {
                ctx.broadcast(Ping);
            }
            fn on_round(&mut self, ctx: &mut Ctx<Ping>, _: Vec<Incoming<Ping>>) {
                ctx.broadcast(Ping);
            }
            fn quiescent(&self) -> bool {
                false
            }
        }
        let net = Network::new(path(2), Mode::Global, 0).unwrap();
        match run(&net, |_| Chatter, RunConfig { order_seed: 0, round_cap: 5 }) {
            Err(SimError::RoundCap { cap: 5, metrics }) => assert_eq!(metrics.total_msgs(), 10),
            _ => panic!("expected round cap"),
        }
    }

    #[test]
    fn reports() {
        let m = Metrics { dist_time: 2, msgs_per_node: vec![1, 2], max_msg_bits: 10, ..Metrics::default() };
        let csv = metrics_report(&m, ReportFormat::Csv);
        assert!(csv.starts_with("measure,node,value\nIN-TIME/ROUND,,0\nDIST-TIME,,2\nMSG-SIZE,,10\n#MSG/NODE,,2\n"));
        assert!(csv.contains("#MSG,2,2"));
        let t = metrics_report(&m, ReportFormat::Table);
        assert_eq!(t.lines().count(), 7);
        let empty = metrics_report(&Metrics::default(), ReportFormat::Csv);
        assert_eq!(empty.lines().count(), 5);
        assert_eq!(ceil_log2(1), 0);
        assert_eq!(ceil_log2(5), 3);
        assert_eq!(ceil_log2(8), 3);
    }
}
