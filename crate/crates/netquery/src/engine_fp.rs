//! Distributed inflationary fixpoint engine: a hop-counted flood
//! synchronises the start, then every iteration evaluates the body with the
//! FO core, commits at τ and uses informing messages to decide whether to go
//! on.

use crate::engine_fo::{check_query, clock_value, local_knowledge, subquery_clock, DistResult, FoCore, FoError, FoMsg};
use crate::logic::{fixpoint_stats, prenex, split_prenex, FixpointQuery, Formula, NodeId};
use crate::oracle::Relation;
use crate::simnet::{self, BitModel, Ctx, Engine, Incoming, Network, NodeInfo, Payload, RunConfig, Size};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Clone, Debug, PartialEq)]
pub enum FpMsg {
    /// The μ-query with its hop counter.
    Flood { query: String, hops: u32 },
    Fo { iteration: u32, msg: FoMsg },
    Inform { iteration: u32, hops: u32 },
}

impl Payload for FpMsg {
    fn size(&self, bm: &BitModel) -> Size {
        match self {
            FpMsg::Flood { query, .. } => Size::tag().raw(BitModel::formula(query.len())).ids(bm, 1),
            FpMsg::Fo { msg, .. } => msg.size(bm).ids(bm, 1),
            FpMsg::Inform { .. } => Size::tag().ids(bm, 2),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Idle,
    /// Waiting for σ.
    Flooding { sigma_at: u64 },
    Evaluating { tau_at: u64 },
    Settling { eta_at: u64 },
    Done,
}

/// Iteration period: the requester-style clock 2Δw, stretched if an open
/// query's Boolean instances could outlive it.
pub fn tau(q: &FixpointQuery, delta: u32) -> u64 {
    let st = fixpoint_stats(q);
    let body = prenex(&q.body);
    let (prefix, _) = split_prenex(&body);
    let inner = if prefix.is_empty() { 0 } else { subquery_clock(&body, delta) };
    clock_value(st.w, delta).max((st.free as u64 - 1) * delta as u64 + inner)
}

pub struct FpEngine {
    info: NodeInfo,
    me: NodeId,
    delta: u32,
    query: FixpointQuery,
    body: Formula,
    text: String,
    tau: u64,
    requester: bool,
    inputs: BTreeMap<String, BTreeSet<Vec<NodeId>>>,
    /// Inputs plus the committed relation, as read by the FO core.
    known: BTreeMap<String, BTreeSet<Vec<NodeId>>>,
    pub phase: Phase,
    pub iteration: u32,
    fo: FoCore,
    /// Committed tuples of T held here.
    pub local: BTreeSet<Vec<NodeId>>,
    /// `local` after each commit.
    pub history: Vec<BTreeSet<Vec<NodeId>>>,
    new_tuples: bool,
    informed: bool,
    inform_best: Option<u32>,
}

impl FpEngine {
    fn refresh_knowledge(&mut self) {
        self.known = self.inputs.clone();
        self.known.insert(self.query.name.clone(), self.local.clone());
    }

    fn begin_iteration(&mut self, now: u64) {
        self.iteration += 1;
        self.fo = FoCore::new(self.me, self.delta);
        self.new_tuples = false;
        self.informed = false;
        self.inform_best = None;
        self.phase = Phase::Evaluating { tau_at: now + self.tau };
        self.refresh_knowledge();
        let know = local_knowledge(&self.info, &self.known);
        self.fo.start_open_here(now, &self.body, &self.query.vars, &know);
    }

    fn send_fo(&mut self, ctx: &mut Ctx<FpMsg>) {
        let it = self.iteration;
        let mut tmp: Vec<(Option<usize>, FpMsg)> = Vec::new();
        for o in self.fo.out.drain(..) {
            tmp.push((o.except, FpMsg::Fo { iteration: it, msg: o.msg }));
        }
        for (except, m) in tmp {
            match except {
                Some(p) => ctx.broadcast_except(p, m),
                None => ctx.broadcast(m),
            }
        }
        ctx.step(std::mem::take(&mut self.fo.steps));
    }

    fn handle(&mut self, now: u64, m: Incoming<FpMsg>, ctx: &mut Ctx<FpMsg>) {
        match m.msg {
            FpMsg::Flood { query, hops } => {
                if self.phase == Phase::Idle {
                    self.phase = Phase::Flooding { sigma_at: now + hops as u64 };
                    if hops > 0 {
                        ctx.broadcast_except(m.port, FpMsg::Flood { query, hops: hops - 1 });
                    }
                }
            }
            FpMsg::Fo { iteration, msg } => {
                if iteration == self.iteration && matches!(self.phase, Phase::Evaluating { .. }) {
                    let know = local_knowledge(&self.info, &self.known);
                    self.fo.receive(now, m.port, msg, &know);
                }
            }
            FpMsg::Inform { iteration, hops } => {
                if iteration != self.iteration {
                    return;
                }
                self.informed = true;
                if hops >= 1 && self.inform_best.is_none_or(|b| hops - 1 > b) {
                    self.inform_best = Some(hops - 1);
                    ctx.broadcast_except(m.port, FpMsg::Inform { iteration, hops: hops - 1 });
                }
            }
        }
    }
}

impl Engine for FpEngine {
    type Msg = FpMsg;

    fn start(&mut self, ctx: &mut Ctx<FpMsg>) {
        if self.requester {
            self.phase = Phase::Flooding { sigma_at: self.delta as u64 };
            if self.delta > 0 {
                ctx.broadcast(FpMsg::Flood { query: self.text.clone(), hops: self.delta - 1 });
            }
        }
    }

    fn on_round(&mut self, ctx: &mut Ctx<FpMsg>, inbox: Vec<Incoming<FpMsg>>) {
        let now = ctx.round;
        for m in inbox {
            self.handle(now, m, ctx);
        }
        if matches!(self.phase, Phase::Evaluating { .. }) {
            self.fo.tick(now);
        }
        self.send_fo(ctx);
        match self.phase {
            Phase::Flooding { sigma_at } if now >= sigma_at => {
                self.begin_iteration(now);
                self.send_fo(ctx);
            }
            Phase::Evaluating { tau_at } if now >= tau_at => {
                let fresh: Vec<Vec<NodeId>> = self.fo.tuples.difference(&self.local).cloned().collect();
                self.new_tuples = !fresh.is_empty();
                self.local.extend(fresh);
                self.history.push(self.local.clone());
                ctx.step(1);
                if self.new_tuples && self.delta > 0 {
                    self.inform_best = Some(self.delta - 1);
                    ctx.broadcast(FpMsg::Inform { iteration: self.iteration, hops: self.delta - 1 });
                }
                self.phase = Phase::Settling { eta_at: now + self.delta as u64 };
            }
            Phase::Settling { eta_at } if now >= eta_at => {
                if self.new_tuples || self.informed {
                    self.begin_iteration(now);
                    self.send_fo(ctx);
                } else {
                    self.phase = Phase::Done;
                }
            }
            _ => {}
        }
    }

    fn quiescent(&self) -> bool {
        matches!(self.phase, Phase::Idle | Phase::Done)
    }
}

#[derive(Clone, Debug)]
pub struct FpRun {
    pub result: DistResult,
    /// Union over nodes of the committed relation after each iteration.
    pub stages: Vec<BTreeSet<Vec<NodeId>>>,
    pub iterations: u32,
    pub tau: u64,
}

pub fn run_qe_fp(net: &Network, q: &FixpointQuery, req: NodeId, cfg: RunConfig) -> Result<FpRun, FoError> {
    run_qe_fp_with(net, q, req, &BTreeMap::new(), cfg)
}

/// `inputs` are extra relations, each tuple held by its first component.
pub fn run_qe_fp_with(
    net: &Network,
    q: &FixpointQuery,
    req: NodeId,
    inputs: &BTreeMap<String, BTreeSet<Vec<NodeId>>>,
    cfg: RunConfig,
) -> Result<FpRun, FoError> {
    if q.radius.is_some() {
        return Err(FoError::Relativized);
    }
    let mut names: Vec<&str> = inputs.keys().map(String::as_str).collect();
    names.push(&q.name);
    check_query(net, &q.body, &names)?;
    if !net.graph().contains(req) {
        return Err(FoError::BadRequester(req));
    }
    let delta = net.graph().diameter();
    let tau = tau(q, delta);
    let body = prenex(&q.body);
    let text = q.to_string();
    let factory = |info: &NodeInfo| {
        let me = info.id.unwrap();
        let held = inputs
            .iter()
            .map(|(k, v)| (k.clone(), v.iter().filter(|t| t.first() == Some(&me)).cloned().collect()))
            .collect();
        FpEngine {
            info: info.clone(),
            me,
            delta,
            query: q.clone(),
            body: body.clone(),
            text: text.clone(),
            tau,
            requester: me == req,
            inputs: held,
            known: BTreeMap::new(),
            phase: Phase::Idle,
            iteration: 0,
            fo: FoCore::new(me, delta),
            local: BTreeSet::new(),
            history: Vec::new(),
            new_tuples: false,
            informed: false,
            inform_best: None,
        }
    };
    let out = simnet::run(net, factory, cfg)?;
    let iterations = out.engines.iter().map(|e| e.iteration).max().unwrap_or(0);
    let mut stages = vec![BTreeSet::new()];
    for i in 0..iterations as usize {
        stages.push(out.engines.iter().filter_map(|e| e.history.get(i)).flatten().cloned().collect());
    }
    let per_node: Vec<BTreeSet<Vec<NodeId>>> = out.engines.iter().map(|e| e.local.clone()).collect();
    let tuples = per_node.iter().flatten().cloned().collect();
    let result = DistResult { relation: Relation::new(q.arity(), tuples), per_node, metrics: out.metrics };
    Ok(FpRun { result, stages, iterations, tau })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::logic::parse_fixpoint;
    use crate::oracle::eval_fp;
    use crate::oracle::fixtures::{path, ring};
    use crate::simnet::Mode;

    fn net(g: crate::oracle::Graph) -> Network {
        Network::new(g, Mode::Global, 5).unwrap()
    }

    #[test]
    fn tc_on_path() {
        let q = corpus::transitive_closure();
        let r = run_qe_fp(&net(path(3)), &q, 1, RunConfig::default()).unwrap();
        assert_eq!(r.result.relation.len(), 9);
        assert_eq!(r.result.relation.tuples, *eval_fp(&path(3), &q).unwrap().final_stage());
    }

    #[test]
    fn olsr_tables_on_path() {
        let q = corpus::olsr();
        let r = run_qe_fp(&net(path(3)), &q, 2, RunConfig::default()).unwrap();
        let t = |v: &[[NodeId; 3]]| v.iter().map(|x| x.to_vec()).collect::<BTreeSet<_>>();
        assert_eq!(r.result.per_node[0], t(&[[1, 2, 2], [1, 2, 3]]));
        assert_eq!(r.result.per_node[1], t(&[[2, 1, 1], [2, 3, 3]]));
        assert_eq!(r.result.per_node[2], t(&[[3, 2, 1], [3, 2, 2]]));
    }

    #[test]
    fn false_body_stops_after_one_period() {
        let q = parse_fixpoint("mu T(x). false").unwrap();
        let r = run_qe_fp(&net(path(3)), &q, 1, RunConfig::default()).unwrap();
        assert!(r.result.relation.is_empty());
        assert_eq!(r.iterations, 1);
    }

    #[test]
    fn spanning_tree_on_triangle() {
        let g = ring(3).with_fact("ReqNode", vec![1]);
        let r = run_qe_fp(&net(g), &corpus::spanning_tree(), 1, RunConfig::default()).unwrap();
        let want: BTreeSet<Vec<NodeId>> = [vec![1, 2], vec![1, 3]].into();
        assert_eq!(r.result.relation.tuples, want);
    }

    #[test]
    fn tc_time_on_ring4() {
        let q = corpus::transitive_closure();
        let r = run_qe_fp(&net(ring(4)), &q, 1, RunConfig::default()).unwrap();
        let (d, n, w) = (2u64, 4u64, 3u64);
        assert!(r.result.metrics.dist_time <= d + n * n * (2 * d * w + d));
        let tr = eval_fp(&ring(4), &q).unwrap();
        assert_eq!(r.stages, tr.stages[..r.stages.len()].to_vec());
    }
}
