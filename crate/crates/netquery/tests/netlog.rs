use netquery::corpus;
use netquery::logic::NodeId;
use netquery::netlog::{run_netlog, NetlogError, NetlogRun};
use netquery::oracle::fixtures::{path, random_connected, ring, star};
use netquery::oracle::{eval_fp, eval_fp_with, Graph};
use netquery::simnet::{Mode, Network, RunConfig};
use proptest::prelude::*;
use std::collections::BTreeMap;

fn fixtures() -> Vec<Graph> {
    let mut gs = Vec::new();
    for n in 2..=6 {
        gs.push(path(n));
    }
    for n in 3..=6 {
        gs.push(ring(n));
        gs.push(star(n));
    }
    gs
}

fn run(g: &Graph, text: &str, seed: u64) -> NetlogRun {
    let net = Network::new(g.clone(), Mode::Global, seed).unwrap();
    run_netlog(&net, &corpus::netlog(text), RunConfig::default()).expect("program converges")
}

/// Relations kept by a copy rule never lose a fact once derived.
fn assert_kept(r: &NetlogRun, pred: &str) {
    assert_eq!(r.relation_by(pred, u64::MAX), r.relation(pred), "{pred} lost facts");
}

fn check_spanning_tree(g: &Graph, seed: u64) {
    let g = g.clone().with_fact("ReqNode", vec![1]);
    let r = run(&g, corpus::SPANNING_TREE_NETLOG, seed);
    let want = eval_fp(&g, &corpus::spanning_tree()).unwrap();
    assert_eq!(&r.relation("ST"), want.final_stage(), "ST on {}", g.to_text());
    assert_kept(&r, "ST");
}

#[test]
fn spanning_tree_matches_fixpoint() {
    for (i, g) in fixtures().iter().enumerate() {
        check_spanning_tree(g, i as u64);
    }
}

#[test]
fn aodv_matches_fixpoint() {
    for (i, g) in fixtures().iter().enumerate() {
        let n = g.n() as NodeId;
        let g = g.clone().with_fact("ReqNode", vec![1]).with_fact("dest", vec![n]);
        let r = run(&g, corpus::AODV_NETLOG, i as u64);
        let rr = eval_fp(&g, &corpus::route_request()).unwrap();
        assert_eq!(&r.relation("RouteReq"), rr.final_stage(), "RouteReq on {}", g.to_text());
        let inputs = BTreeMap::from([("RouteReq".to_string(), rr.final_stage().clone())]);
        let nh = eval_fp_with(&g, &corpus::next_hop(), &inputs).unwrap();
        assert_eq!(&r.relation("Nexthop"), nh.final_stage(), "Nexthop on {}", g.to_text());
        assert_kept(&r, "RouteReq");
        assert_kept(&r, "Nexthop");
    }
}

#[test]
fn olsr_matches_fixpoint() {
    for (i, g) in fixtures().iter().enumerate() {
        let r = run(g, corpus::OLSR_NETLOG, i as u64);
        let want = eval_fp(g, &corpus::olsr()).unwrap();
        assert_eq!(&r.relation("T"), want.final_stage(), "T on {}", g.to_text());
        assert_kept(&r, "T");
    }
}

/// A program whose fact keeps flipping never reaches a fixpoint.
#[test]
fn flip_program_does_not_converge() {
    let p = corpus::netlog("On(@x) :- start(@x). On(@x) :- !On(@x); Tick(@x). Tick(@x) :- !Tick(@x).");
    let net = Network::new(path(2), Mode::Global, 0).unwrap();
    let cfg = RunConfig { round_cap: 50, ..RunConfig::default() };
    assert!(matches!(run_netlog(&net, &p, cfg), Err(NetlogError::NoConvergence(50))));
}

#[test]
fn netlog_needs_ids() {
    let net = Network::new(path(3), Mode::Anonymous, 0).unwrap();
    let p = corpus::netlog(corpus::OLSR_NETLOG);
    assert!(matches!(run_netlog(&net, &p, RunConfig::default()), Err(NetlogError::NeedsIds)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn spanning_tree_on_random_graphs(n in 2usize..8, seed in 0u64..1000) {
        check_spanning_tree(&random_connected(n, 3, seed), seed);
    }
}
