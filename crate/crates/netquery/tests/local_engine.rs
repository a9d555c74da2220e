use netquery::corpus;
use netquery::local_engine::{
    collect_all, follow, local_query, run_qe_fo_loc, run_qe_fp_loc, translate_name, verify_reconstruction, Keying,
    LocalConfig, LocalError,
};
use netquery::logic::{parse_formula, relativize, FixpointQuery, Formula, NodeId};
use netquery::oracle::fixtures::{all_connected, grid, local_labels, path, random_connected, ring, star};
use netquery::oracle::{eval_fp_loc, Graph, Interp};
use netquery::simnet::{Mode, Network};
use std::collections::BTreeSet;

fn triangle() -> Graph {
    Graph::new(3, &[(1, 2), (2, 3), (1, 3)], None).unwrap()
}

fn graphs() -> Vec<Graph> {
    let mut gs: Vec<Graph> = all_connected(4, 3);
    gs.extend([triangle(), path(5), ring(4), ring(6), star(5), grid(3)]);
    gs.extend((0..3).map(|s| random_connected(7, 3, s)));
    gs
}

/// The three labelling modes, with labels good for `hops`-hop collections.
fn modes(g: &Graph, hops: u32) -> Vec<Mode> {
    vec![Mode::Global, Mode::LocallyConsistent { k: hops, labels: local_labels(g, hops) }, Mode::Anonymous]
}

#[test]
fn collection_reconstructs_neighbourhoods() {
    for g in graphs() {
        for k in 1..=2 {
            for mode in modes(&g, k + 1) {
                for seed in 0..3 {
                    let net = Network::new(g.clone(), mode.clone(), seed).unwrap();
                    let ok = verify_reconstruction(&net, k, LocalConfig::default()).unwrap();
                    assert!(ok, "k={k} {} seed {seed} on {}", mode.name(), g.to_text());
                }
            }
        }
    }
}

/// With one tracelist per node, concurrent collections glue nodes together.
#[test]
fn shared_tracelists_confuse_concurrent_collections() {
    let cfg = LocalConfig { keying: Keying::Shared, ..LocalConfig::default() };
    let net = Network::new(ring(4), Mode::Anonymous, 0).unwrap();
    assert!(!verify_reconstruction(&net, 1, cfg).unwrap());
    let keyed = verify_reconstruction(&net, 1, LocalConfig::default()).unwrap();
    assert!(keyed);
}

fn check_fo(g: &Graph, f: &Formula, mode: Mode, seed: u64) {
    let net = Network::new(g.clone(), mode, seed).unwrap();
    let q = local_query(&net, f).unwrap();
    let want = Interp::new(g).satisfying(f, &q.vars);
    let run = run_qe_fo_loc(&net, f, 1, LocalConfig::default()).unwrap();
    assert_eq!(run.resolve(&net), want, "{f} ({}) on {}", net.mode().name(), g.to_text());
    for (i, ts) in run.per_node.iter().enumerate() {
        assert!(ts.iter().all(|t| t[0].is_empty()), "node {} holds a foreign tuple", i + 1);
    }
}

#[test]
fn degree_two_on_path() {
    let f = parse_formula(
        "exists y in N^1(x). exists z in N^1(x). (G(x,y) & G(x,z) & y != z \
         & forall w in N^1(x). (!G(x,w) | w = y | w = z))",
    )
    .unwrap();
    let g = path(3);
    for mode in modes(&g, 2) {
        let net = Network::new(g.clone(), mode, 0).unwrap();
        let run = run_qe_fo_loc(&net, &f, 1, LocalConfig::default()).unwrap();
        assert_eq!(run.resolve(&net), BTreeSet::from([vec![2]]));
    }
}

#[test]
fn fo_loc_matches_oracle() {
    let forms: Vec<Formula> = corpus::fo_formulas()
        .into_iter()
        .filter(|f| f.free_vars().iter().any(|v| v == "x"))
        .collect();
    for g in graphs() {
        for k in 1..=2 {
            for mode in modes(&g, k + 1) {
                for f in &forms {
                    let r = relativize(f, "x", k).unwrap();
                    let named = !matches!(mode, Mode::Anonymous) || !r.uses_order();
                    let consts = matches!(mode, Mode::Global) || r.constants().is_empty();
                    if named && consts {
                        check_fo(&g, &r, mode.clone(), k as u64);
                    }
                }
            }
        }
    }
}

#[test]
fn capabilities_follow_the_mode() {
    let g = ring(6);
    let order = relativize(&parse_formula("forall y. (!G(x,y) | y >= x)").unwrap(), "x", 1).unwrap();
    let anon = Network::new(g.clone(), Mode::Anonymous, 0).unwrap();
    assert!(matches!(run_qe_fo_loc(&anon, &order, 1, LocalConfig::default()), Err(LocalError::NoOrder)));
    let constant = relativize(&parse_formula("G(x,1)").unwrap(), "x", 1).unwrap();
    let lc = Network::new(g.clone(), Mode::LocallyConsistent { k: 2, labels: local_labels(&g, 2) }, 0).unwrap();
    assert!(matches!(run_qe_fo_loc(&lc, &constant, 1, LocalConfig::default()), Err(LocalError::Constant)));
    let global = Network::new(g.clone(), Mode::Global, 0).unwrap();
    let free = parse_formula("exists y. G(x,y)").unwrap();
    assert!(matches!(run_qe_fo_loc(&global, &free, 1, LocalConfig::default()), Err(LocalError::NotLocal(_))));
}

#[test]
fn labels_must_cover_the_collection_radius() {
    let g = ring(6);
    let labels = vec![1, 2, 3, 1, 2, 3];
    let net = Network::new(g, Mode::LocallyConsistent { k: 1, labels }, 0).unwrap();
    let f = relativize(&parse_formula("exists y. G(x,y)").unwrap(), "x", 1).unwrap();
    let err = run_qe_fo_loc(&net, &f, 1, LocalConfig::default()).unwrap_err();
    assert!(matches!(err, LocalError::Labels { needed: 2 }));
}

fn check_fp(g: &Graph, q: &FixpointQuery, mode: Mode, seed: u64) {
    let net = Network::new(g.clone(), mode, seed).unwrap();
    let want = eval_fp_loc(g, q).unwrap();
    let run = run_qe_fp_loc(&net, q, 1, LocalConfig::default()).unwrap();
    let ctx = format!("{} ({}) on {}", q.name, net.mode().name(), g.to_text());
    assert_eq!(&run.resolve(&net), want.final_stage(), "{ctx}");
    let stages = run.stages(&net);
    let n = stages.len().min(want.stages.len());
    assert_eq!(stages[..n], want.stages[..n], "stages of {ctx}");
    assert!(run.iterations as usize <= want.final_stage().len() + 1, "{ctx}");
}

fn with_req(g: Graph, dest: NodeId) -> Graph {
    g.with_fact("ReqNode", vec![1]).with_fact("dest", vec![dest])
}

#[test]
fn fp_loc_matches_oracle() {
    for g in graphs() {
        let n = g.n() as NodeId;
        let g = with_req(g, n);
        for k in 1..=2 {
            let tc = corpus::transitive_closure().localized(k).unwrap();
            let rr = corpus::route_request().localized(k).unwrap();
            let st = corpus::spanning_tree().localized(k).unwrap();
            for mode in modes(&g, 2 * k) {
                check_fp(&g, &tc, mode.clone(), k as u64);
                check_fp(&g, &rr, mode.clone(), k as u64);
                if !matches!(mode, Mode::Anonymous) {
                    check_fp(&g, &st, mode, k as u64);
                }
            }
        }
    }
}

#[test]
fn spanning_tree_on_path3() {
    let g = with_req(path(3), 3);
    let net = Network::new(g, Mode::Global, 0).unwrap();
    let q = corpus::spanning_tree().localized(1).unwrap();
    let run = run_qe_fp_loc(&net, &q, 1, LocalConfig::default()).unwrap();
    assert_eq!(run.resolve(&net), BTreeSet::from([vec![1, 2], vec![2, 3]]));
}

#[test]
fn translated_names_agree_with_the_graph() {
    let k = 1;
    for g in [grid(3), ring(5), random_connected(8, 3, 4)] {
        for mode in modes(&g, 2 * k) {
            let net = Network::new(g.clone(), mode, 2).unwrap();
            let (tops, _) = collect_all(&net, 2 * k, 2 * k, LocalConfig::default()).unwrap();
            for a in g.nodes() {
                let from = &tops[a as usize - 1];
                for t in from.within(k).filter(|&t| t != 0) {
                    let real_t = follow(&net, a, &from.nodes[t].rep).unwrap();
                    let to = &tops[real_t as usize - 1];
                    for b in 0..from.len() {
                        let real_b = follow(&net, a, &from.nodes[b].rep).unwrap();
                        match translate_name(from, to, t, b, k) {
                            Ok(there) => {
                                assert_eq!(follow(&net, real_t, &to.nodes[there].rep), Some(real_b));
                                if from.nodes[b].dist <= k {
                                    let me = to.within(k).find(|&i| follow(&net, real_t, &to.nodes[i].rep) == Some(a));
                                    assert_eq!(translate_name(to, from, me.unwrap(), there, k), Ok(b));
                                }
                            }
                            Err(_) => assert!(g.dist(real_t, real_b) > k),
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn message_size_does_not_grow_with_the_ring() {
    let f = relativize(&parse_formula("exists y. exists z. (G(x,y) & G(y,z) & x != z)").unwrap(), "x", 1).unwrap();
    let mut sans = BTreeSet::new();
    let mut id_free = BTreeSet::new();
    for n in [8, 16, 32, 64] {
        let g = ring(n);
        let anon = Network::new(g.clone(), Mode::Anonymous, 0).unwrap();
        let m = run_qe_fo_loc(&anon, &f, 1, LocalConfig::default()).unwrap().metrics;
        sans.insert(m.max_msg_bits_sans_ids);
        let global = Network::new(g, Mode::Global, 0).unwrap();
        let m = run_qe_fo_loc(&global, &f, 1, LocalConfig::default()).unwrap().metrics;
        id_free.insert(m.max_msg_bits - m.max_msg_id_fields * global.bit_model().id_bits);
    }
    assert_eq!(sans.len(), 1, "{sans:?}");
    assert_eq!(id_free.len(), 1, "{id_free:?}");
}

/// In lc mode `>=` reads labels: on a 4-ring (k = 2 sees it all) whose
/// labels reverse the order of nodes 2 and 4, node 3 picks the other parent.
#[test]
fn lc_order_follows_labels() {
    let g = with_req(ring(4), 3);
    let q = corpus::spanning_tree().localized(2).unwrap();
    let lc = Network::new(g.clone(), Mode::LocallyConsistent { k: 4, labels: vec![1, 4, 2, 3] }, 0).unwrap();
    let run = run_qe_fp_loc(&lc, &q, 1, LocalConfig::default()).unwrap();
    assert_eq!(run.resolve(&lc), BTreeSet::from([vec![1, 2], vec![1, 4], vec![4, 3]]));
    let ids = eval_fp_loc(&g, &q).unwrap();
    assert_eq!(ids.final_stage(), &BTreeSet::from([vec![1, 2], vec![1, 4], vec![2, 3]]));
}
