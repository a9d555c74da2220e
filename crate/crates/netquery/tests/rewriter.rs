use netquery::corpus;
use netquery::logic::rules::Program;
use netquery::netlog::{check_localization, run_netlog, NetlogRun};
use netquery::oracle::fixtures::{path, ring, star};
use netquery::oracle::{eval_datalog, DatalogTrace, Graph};
use netquery::rewriter::{compile, compile_with, CompileOptions, CompileOutput, InformGuard};
use netquery::simnet::{Mode, Network, RunConfig};

fn fixtures() -> Vec<(String, Graph)> {
    let mut out = Vec::new();
    for n in 2..=6 {
        out.push((format!("path{n}"), path(n)));
    }
    for n in 3..=6 {
        out.push((format!("ring{n}"), ring(n)));
        out.push((format!("star{n}"), star(n)));
    }
    out
}

fn run(g: &Graph, out: &CompileOutput) -> NetlogRun {
    let net = Network::new(g.clone(), Mode::Global, 5).unwrap();
    run_netlog(&net, &out.program, RunConfig::default()).expect("compiled program terminates")
}

/// Every intentional fact first shows up at index i(kappa+1)+1, where i is
/// its first Datalog stage; the final relations agree.
fn check(name: &str, p: &Program, g: &Graph, out: &CompileOutput, dl: &DatalogTrace, nl: &NetlogRun) {
    for (rel, tuples) in dl.final_instance() {
        assert_eq!(&nl.relation(rel), tuples, "{name}: {rel}");
        for (i, w) in dl.stages.windows(2).enumerate() {
            let stage = i as u64 + 1;
            for t in w[1][rel].difference(&w[0][rel]) {
                let holder = t[0] as usize - 1;
                let first = nl.first_seen[holder][&(rel.clone(), t.clone())];
                assert_eq!(first, stage * (out.kappa as u64 + 1) + 1, "{name}: {rel}{t:?} on {}", g.to_text());
            }
        }
    }
    assert_eq!(p.intentional().len(), dl.final_instance().len());
}

#[test]
fn compiled_programs_match_datalog() {
    let programs = [("tc", corpus::TC_DATALOG), ("sg", corpus::SAME_GENERATION_DATALOG), ("win", corpus::WIN_DATALOG)];
    for (pname, text) in programs {
        let p = corpus::datalog(text);
        for (gname, g) in fixtures() {
            let out = compile(&p, g.diameter()).unwrap();
            check_localization(&out.program).unwrap();
            let dl = eval_datalog(&p, &g).unwrap();
            let nl = run(&g, &out);
            check(&format!("{pname} on {gname}"), &p, &g, &out, &dl, &nl);
        }
    }
}

#[test]
fn tc_stage_correspondence_on_path3() {
    let p = corpus::datalog(corpus::TC_DATALOG);
    let g = path(3);
    let out = compile(&p, 2).unwrap();
    assert_eq!(out.kappa, 2);
    let dl = eval_datalog(&p, &g).unwrap();
    let nl = run(&g, &out);
    assert_eq!(nl.relation("T").len(), 9);
    check("tc", &p, &g, &out, &dl, &nl);
    // T(1,3) needs two stages: first seen at 2*3+1
    assert_eq!(nl.first_seen[0][&("T".to_string(), vec![1, 3])], 7);
}

#[test]
fn empty_and_nonrecursive_programs() {
    let g = path(3);
    let out = compile(&Program::default(), 2).unwrap();
    let nl = run(&g, &out);
    assert!(nl.stores.iter().all(|s| s.is_empty()));

    let p = corpus::datalog("E(x,y) :- G(x,y), x >= y.");
    let out = compile(&p, 2).unwrap();
    check("nonrecursive", &p, &g, &out, &eval_datalog(&p, &g).unwrap(), &run(&g, &out));
}

/// Reachability from one node is active at a single frontier node per
/// stage. With the `q >= Delta` inform guard, informs travel
/// kappa - Delta + 2 hops, so on a path of 5 (kappa = Delta = 4) nodes
/// three hops ahead of the frontier stop early.
#[test]
fn inform_reach_limits_frontier_programs() {
    let p = corpus::datalog("Reach(x) :- ReqNode(x). Reach(y) :- Reach(x), G(x,y).");
    let g = path(5).with_fact("ReqNode", vec![1]);
    let dl = eval_datalog(&p, &g).unwrap();
    assert_eq!(dl.final_instance()["Reach"].len(), 5);

    let default = compile(&p, 4).unwrap();
    assert_eq!(default.kappa, 4);
    let nl = run(&g, &default);
    assert!(nl.relation("Reach").len() < 5, "premature stop expected");

    let fixed = compile_with(&p, 4, CompileOptions { inform_guard: InformGuard::AtLeast(2) }).unwrap();
    let nl = run(&g, &fixed);
    check("reach", &p, &g, &fixed, &dl, &nl);
}

#[test]
fn widened_guard_matches_datalog_everywhere() {
    let opts = CompileOptions { inform_guard: InformGuard::AtLeast(2) };
    let p = corpus::datalog("Reach(x) :- ReqNode(x). Reach(y) :- Reach(x), G(x,y).");
    for (gname, g) in fixtures() {
        let g = g.with_fact("ReqNode", vec![1]);
        let out = compile_with(&p, g.diameter(), opts).unwrap();
        check(&gname, &p, &g, &out, &eval_datalog(&p, &g).unwrap(), &run(&g, &out));
    }
}
