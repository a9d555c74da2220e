//! Centralized reference evaluation: the ground truth for every engine.

mod eval;
pub mod fixtures;
mod graph;

pub use eval::{
    eval_datalog, eval_fo, eval_fo_with, eval_fp, eval_fp_loc, eval_fp_loc_with, eval_fp_with, parse_datalog,
    DatalogTrace, Instance, Interp,
};
pub use graph::{Graph, GraphError, Neighborhood};

use crate::logic::NodeId;
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("unknown predicate {0}")]
    UnknownPredicate(String),
    #[error("constant {0} is not a node of the graph")]
    ConstantNotInGraph(NodeId),
    #[error("unsafe rule: {0}")]
    Unsafe(String),
    #[error("query has no locality radius")]
    NotLocal,
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Relation {
    pub arity: usize,
    pub tuples: BTreeSet<Vec<NodeId>>,
}

impl Relation {
    pub fn new(arity: usize, tuples: BTreeSet<Vec<NodeId>>) -> Self {
        Relation { arity, tuples }
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    /// Boolean reading of an arity-0 relation.
    pub fn truth(&self) -> bool {
        !self.tuples.is_empty()
    }
}

/// I_0 = ∅, I_1, ..., with the last two stages equal.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StageTrace {
    pub arity: usize,
    pub stages: Vec<BTreeSet<Vec<NodeId>>>,
}

impl StageTrace {
    pub fn final_stage(&self) -> &BTreeSet<Vec<NodeId>> {
        self.stages.last().unwrap()
    }

    pub fn result(&self) -> Relation {
        Relation::new(self.arity, self.final_stage().clone())
    }

    /// Number of stages that added tuples.
    pub fn productive_stages(&self) -> usize {
        self.stages.len() - 2
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use crate::logic::{parse_fixpoint, parse_formula};
    use proptest::prelude::*;

    fn tuples(v: &[&[NodeId]]) -> BTreeSet<Vec<NodeId>> {
        v.iter().map(|t| t.to_vec()).collect()
    }

    #[test]
    fn load_and_diameter() {
        let g = Graph::parse("3 2\n1 2\n2 3\n", None).unwrap();
        assert_eq!(g.diameter(), 2);
        let star = "4 3\n1 2\n1 3\n1 4\n";
        assert!(Graph::parse(star, Some(3)).is_ok());
        assert!(matches!(Graph::parse(star, Some(2)), Err(GraphError::Degree { .. })));
        assert_eq!(Graph::parse("4 2\n1 2\n3 4\n", None), Err(GraphError::Disconnected));
        let g = Graph::parse("2 1\n1 2\n@facts\nReqNode 1\nRR 1 2 2\ndest\n", None).unwrap();
        assert!(g.has_fact("RR", &[1, 2, 2]));
        assert_eq!(g.signature()["dest"], 1);
        assert_eq!(Graph::parse(&g.to_text(), None).unwrap(), g);
    }

    #[test]
    fn fo_examples() {
        let tri = ring(3);
        let r = eval_fo(&tri, &parse_formula("exists y. G(x,y)").unwrap()).unwrap();
        assert_eq!(r.tuples, tuples(&[&[1], &[2], &[3]]));
        let p = path(3);
        let r = eval_fo(&p, &parse_formula("G(x,y)").unwrap()).unwrap();
        assert_eq!(r.tuples, tuples(&[&[1, 2], &[2, 1], &[2, 3], &[3, 2]]));
        let f = parse_formula("forall y. (!G(x,y) | exists z. (G(y,z) & z != x))").unwrap();
        assert_eq!(eval_fo(&p, &f).unwrap().tuples, tuples(&[&[1], &[3]]));
        assert_eq!(eval_fo(&p, &parse_formula("Foo(x)").unwrap()), Err(OracleError::UnknownPredicate("Foo".into())));
        assert_eq!(eval_fo(&p, &parse_formula("G(1,9)").unwrap()), Err(OracleError::ConstantNotInGraph(9)));
    }

    #[test]
    fn fp_examples() {
        let tc = parse_fixpoint("mu T(x,y). G(x,y) | exists z.(T(x,z) & G(z,y))").unwrap();
        let tr = eval_fp(&path(3), &tc).unwrap();
        assert_eq!(tr.final_stage().len(), 9);
        assert!(tr.stages.windows(2).all(|w| w[0].is_subset(&w[1])));
        let st = crate::corpus::spanning_tree();
        let g = ring(3).with_fact("ReqNode", vec![1]);
        assert_eq!(eval_fp(&g, &st).unwrap().final_stage(), &tuples(&[&[1, 2], &[1, 3]]));
        let f = parse_fixpoint("mu T(x). false").unwrap();
        let tr = eval_fp(&path(3), &f).unwrap();
        assert_eq!(tr.stages.len(), 2);
        assert!(tr.final_stage().is_empty());
    }

    #[test]
    fn fp_loc_examples() {
        let st = crate::corpus::spanning_tree().localized(1).unwrap();
        let g = path(3).with_fact("ReqNode", vec![1]);
        assert_eq!(eval_fp_loc(&g, &st).unwrap().final_stage(), &tuples(&[&[1, 2], &[2, 3]]));
        // ring of 4, request at 1 for destination 3: both arcs at k=2; at
        // k=1 the destination lies outside every frame that could start a request
        let g = ring(4).with_fact("ReqNode", vec![1]).with_fact("dest", vec![3]);
        let rr2 = crate::corpus::route_request().localized(2).unwrap();
        let got = eval_fp_loc(&g, &rr2).unwrap();
        assert_eq!(got.final_stage(), &tuples(&[&[1, 2, 3], &[1, 4, 3], &[2, 3, 3], &[4, 3, 3]]));
        let rr1 = crate::corpus::route_request().localized(1).unwrap();
        assert!(eval_fp_loc(&g, &rr1).unwrap().final_stage().is_empty());
        // k beyond the diameter changes nothing
        let tc = parse_fixpoint("mu T(x,y). G(x,y) | exists z.(T(x,z) & G(z,y))").unwrap();
        let g = ring(5);
        assert_eq!(eval_fp_loc(&g, &tc.localized(3).unwrap()).unwrap().final_stage(), eval_fp(&g, &tc).unwrap().final_stage());
        assert_eq!(eval_fp_loc(&g, &tc), Err(OracleError::NotLocal));
    }

    #[test]
    fn datalog_examples() {
        let tc = parse_datalog("T(x,y):-G(x,y). T(x,y):-G(x,z),T(z,y).").unwrap();
        let tr = eval_datalog(&tc, &path(3)).unwrap();
        assert_eq!(tr.final_instance()["T"].len(), 9);
        let empty = parse_datalog("").unwrap();
        let tr = eval_datalog(&empty, &path(3)).unwrap();
        assert_eq!(tr.stages.len(), 2);
        // inflationary win/lose: stage 1 everyone with a neighbour wins
        let win = parse_datalog("W(x) :- G(x,y), !W(y).").unwrap();
        let tr = eval_datalog(&win, &path(3)).unwrap();
        assert_eq!(tr.stages[1]["W"], tuples(&[&[1], &[2], &[3]]));
        assert_eq!(tr.stages.len(), 3);
        let unsafe_p = parse_datalog("W(x) :- !G(x,y).").unwrap();
        assert!(matches!(eval_datalog(&unsafe_p, &path(3)), Err(OracleError::Unsafe(_))));
    }

    #[test]
    fn neighborhood_examples() {
        let nb = path(3).neighborhood(1, 1);
        assert_eq!(nb.nodes, vec![1, 2]);
        assert_eq!(nb.edges.iter().copied().collect::<Vec<_>>(), vec![(1, 2)]);
        let nb = ring(6).neighborhood(4, 2);
        assert_eq!(nb.nodes.len(), 5);
        assert_eq!(nb.edges.len(), 4);
        let nb = ring(6).neighborhood(4, 0);
        assert_eq!((nb.nodes.len(), nb.edges.len()), (1, 0));
    }

    #[test]
    fn tc_datalog_matches_fp() {
        let tc = parse_datalog("T(x,y):-G(x,y). T(x,y):-T(x,z),G(z,y).").unwrap();
        let q = parse_fixpoint("mu T(x,y). G(x,y) | exists z.(T(x,z) & G(z,y))").unwrap();
        for n in 1..=5 {
            for g in all_connected(n, 3) {
                let a = eval_datalog(&tc, &g).unwrap();
                let b = eval_fp(&g, &q).unwrap();
                assert_eq!(&a.final_instance()["T"], b.final_stage());
                // stage by stage, too
                assert_eq!(a.stages.len(), b.stages.len());
            }
        }
    }

    fn permute(g: &Graph, pi: &[NodeId]) -> Graph {
        let edges: Vec<_> = g.edges().iter().map(|&(u, v)| (pi[u as usize - 1], pi[v as usize - 1])).collect();
        Graph::new(g.n(), &edges, None).unwrap()
    }

    proptest! {
        #[test]
        fn genericity(f in crate::logic::gen::formula(), seed in 0u64..50, perm in Just(vec![3u32, 1, 4, 2, 5])) {
            let f = crate::logic::alpha_normalize(&f);
            // constants, the unary predicate and the id order break genericity
            prop_assume!(f.constants().is_empty() && !f.predicates().contains_key("P") && !f.uses_order());
            let g = random_connected(5, 3, seed);
            let h = permute(&g, &perm);
            let a = eval_fo(&g, &f).unwrap();
            let b = eval_fo(&h, &f).unwrap();
            let mapped: BTreeSet<Vec<NodeId>> = a.tuples.iter().map(|t| t.iter().map(|&x| perm[x as usize - 1]).collect()).collect();
            prop_assert_eq!(mapped, b.tuples);
        }

        #[test]
        fn fp_chain_inflationary(seed in 0u64..200) {
            let g = random_connected(5, 3, seed);
            let tc = parse_fixpoint("mu T(x,y). G(x,y) | exists z.(T(x,z) & G(z,y))").unwrap();
            let tr = eval_fp(&g, &tc).unwrap();
            prop_assert!(tr.stages.windows(2).all(|w| w[0].is_subset(&w[1])));
            prop_assert!(tr.stages.len() <= 25 + 2);
        }

        #[test]
        fn simplify_preserves_truth(f in crate::logic::gen::formula(), seed in 0u64..100, node in 1u32..=5) {
            let f = crate::logic::alpha_normalize(&f);
            let mut g = random_connected(5, 3, seed);
            g.add_fact("P", vec![node]);
            let interp = Interp::new(&g);
            // one node's local knowledge
            let facts = |a: &crate::logic::Formula| match a {
                crate::logic::Formula::Atom(at) => {
                    let c = at.consts()?;
                    if at.pred == "G" && (c[0] == node || c[1] == node) { return Some(g.has_edge(c[0], c[1])); }
                    if at.pred == "P" && c[0] == node { return Some(true); }
                    None
                }
                _ => None,
            };
            let s = crate::logic::simplify(&f, &facts);
            let vars = f.free_vars();
            let n = g.n() as NodeId;
            for t in (1..=n).flat_map(|a| (1..=n).flat_map(move |b| (1..=n).map(move |c| vec![a, b, c]))) {
                let mut env: Vec<(String, NodeId)> = vars.iter().cloned().zip(t.iter().copied()).collect();
                let mut env2 = env.clone();
                prop_assert_eq!(interp.eval(&f, &mut env), interp.eval(&s, &mut env2));
            }
        }
    }
}
