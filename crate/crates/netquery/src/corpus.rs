//! Routing and tree-building queries and programs used throughout the tests,
//! the CLI and the acceptance suite.

use crate::logic::rules::{parse_program, Dialect, Program};
use crate::logic::{parse_fixpoint, parse_formula, FixpointQuery, Formula};

pub const TC: &str = "mu T(x,y). G(x,y) | exists z. (T(x,z) & G(z,y))";

pub const OLSR: &str = "mu T(x,h,d). (G(x,h) & h = d) \
    | (G(x,h) & (exists z. (T(h,z,d) & x != z)) & !(exists u. T(x,u,d)))";

pub const SPANNING_TREE: &str = "mu ST(x,y). (G(x,y) & ReqNode(x)) \
    | (!(exists x'. ST(x',y)) & (exists w. (ST(w,x) & w != y)) & G(x,y) \
       & (forall w'. forall x''. (!(ST(w',x'') & G(x'',y)) | x'' >= x)))";

pub const ROUTE_REQUEST: &str = "mu RouteReq(x,y,d). (G(x,y) & ReqNode(x) & dest(d)) \
    | ((exists w. (RouteReq(w,x,d) & w != y)) & G(x,y) & x != d & !(exists w'. RouteReq(w',y,d)))";

/// Reads the final RouteReq relation as an input.
pub const NEXT_HOP: &str = "mu NextHop(x,y,d). (RouteReq(x,d,d) & y = d) \
    | ((exists z. NextHop(y,z,d)) & RouteReq(x,y,d))";

fn fp(text: &str) -> FixpointQuery {
    parse_fixpoint(text).expect("corpus query parses")
}

pub fn transitive_closure() -> FixpointQuery {
    fp(TC)
}

pub fn olsr() -> FixpointQuery {
    fp(OLSR)
}

pub fn spanning_tree() -> FixpointQuery {
    fp(SPANNING_TREE)
}

pub fn route_request() -> FixpointQuery {
    fp(ROUTE_REQUEST)
}

pub fn next_hop() -> FixpointQuery {
    fp(NEXT_HOP)
}

/// Table-based routing in Netlog. The last rule keeps every entry.
pub const OLSR_NETLOG: &str = "\
T(@x,d,d) :- G(@x,d).
T(@x,h,d) :- !existT(@x,d); G(@x,h); askT(@x,h,d).
existT(@x,d) :- T(@x,u,d).
^askT(@x,h,d) :- T(@h,z,d); G(@h,x); x != z.
T(@x,h,d) :- T(@x,h,d).
";

/// Variant whose copy rule keeps only direct entries T(x,d,d). Multi-hop
/// entries then flip against existT and the run never converges.
pub const OLSR_NETLOG_NARROW_COPY: &str = "\
T(@x,d,d) :- G(@x,d).
T(@x,h,d) :- !existT(@x,d); G(@x,h); askT(@x,h,d).
existT(@x,d) :- T(@x,u,d).
^askT(@x,h,d) :- T(@h,z,d); G(@h,x); x != z.
T(@x,d,d) :- T(@x,d,d).
";

/// Spanning tree in Netlog; a candidate parent is rejected only by a
/// strictly smaller competitor.
pub const SPANNING_TREE_NETLOG: &str = "\
^ST(x,@y) :- G(@x,y); ReqNode(@x).
ST(x,@y) :- !existST(@y); delay(x,@y); !rej(x,@y).
^askST(x,@y) :- ST(w,@x); G(@x,y); w != y.
existST(@y) :- ST(x,@y).
rej(x',@y) :- askST(x,@y); askST(x',@y); x' >= x; x' != x.
delay(x,@y) :- askST(x,@y).
ST(x,@y) :- ST(x,@y).
";

/// Variant without `x' != x`: every candidate rejects itself.
pub const SPANNING_TREE_NETLOG_SELF_REJECT: &str = "\
^ST(x,@y) :- G(@x,y); ReqNode(@x).
ST(x,@y) :- !existST(@y); delay(x,@y); !rej(x,@y).
^askST(x,@y) :- ST(w,@x); G(@x,y); w != y.
existST(@y) :- ST(x,@y).
rej(x',@y) :- askST(x,@y); askST(x',@y); x' >= x.
delay(x,@y) :- askST(x,@y).
ST(x,@y) :- ST(x,@y).
";

/// On-demand routing in Netlog. `dest(d)` carries no holding marker: the
/// destination is a query parameter known everywhere.
pub const AODV_NETLOG: &str = "\
^RouteReq(x,@y,d) :- G(@x,y); ReqNode(@x); dest(d).
RouteReq(x,@y,d) :- askRouteReq(x,@y,d); !existRR(@y,d).
^askRouteReq(x,@y,d) :- RouteReq(w,@x,d); G(@x,y); x != d; w != y.
existRR(@y,d) :- RouteReq(w',@y,d).
^Nexthop(@x,d,d) :- RouteReq(x,@d,d); G(@d,x).
^Nexthop(@x,y,d) :- RouteReq(x,@y,d); Nexthop(@y,z,d); G(@y,x).
RouteReq(x,@y,d) :- RouteReq(x,@y,d).
Nexthop(@x,d,d) :- Nexthop(@x,d,d).
";

pub fn netlog(text: &str) -> Program {
    parse_program(text, Dialect::Netlog).expect("corpus program parses")
}

pub const TC_DATALOG: &str = "T(x,y) :- G(x,y).\nT(x,y) :- G(x,z), T(z,y).\n";

/// Same generation over the undirected graph: two nodes with a common
/// neighbour, closed under stepping both sides one edge.
pub const SAME_GENERATION_DATALOG: &str = "\
SG(x,y) :- G(p,x), G(p,y).
SG(x,y) :- G(a,x), SG(a,b), G(b,y).
";

/// Inflationary win/move game with negation.
pub const WIN_DATALOG: &str = "W(x) :- G(x,y), !W(y).\n";

/// FO formulas over G and the constants 1 and 2.
pub const FO_FORMULAS: [&str; 12] = [
    "exists y. G(x,y)",
    "G(x,y)",
    "forall y. (!G(x,y) | exists z. (G(y,z) & z != x))",
    "exists x. exists y. G(x,y)",
    "forall x. exists y. G(x,y)",
    "exists y. exists z. (G(x,y) & G(y,z) & x != z)",
    "forall y. (!G(x,y) | y >= x)",
    "G(x,1)",
    "x != y & exists z. (G(x,z) & G(z,y))",
    "forall x. forall y. (!G(x,y) | exists z. (G(x,z) & G(z,y)))",
    "!(exists y. (G(x,y) & G(y,2)))",
    "exists y. (G(x,y) & forall z. (!G(y,z) | z = x))",
];

pub fn fo_formulas() -> Vec<Formula> {
    FO_FORMULAS.iter().map(|t| parse_formula(t).expect("corpus formula parses")).collect()
}

pub fn datalog(text: &str) -> Program {
    parse_program(text, Dialect::Datalog).expect("corpus program parses")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::fixpoint_stats;

    #[test]
    fn corpus_parses() {
        for q in [transitive_closure(), olsr(), spanning_tree(), route_request(), next_hop()] {
            assert!(fixpoint_stats(&q).w >= 3, "{q}");
        }
        for p in [OLSR_NETLOG, OLSR_NETLOG_NARROW_COPY, SPANNING_TREE_NETLOG, SPANNING_TREE_NETLOG_SELF_REJECT, AODV_NETLOG] {
            netlog(p);
        }
        for p in [TC_DATALOG, SAME_GENERATION_DATALOG, WIN_DATALOG] {
            datalog(p);
        }
        assert_eq!(spanning_tree().arity(), 2);
        assert_eq!(fo_formulas().len(), 12);
    }
}
