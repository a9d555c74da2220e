use crate::logic::NodeId;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("graph is disconnected")]
    Disconnected,
    #[error("node {node} has degree {degree} above the bound {bound}")]
    Degree { node: NodeId, degree: usize, bound: usize },
    #[error("self-loop on node {0}")]
    SelfLoop(NodeId),
    #[error("node {0} is not in 1..=n")]
    BadNode(NodeId),
    #[error("graph needs at least one node")]
    Empty,
}

/// Finite connected undirected graph on nodes 1..=n with unary (or wider)
/// input facts. Distances and Δ are computed at construction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    adj: Vec<Vec<NodeId>>,
    dist: Vec<Vec<u32>>,
    degree_bound: usize,
    diameter: u32,
    facts: BTreeMap<String, BTreeSet<Vec<NodeId>>>,
}

impl Graph {
    pub fn new(n: usize, edges: &[(NodeId, NodeId)], degree_bound: Option<usize>) -> Result<Graph, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let mut adj = vec![BTreeSet::new(); n];
        for &(u, v) in edges {
            for x in [u, v] {
                if x == 0 || x as usize > n {
                    return Err(GraphError::BadNode(x));
                }
            }
            if u == v {
                return Err(GraphError::SelfLoop(u));
            }
            adj[u as usize - 1].insert(v);
            adj[v as usize - 1].insert(u);
        }
        let adj: Vec<Vec<NodeId>> = adj.into_iter().map(|s| s.into_iter().collect()).collect();
        let max_deg = adj.iter().map(Vec::len).max().unwrap_or(0);
        let bound = degree_bound.unwrap_or(max_deg);
        for (i, a) in adj.iter().enumerate() {
            if a.len() > bound {
                return Err(GraphError::Degree { node: i as NodeId + 1, degree: a.len(), bound });
            }
        }
        let mut dist = Vec::with_capacity(n);
        for s in 0..n {
            let d = bfs(&adj, s);
            if d.contains(&u32::MAX) {
                return Err(GraphError::Disconnected);
            }
            dist.push(d);
        }
        let diameter = dist.iter().flat_map(|r| r.iter().copied()).max().unwrap_or(0);
        Ok(Graph { n, adj, dist, degree_bound: bound, diameter, facts: BTreeMap::new() })
    }

    /// Edge-list text: `n m`, m lines `u v`, optional `@facts` section with
    /// `Pred node...` lines (a bare `Pred` declares an empty unary relation).
    pub fn parse(text: &str, degree_bound: Option<usize>) -> Result<Graph, GraphError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let bad = |line: usize, msg: &str| GraphError::Malformed { line, msg: msg.to_string() };
        let (hl, header) = lines.next().ok_or_else(|| bad(1, "missing header `n m`"))?;
        let nums: Vec<usize> =
            header.split_whitespace().map(|t| t.parse().map_err(|_| bad(hl, "expected integers"))).collect::<Result<_, _>>()?;
        let [n, m] = nums[..] else { return Err(bad(hl, "header must be `n m`")) };
        let mut edges = Vec::with_capacity(m);
        for _ in 0..m {
            let (ln, l) = lines.next().ok_or_else(|| bad(hl, "fewer edge lines than declared"))?;
            let e: Vec<NodeId> =
                l.split_whitespace().map(|t| t.parse().map_err(|_| bad(ln, "expected `u v`"))).collect::<Result<_, _>>()?;
            let [u, v] = e[..] else { return Err(bad(ln, "expected `u v`")) };
            edges.push((u, v));
        }
        let mut g = Graph::new(n, &edges, degree_bound)?;
        if let Some((ln, l)) = lines.next() {
            if l != "@facts" {
                return Err(bad(ln, "expected `@facts` or end of file"));
            }
            for (ln, l) in lines {
                let mut parts = l.split_whitespace();
                let pred = parts.next().unwrap().to_string();
                let args: Vec<NodeId> =
                    parts.map(|t| t.parse().map_err(|_| bad(ln, "fact arguments must be node ids"))).collect::<Result<_, _>>()?;
                if args.is_empty() {
                    g.declare(&pred);
                    continue;
                }
                if let Some(a) = g.facts.get(&pred).and_then(|s| s.iter().next()) {
                    if a.len() != args.len() {
                        return Err(bad(ln, "fact arity differs from earlier facts"));
                    }
                }
                for &a in &args {
                    if a == 0 || a as usize > n {
                        return Err(GraphError::BadNode(a));
                    }
                }
                g.facts.entry(pred).or_default().insert(args);
            }
        }
        Ok(g)
    }

    pub fn to_text(&self) -> String {
        let edges = self.edges();
        let mut s = format!("{} {}\n", self.n, edges.len());
        for (u, v) in &edges {
            let _ = writeln!(s, "{u} {v}");
        }
        if !self.facts.is_empty() {
            s.push_str("@facts\n");
            for (p, ts) in &self.facts {
                if ts.is_empty() {
                    let _ = writeln!(s, "{p}");
                }
                for t in ts {
                    let args: Vec<String> = t.iter().map(|a| a.to_string()).collect();
                    let _ = writeln!(s, "{p} {}", args.join(" "));
                }
            }
        }
        s
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + Clone {
        1..=self.n as NodeId
    }

    pub fn contains(&self, a: NodeId) -> bool {
        a >= 1 && a as usize <= self.n
    }

    pub fn neighbors(&self, a: NodeId) -> &[NodeId] {
        &self.adj[a as usize - 1]
    }

    pub fn degree(&self, a: NodeId) -> usize {
        self.adj[a as usize - 1].len()
    }

    pub fn degree_bound(&self) -> usize {
        self.degree_bound
    }

    pub fn has_edge(&self, a: NodeId, b: NodeId) -> bool {
        self.contains(a) && self.contains(b) && self.adj[a as usize - 1].binary_search(&b).is_ok()
    }

    /// Edges with u < v.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        self.nodes().flat_map(|u| self.neighbors(u).iter().filter(move |&&v| v > u).map(move |&v| (u, v))).collect()
    }

    pub fn dist(&self, a: NodeId, b: NodeId) -> u32 {
        self.dist[a as usize - 1][b as usize - 1]
    }

    /// Δ
    pub fn diameter(&self) -> u32 {
        self.diameter
    }

    pub fn facts(&self) -> &BTreeMap<String, BTreeSet<Vec<NodeId>>> {
        &self.facts
    }

    pub fn relation(&self, pred: &str) -> Option<&BTreeSet<Vec<NodeId>>> {
        self.facts.get(pred)
    }

    pub fn has_fact(&self, pred: &str, args: &[NodeId]) -> bool {
        self.facts.get(pred).is_some_and(|s| s.contains(args))
    }

    pub fn declare(&mut self, pred: &str) {
        self.facts.entry(pred.to_string()).or_default();
    }

    pub fn add_fact(&mut self, pred: &str, args: Vec<NodeId>) {
        self.facts.entry(pred.to_string()).or_default().insert(args);
    }

    pub fn with_fact(mut self, pred: &str, args: Vec<NodeId>) -> Graph {
        self.add_fact(pred, args);
        self
    }

    /// Arity of every known relation, G included. Declared-but-empty
    /// relations count as unary.
    pub fn signature(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        out.insert("G".to_string(), 2);
        for (p, ts) in &self.facts {
            out.insert(p.clone(), ts.iter().next().map_or(1, Vec::len));
        }
        out
    }

    /// Induced subgraph on N^k(a) with distances from a.
    pub fn neighborhood(&self, a: NodeId, k: u32) -> Neighborhood {
        let nodes: Vec<NodeId> = self.nodes().filter(|&b| self.dist(a, b) <= k).collect();
        let dist = nodes.iter().map(|&b| (b, self.dist(a, b))).collect();
        let edges = self.edges().into_iter().filter(|(u, v)| nodes.contains(u) && nodes.contains(v)).collect();
        Neighborhood { center: a, nodes, dist, edges }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Neighborhood {
    pub center: NodeId,
    pub nodes: Vec<NodeId>,
    pub dist: BTreeMap<NodeId, u32>,
    pub edges: BTreeSet<(NodeId, NodeId)>,
}

fn bfs(adj: &[Vec<NodeId>], s: usize) -> Vec<u32> {
    let mut d = vec![u32::MAX; adj.len()];
    d[s] = 0;
    let mut q = VecDeque::from([s]);
    while let Some(u) = q.pop_front() {
        for &v in &adj[u] {
            let v = v as usize - 1;
            if d[v] == u32::MAX {
                d[v] = d[u] + 1;
                q.push_back(v);
            }
        }
    }
    d
}
