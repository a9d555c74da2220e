//! Port traces and the neighbourhood they reconstruct.

use crate::logic::NodeId;
use crate::oracle::Graph;
use crate::simnet::Network;
use std::collections::{BTreeMap, BTreeSet, VecDeque};

pub type Port = u16;

/// Alternating out-port / in-port pairs of a walk from the owner.
pub type Trace = Vec<Port>;

/// Cancel immediate reversals (leave by the port just entered).
pub fn reduce(t: &[Port]) -> Trace {
    let mut out: Trace = Vec::with_capacity(t.len());
    for pair in t.chunks(2) {
        let n = out.len();
        if n >= 2 && pair[0] == out[n - 1] && pair[1] == out[n - 2] {
            out.truncate(n - 2);
        } else {
            out.extend_from_slice(pair);
        }
    }
    out
}

/// The same walk traversed from its far end.
pub fn reverse(t: &[Port]) -> Trace {
    t.iter().rev().copied().collect()
}

/// Walk `t` from `a` in the real network; `None` if a port is missing or
/// an in-port does not match.
pub fn follow(net: &Network, a: NodeId, t: &[Port]) -> Option<NodeId> {
    let mut at = a;
    for pair in t.chunks(2) {
        let out = pair[0] as usize;
        if out == 0 || out > net.graph().degree(at) {
            return None;
        }
        let next = net.neighbor(at, out);
        if net.port_to(next, at) != Some(pair[1] as usize) {
            return None;
        }
        at = next;
    }
    Some(at)
}

/// What one node reported about itself for one collected walk.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Entry {
    pub trace: Trace,
    /// Walks from the same collector that reached this node.
    pub tracelist: Vec<Trace>,
    pub name: Option<NodeId>,
    pub unary: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LocalNode {
    /// Shortest, then least, trace of the class: the node's local name.
    pub rep: Trace,
    pub dist: u32,
    pub name: Option<NodeId>,
    pub unary: BTreeSet<String>,
}

/// The ≈-quotient of the collected traces. Node 0 is the owner.
#[derive(Clone, Debug)]
pub struct LocalTopology {
    pub nodes: Vec<LocalNode>,
    /// Undirected, stored with the smaller index first.
    pub edges: BTreeSet<(usize, usize)>,
    pub radius: u32,
    /// Ports on each known edge, directed: (out at u, in at v).
    ports: BTreeMap<(usize, usize), (Port, Port)>,
    index: BTreeMap<Trace, usize>,
}

impl LocalTopology {
    /// Quotient the entries and keep classes within `radius` hops.
    pub fn build(entries: &[Entry], radius: u32) -> LocalTopology {
        let mut traces: BTreeMap<&Trace, usize> = BTreeMap::new();
        for e in entries {
            let n = traces.len();
            traces.entry(&e.trace).or_insert(n);
        }
        let mut parent: Vec<usize> = (0..traces.len()).collect();
        fn find(p: &mut [usize], i: usize) -> usize {
            if p[i] != i {
                let r = find(p, p[i]);
                p[i] = r;
            }
            p[i]
        }
        for e in entries {
            let a = traces[&e.trace];
            for s in &e.tracelist {
                if let Some(&b) = traces.get(s) {
                    let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
        let mut classes: BTreeMap<usize, Vec<&Trace>> = BTreeMap::new();
        for (t, &i) in &traces {
            classes.entry(find(&mut parent, i)).or_default().push(t);
        }
        let mut info: BTreeMap<&Trace, &Entry> = BTreeMap::new();
        for e in entries {
            info.entry(&e.trace).or_insert(e);
        }
        let mut nodes: Vec<(LocalNode, Vec<&Trace>)> = classes
            .into_values()
            .map(|ts| {
                let rep = (*ts.iter().min_by(|a, b| (a.len(), a).cmp(&(b.len(), b))).unwrap()).clone();
                let mut name = None;
                let mut unary = BTreeSet::new();
                for t in &ts {
                    let e = info[t];
                    name = name.or(e.name);
                    unary.extend(e.unary.iter().cloned());
                }
                (LocalNode { dist: rep.len() as u32 / 2, rep, name, unary }, ts)
            })
            .filter(|(n, _)| n.dist <= radius)
            .collect();
        nodes.sort_by(|a, b| (a.0.dist, &a.0.rep).cmp(&(b.0.dist, &b.0.rep)));
        let mut index = BTreeMap::new();
        for (i, (_, ts)) in nodes.iter().enumerate() {
            for t in ts {
                index.insert((*t).clone(), i);
            }
        }
        let mut edges = BTreeSet::new();
        let mut ports = BTreeMap::new();
        for t in index.keys().filter(|t| !t.is_empty()) {
            let (Some(&u), Some(&v)) = (index.get(&t[..t.len() - 2]), index.get(t)) else { continue };
            if u != v {
                edges.insert((u.min(v), u.max(v)));
                let (o, i) = (t[t.len() - 2], t[t.len() - 1]);
                ports.insert((u, v), (o, i));
                ports.insert((v, u), (i, o));
            }
        }
        let nodes = nodes.into_iter().map(|(n, _)| n).collect();
        LocalTopology { nodes, edges, radius, ports, index }
    }

    pub fn center(&self) -> usize {
        0
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn adjacent(&self, u: usize, v: usize) -> bool {
        self.edges.contains(&(u.min(v), u.max(v)))
    }

    /// Node reached by walking `t` from the owner.
    pub fn resolve(&self, t: &[Port]) -> Option<usize> {
        self.index.get(&reduce(t)).copied()
    }

    /// Node reached by walking `t` from node `from`.
    pub fn follow_from(&self, from: usize, t: &[Port]) -> Option<usize> {
        let mut w = self.nodes[from].rep.clone();
        w.extend_from_slice(t);
        self.resolve(&w)
    }

    pub fn within(&self, k: u32) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(move |&i| self.nodes[i].dist <= k)
    }

    /// A shortest walk between two known nodes, as a port trace from `from`.
    pub fn path(&self, from: usize, to: usize) -> Option<Trace> {
        let mut prev: BTreeMap<usize, usize> = BTreeMap::new();
        let mut q = VecDeque::from([from]);
        prev.insert(from, from);
        while let Some(u) = q.pop_front() {
            if u == to {
                break;
            }
            for (&(a, b), _) in self.ports.range((u, 0)..(u + 1, 0)) {
                debug_assert_eq!(a, u);
                if let std::collections::btree_map::Entry::Vacant(e) = prev.entry(b) {
                    e.insert(u);
                    q.push_back(b);
                }
            }
        }
        prev.get(&to)?;
        let mut hops = Vec::new();
        let mut at = to;
        while at != from {
            let p = prev[&at];
            hops.push(self.ports[&(p, at)]);
            at = p;
        }
        Some(hops.into_iter().rev().flat_map(|(o, i)| [o, i]).collect())
    }

    /// Map each node to the real node its name leads to (test oracle).
    pub fn ground(&self, net: &Network, owner: NodeId) -> Vec<Option<NodeId>> {
        self.nodes.iter().map(|n| follow(net, owner, &n.rep)).collect()
    }
}

#[derive(Clone, Copy, Debug, thiserror::Error, PartialEq, Eq)]
#[error("named node is outside the {radius}-neighbourhood of the target")]
pub struct OutOfFrame {
    pub radius: u32,
}

/// Rename `name`, a node of `from`'s frame, into the frame of `target`
/// (also a node of `from`, whose own topology is `to`), restricted to
/// radius `k`.
pub fn translate_name(from: &LocalTopology, to: &LocalTopology, target: usize, name: usize, k: u32) -> Result<usize, OutOfFrame> {
    let err = OutOfFrame { radius: k };
    let walk = from.path(target, name).ok_or(err)?;
    let there = to.resolve(&walk).ok_or(err)?;
    if to.nodes[there].dist > k {
        return Err(err);
    }
    Ok(there)
}

/// True iff the reconstruction names every node of N^k(owner) exactly
/// once and has exactly the induced edges. The naming is an explicit
/// centre-preserving isomorphism.
pub fn matches_neighborhood(net: &Network, owner: NodeId, top: &LocalTopology, k: u32) -> bool {
    let nb = net.graph().neighborhood(owner, k);
    let ground = top.ground(net, owner);
    let Some(ground) = ground.into_iter().collect::<Option<Vec<NodeId>>>() else { return false };
    let distinct: BTreeSet<NodeId> = ground.iter().copied().collect();
    if ground.first() != Some(&owner) || distinct.len() != ground.len() {
        return false;
    }
    if distinct != nb.nodes.iter().copied().collect() {
        return false;
    }
    let edges: BTreeSet<(NodeId, NodeId)> = top
        .edges
        .iter()
        .map(|&(u, v)| (ground[u].min(ground[v]), ground[u].max(ground[v])))
        .collect();
    let want: BTreeSet<(NodeId, NodeId)> = nb.edges.iter().map(|&(u, v)| (u.min(v), u.max(v))).collect();
    edges == want
}

/// Labels distinct inside every k-neighbourhood.
pub fn check_locally_consistent(g: &Graph, labels: &[NodeId], k: u32) -> bool {
    labels.len() == g.n()
        && g.nodes().all(|a| {
            let mut seen = BTreeSet::new();
            g.nodes().filter(|&b| g.dist(a, b) <= k).all(|b| seen.insert(labels[b as usize - 1]))
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduce_and_reverse() {
        assert_eq!(reduce(&[1, 2, 2, 1]), Vec::<Port>::new());
        assert_eq!(reduce(&[1, 2, 3, 1, 1, 3]), vec![1, 2]);
        assert_eq!(reduce(&[1, 2, 1, 2]), vec![1, 2, 1, 2]);
        assert_eq!(reverse(&[1, 2, 3, 4]), vec![4, 3, 2, 1]);
    }

    fn entry(trace: &[Port], list: &[&[Port]]) -> Entry {
        Entry { trace: trace.to_vec(), tracelist: list.iter().map(|t| t.to_vec()).collect(), name: None, unary: vec![] }
    }

    #[test]
    fn triangle_edge_from_length_four_trace() {
        // a: port 1 -> b (b's port 1), port 2 -> c (c's port 1); b port 2 <-> c port 2
        let entries = vec![
            entry(&[], &[&[]]),
            entry(&[1, 1], &[&[1, 1], &[2, 1, 2, 2]]),
            entry(&[2, 1], &[&[2, 1], &[1, 1, 2, 2]]),
            entry(&[1, 1, 2, 2], &[&[2, 1], &[1, 1, 2, 2]]),
            entry(&[2, 1, 2, 2], &[&[1, 1], &[2, 1, 2, 2]]),
        ];
        let top = LocalTopology::build(&entries, 1);
        assert_eq!(top.len(), 3);
        assert_eq!(top.edges, BTreeSet::from([(0, 1), (0, 2), (1, 2)]));
        assert_eq!(top.resolve(&[1, 1, 2, 2]), Some(2));
        assert_eq!(top.path(1, 2), Some(vec![2, 2]));
    }

    #[test]
    fn consistency_by_enumeration() {
        let g = crate::oracle::fixtures::ring(6);
        let labels = [1, 2, 3, 1, 2, 3];
        assert!(check_locally_consistent(&g, &labels, 1));
        assert!(!check_locally_consistent(&g, &labels, 2));
        assert!(check_locally_consistent(&g, &[1, 2, 3, 4, 5, 6], 3));
    }
}
