//! Graph families used by tests and the `fixtures` CLI command.

use super::Graph;
use crate::logic::NodeId;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn path(n: usize) -> Graph {
    let edges: Vec<_> = (1..n as NodeId).map(|i| (i, i + 1)).collect();
    Graph::new(n, &edges, None).expect("path")
}

/// Cycle on n >= 3 nodes.
pub fn ring(n: usize) -> Graph {
    assert!(n >= 3, "ring needs at least 3 nodes");
    let mut edges: Vec<_> = (1..n as NodeId).map(|i| (i, i + 1)).collect();
    edges.push((n as NodeId, 1));
    Graph::new(n, &edges, None).expect("ring")
}

/// Node 1 joined to nodes 2..=n.
pub fn star(n: usize) -> Graph {
    let edges: Vec<_> = (2..=n as NodeId).map(|i| (1, i)).collect();
    Graph::new(n, &edges, None).expect("star")
}

/// s x s grid, row-major ids.
pub fn grid(s: usize) -> Graph {
    let id = |r: usize, c: usize| (r * s + c + 1) as NodeId;
    let mut edges = Vec::new();
    for r in 0..s {
        for c in 0..s {
            if c + 1 < s {
                edges.push((id(r, c), id(r, c + 1)));
            }
            if r + 1 < s {
                edges.push((id(r, c), id(r + 1, c)));
            }
        }
    }
    Graph::new(s * s, &edges, None).expect("grid")
}

/// Every connected labeled graph on nodes 1..=n with degree at most `max_deg`.
pub fn all_connected(n: usize, max_deg: usize) -> Vec<Graph> {
    let pairs: Vec<(NodeId, NodeId)> =
        (1..=n as NodeId).flat_map(|u| (u + 1..=n as NodeId).map(move |v| (u, v))).collect();
    let mut out = Vec::new();
    for mask in 0u64..(1u64 << pairs.len()) {
        let edges: Vec<_> = pairs.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, e)| *e).collect();
        if let Ok(g) = Graph::new(n, &edges, Some(max_deg)) {
            out.push(g);
        }
    }
    out
}

/// Random connected graph with degree at most `max_deg`: a random tree plus
/// a few extra edges.
pub fn random_connected(n: usize, max_deg: usize, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut deg = vec![0usize; n + 1];
    let mut edges = Vec::new();
    let mut order: Vec<NodeId> = (1..=n as NodeId).collect();
    order.shuffle(&mut rng);
    for i in 1..n {
        let open: Vec<NodeId> = order[..i].iter().copied().filter(|&u| deg[u as usize] < max_deg).collect();
        let u = *open.choose(&mut rng).expect("degree bound too small for a tree");
        let v = order[i];
        deg[u as usize] += 1;
        deg[v as usize] += 1;
        edges.push((u.min(v), u.max(v)));
    }
    let extra = rng.gen_range(0..=n / 2);
    for _ in 0..extra * 4 {
        if edges.len() >= n - 1 + extra {
            break;
        }
        let u = rng.gen_range(1..=n as NodeId);
        let v = rng.gen_range(1..=n as NodeId);
        let e = (u.min(v), u.max(v));
        if u != v && deg[u as usize] < max_deg && deg[v as usize] < max_deg && !edges.contains(&e) {
            deg[u as usize] += 1;
            deg[v as usize] += 1;
            edges.push(e);
        }
    }
    Graph::new(n, &edges, Some(max_deg)).expect("random graph")
}

/// Greedy colouring of G^(2k): distinct labels inside every k-neighbourhood.
pub fn local_labels(g: &Graph, k: u32) -> Vec<NodeId> {
    let mut labels = vec![0; g.n()];
    for a in g.nodes() {
        let used: Vec<NodeId> =
            g.nodes().filter(|&b| b < a && g.dist(a, b) <= 2 * k).map(|b| labels[b as usize - 1]).collect();
        labels[a as usize - 1] = (1..).find(|l| !used.contains(l)).unwrap();
    }
    labels
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn family_shapes() {
        assert_eq!(ring(4).edges(), vec![(1, 2), (1, 4), (2, 3), (3, 4)]);
        assert_eq!(grid(3).n(), 9);
        assert_eq!(grid(3).edges().len(), 12);
        assert_eq!(star(5).degree(1), 4);
        assert_eq!(path(6).diameter(), 5);
    }

    #[test]
    fn exhaustive_counts() {
        // three labelled paths plus the triangle
        let three = all_connected(3, 3);
        assert_eq!(three.len(), 4);
        assert_eq!(three.iter().filter(|g| g.edges().len() == 2).count(), 3);
        assert_eq!(all_connected(4, 3).len(), 38);
        assert_eq!(all_connected(1, 3).len(), 1);
    }

    #[test]
    fn random_graphs_respect_bounds() {
        for seed in 0..50 {
            let g = random_connected(12, 3, seed);
            assert!(g.nodes().all(|a| g.degree(a) <= 3));
        }
        assert_eq!(random_connected(9, 3, 7), random_connected(9, 3, 7));
    }

    #[test]
    fn labels_are_locally_consistent() {
        let g = ring(6);
        let l = local_labels(&g, 1);
        for a in g.nodes() {
            let nb = g.neighborhood(a, 1).nodes;
            for (i, &b) in nb.iter().enumerate() {
                for &c in &nb[i + 1..] {
                    assert_ne!(l[b as usize - 1], l[c as usize - 1]);
                }
            }
        }
    }
}
