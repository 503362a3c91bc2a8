//! Communication graph: undirected edges, benign/Byzantine labeling,
//! connectivity of the benign induced subgraph, and the path queries the
//! targeted-injection attack needs.
//!
//! Node ids are dense `0..n`; benign nodes come first, Byzantine nodes are
//! appended after them by `generate`.

use std::collections::VecDeque;
use std::io::Write;

use rand::Rng;

use crate::error::{Error, Result};

const MAX_GENERATION_ATTEMPTS: usize = 1000;

/// Immutable undirected graph with a Byzantine subset. Freely shareable
/// across threads once built.
#[derive(Debug, Clone)]
pub struct Topology {
    adjacency: Vec<Vec<usize>>,
    byzantine: Vec<bool>,
}

impl Topology {
    /// Build a topology from explicit undirected edges. Edges are stored
    /// symmetrically; self-loops and out-of-range ids are rejected.
    /// Connectivity of the benign subgraph is not enforced here (use
    /// [`Topology::benign_connected`]); `generate` does enforce it.
    pub fn new(n: usize, edges: &[(usize, usize)], byzantine: &[usize]) -> Result<Self> {
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a == b {
                return Err(Error::Config(format!("self-loop on node {a}")));
            }
            if a >= n || b >= n {
                return Err(Error::Config(format!(
                    "edge ({a}, {b}) references a node outside 0..{n}"
                )));
            }
            if !adjacency[a].contains(&b) {
                adjacency[a].push(b);
                adjacency[b].push(a);
            }
        }
        for row in adjacency.iter_mut() {
            row.sort_unstable();
        }
        let mut flags = vec![false; n];
        for &b in byzantine {
            if b >= n {
                return Err(Error::Config(format!(
                    "byzantine id {b} outside 0..{n}"
                )));
            }
            flags[b] = true;
        }
        Ok(Topology {
            adjacency,
            byzantine: flags,
        })
    }

    /// Generate a random topology: benign pairs are connected independently
    /// with probability `connection_ratio`, redrawing (up to a bounded number
    /// of attempts) until the benign subgraph is connected. Byzantine nodes
    /// are then appended, each attached to every benign node independently
    /// with the same probability, with at least one edge forced.
    ///
    /// The Byzantine ratio is byzantine count over total count, so
    /// `ceil(n_benign * ratio / (1 - ratio))` Byzantine nodes are added.
    pub fn generate<R: Rng>(
        n_benign: usize,
        connection_ratio: f64,
        byzantine_ratio: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if n_benign < 2 {
            return Err(Error::Config(format!(
                "need at least 2 benign nodes, got {n_benign}"
            )));
        }
        if !(connection_ratio > 0.0 && connection_ratio <= 1.0) {
            return Err(Error::Config(format!(
                "connection_ratio must be in (0, 1], got {connection_ratio}"
            )));
        }
        if !(0.0..1.0).contains(&byzantine_ratio) {
            return Err(Error::Config(format!(
                "byzantine_ratio must be in [0, 1), got {byzantine_ratio}"
            )));
        }

        let n_byz = if byzantine_ratio == 0.0 {
            0
        } else {
            ceil_snapped(n_benign as f64 * byzantine_ratio / (1.0 - byzantine_ratio))
        };
        let n_total = n_benign + n_byz;

        for _ in 0..MAX_GENERATION_ATTEMPTS {
            let mut adjacency = vec![Vec::new(); n_total];
            for i in 0..n_benign {
                for j in (i + 1)..n_benign {
                    if rng.random_bool(connection_ratio) {
                        adjacency[i].push(j);
                        adjacency[j].push(i);
                    }
                }
            }
            if !connected(&adjacency, &(0..n_benign).collect::<Vec<_>>()) {
                continue;
            }
            for b in n_benign..n_total {
                for i in 0..n_benign {
                    if rng.random_bool(connection_ratio) {
                        adjacency[b].push(i);
                        adjacency[i].push(b);
                    }
                }
                if adjacency[b].is_empty() {
                    let i = rng.random_range(0..n_benign);
                    adjacency[b].push(i);
                    adjacency[i].push(b);
                }
            }
            for row in adjacency.iter_mut() {
                row.sort_unstable();
            }
            let mut byzantine = vec![false; n_total];
            for flag in byzantine.iter_mut().skip(n_benign) {
                *flag = true;
            }
            return Ok(Topology {
                adjacency,
                byzantine,
            });
        }
        Err(Error::Generation {
            attempts: MAX_GENERATION_ATTEMPTS,
        })
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_byzantine(&self, node: usize) -> bool {
        self.byzantine[node]
    }

    pub fn benign_ids(&self) -> Vec<usize> {
        (0..self.node_count())
            .filter(|&i| !self.byzantine[i])
            .collect()
    }

    pub fn byzantine_ids(&self) -> Vec<usize> {
        (0..self.node_count())
            .filter(|&i| self.byzantine[i])
            .collect()
    }

    /// Neighbor ids of a node, ascending.
    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    /// All undirected edges as `(low, high)` pairs, lexicographically sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, row) in self.adjacency.iter().enumerate() {
            for &j in row {
                if i < j {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// True iff the subgraph induced by the benign nodes is connected
    /// (vacuously true for a single benign node).
    pub fn benign_connected(&self) -> bool {
        connected(&self.adjacency_filtered(|i| !self.byzantine[i]), &self.benign_ids())
    }

    fn adjacency_filtered<F: Fn(usize) -> bool>(&self, keep: F) -> Vec<Vec<usize>> {
        self.adjacency
            .iter()
            .enumerate()
            .map(|(i, row)| {
                if keep(i) {
                    row.iter().copied().filter(|&j| keep(j)).collect()
                } else {
                    Vec::new()
                }
            })
            .collect()
    }

    /// One shortest path between two nodes, endpoints included. Ties break
    /// toward the lowest next-node id, which makes the result the
    /// lexicographically smallest shortest path.
    pub fn shortest_path(&self, from: usize, to: usize) -> Result<Vec<usize>> {
        self.shortest_path_filtered(from, to, |_| true)
    }

    /// Shortest path whose interior nodes are all benign; the endpoints may
    /// have either role. Used by the targeted-injection construction, which
    /// relies on propagation through benign nodes only.
    pub fn shortest_path_through_benign(&self, from: usize, to: usize) -> Result<Vec<usize>> {
        self.shortest_path_filtered(from, to, |i| !self.byzantine[i] || i == from || i == to)
    }

    fn shortest_path_filtered<F: Fn(usize) -> bool>(
        &self,
        from: usize,
        to: usize,
        allowed: F,
    ) -> Result<Vec<usize>> {
        let n = self.node_count();
        if from >= n || to >= n {
            return Err(Error::Config(format!(
                "path endpoints ({from}, {to}) outside 0..{n}"
            )));
        }
        // Distances from `to`, then a greedy lowest-id descent from `from`.
        let dist = bfs_distances(&self.adjacency, to, &allowed);
        if dist[from] == usize::MAX {
            return Err(Error::NoPath { from, to });
        }
        let mut path = vec![from];
        let mut current = from;
        while current != to {
            let next = self.adjacency[current]
                .iter()
                .copied()
                .filter(|&j| allowed(j) && dist[j] + 1 == dist[current])
                .min()
                .expect("reachable node has a next hop");
            path.push(next);
            current = next;
        }
        Ok(path)
    }

    /// Maximum over benign pairs of the shortest-path length within the
    /// benign subgraph. Errors if that subgraph is disconnected.
    pub fn benign_diameter(&self) -> Result<usize> {
        let benign = self.benign_ids();
        let adjacency = self.adjacency_filtered(|i| !self.byzantine[i]);
        let mut diameter = 0;
        for &start in &benign {
            let dist = bfs_distances(&adjacency, start, &|_| true);
            for &other in &benign {
                if dist[other] == usize::MAX {
                    return Err(Error::NoPath {
                        from: start,
                        to: other,
                    });
                }
                diameter = diameter.max(dist[other]);
            }
        }
        Ok(diameter)
    }

    /// Write the graph as an edge-list text file: one `<id> <id>` line per
    /// edge (lexicographic order), preceded by a comment naming the
    /// Byzantine ids. Benign nodes occupy the low ids.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> Result<()> {
        let byz = self.byzantine_ids();
        let ids: Vec<String> = byz.iter().map(|b| b.to_string()).collect();
        writeln!(
            out,
            "# nodes: {} benign, {} byzantine [{}]",
            self.benign_ids().len(),
            byz.len(),
            ids.join(" ")
        )?;
        for (a, b) in self.edges() {
            writeln!(out, "{a} {b}")?;
        }
        Ok(())
    }
}

fn bfs_distances<F: Fn(usize) -> bool>(
    adjacency: &[Vec<usize>],
    start: usize,
    allowed: &F,
) -> Vec<usize> {
    let mut dist = vec![usize::MAX; adjacency.len()];
    if !allowed(start) {
        return dist;
    }
    dist[start] = 0;
    let mut queue = VecDeque::from([start]);
    while let Some(u) = queue.pop_front() {
        for &v in &adjacency[u] {
            if allowed(v) && dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    dist
}

fn connected(adjacency: &[Vec<usize>], members: &[usize]) -> bool {
    match members.first() {
        None => true,
        Some(&start) => {
            let dist = bfs_distances(adjacency, start, &|_| true);
            members.iter().all(|&m| dist[m] != usize::MAX)
        }
    }
}

/// Ceiling that first snaps values within 1e-9 of an integer onto it, so
/// products like `10 * 0.3 / 0.7` land on their real-arithmetic value.
pub(crate) fn ceil_snapped(x: f64) -> usize {
    let snapped = if (x - x.round()).abs() < 1e-9 {
        x.round()
    } else {
        x.ceil()
    };
    snapped as usize
}

/// Floor with the same integer snapping as [`ceil_snapped`].
pub(crate) fn floor_snapped(x: f64) -> usize {
    let snapped = if (x - x.round()).abs() < 1e-9 {
        x.round()
    } else {
        x.floor()
    };
    snapped as usize
}
