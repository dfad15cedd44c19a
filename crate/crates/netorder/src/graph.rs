//! Undirected simple graph snapshots with stable node ids.
//!
//! Nodes are dense integers `0..n` at creation; the first `n0` ids are seed
//! nodes, which are never deleted and whose labels are fixed by convention.
//! Deleting a node never renumbers the survivors: algorithms that peel the
//! graph track the current node set explicitly and report original ids.

use rand::Rng;
use std::fmt::Write as _;
use thiserror::Error;

/// Node identifier. Ids are stable for the lifetime of a snapshot.
pub type NodeId = u32;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("node {0} out of range (n = {1})")]
    OutOfRange(NodeId, usize),
    #[error("self-loop at node {0} not allowed")]
    SelfLoop(NodeId),
    #[error("duplicate edge {0}-{1}")]
    DuplicateEdge(NodeId, NodeId),
    #[error("node {0} is absent")]
    Absent(NodeId),
    #[error("node {0} is a seed node and cannot be deleted")]
    SeedDeletion(NodeId),
    #[error("mapping is not a bijection on node ids")]
    NotBijective,
    #[error("mapping moves seed node {0}")]
    MovesSeed(NodeId),
    #[error("line {0}: expected `u v`, got {1:?}")]
    Parse(usize, String),
    #[error("n0 = {0} exceeds node count {1}")]
    SeedCount(usize, usize),
}

/// Undirected simple graph with deletable non-seed nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    /// Sorted adjacency over alive neighbors only.
    adj: Vec<Vec<NodeId>>,
    alive: Vec<bool>,
    n_alive: usize,
    n0: usize,
}

impl Graph {
    /// Empty graph on `n` nodes, the first `n0` of which are seeds.
    pub fn empty(n: usize, n0: usize) -> Result<Self, GraphError> {
        if n0 > n {
            return Err(GraphError::SeedCount(n0, n));
        }
        Ok(Graph {
            adj: vec![Vec::new(); n],
            alive: vec![true; n],
            n_alive: n,
            n0,
        })
    }

    /// Graph from an explicit edge list. Rejects self-loops, duplicates and
    /// out-of-range endpoints.
    pub fn from_edges(n: usize, n0: usize, edges: &[(NodeId, NodeId)]) -> Result<Self, GraphError> {
        let mut g = Graph::empty(n, n0)?;
        for &(u, v) in edges {
            g.add_edge(u, v)?;
        }
        Ok(g)
    }

    pub fn add_edge(&mut self, u: NodeId, v: NodeId) -> Result<(), GraphError> {
        let n = self.adj.len();
        if (u as usize) >= n {
            return Err(GraphError::OutOfRange(u, n));
        }
        if (v as usize) >= n {
            return Err(GraphError::OutOfRange(v, n));
        }
        if u == v {
            return Err(GraphError::SelfLoop(u));
        }
        if !self.alive[u as usize] {
            return Err(GraphError::Absent(u));
        }
        if !self.alive[v as usize] {
            return Err(GraphError::Absent(v));
        }
        if self.has_edge(u, v) {
            return Err(GraphError::DuplicateEdge(u, v));
        }
        let pos = self.adj[u as usize].partition_point(|&w| w < v);
        self.adj[u as usize].insert(pos, v);
        let pos = self.adj[v as usize].partition_point(|&w| w < u);
        self.adj[v as usize].insert(pos, u);
        Ok(())
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.adj
            .get(u as usize)
            .is_some_and(|ns| ns.binary_search(&v).is_ok())
    }

    /// Count of alive nodes.
    pub fn n(&self) -> usize {
        self.n_alive
    }

    /// Capacity of the id space (largest ever id + 1).
    pub fn id_bound(&self) -> usize {
        self.adj.len()
    }

    pub fn n0(&self) -> usize {
        self.n0
    }

    pub fn is_seed(&self, v: NodeId) -> bool {
        (v as usize) < self.n0
    }

    pub fn contains(&self, v: NodeId) -> bool {
        self.alive.get(v as usize).copied().unwrap_or(false)
    }

    /// Alive node ids in increasing order.
    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.alive
            .iter()
            .enumerate()
            .filter(|(_, &a)| a)
            .map(|(i, _)| i as NodeId)
    }

    /// Sorted alive neighbors of `v`.
    pub fn neighbors(&self, v: NodeId) -> &[NodeId] {
        &self.adj[v as usize]
    }

    pub fn degree(&self, v: NodeId) -> usize {
        self.adj[v as usize].len()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(|ns| ns.len()).sum::<usize>() / 2
    }

    /// Edges as (min, max) pairs in lexicographic order.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for u in self.nodes() {
            for &v in self.neighbors(u) {
                if u < v {
                    out.push((u, v));
                }
            }
        }
        out
    }

    /// Size of `N(u) ∩ N(v)` via sorted-list merge: O(min(deg u, deg v))
    /// comparisons up to the shorter list's length.
    pub fn common_neighbors(&self, u: NodeId, v: NodeId) -> usize {
        let (a, b) = (self.neighbors(u), self.neighbors(v));
        let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
        if short.len() * 4 < long.len() {
            short
                .iter()
                .filter(|&&x| long.binary_search(&x).is_ok())
                .count()
        } else {
            let mut i = 0;
            let mut j = 0;
            let mut c = 0;
            while i < short.len() && j < long.len() {
                match short[i].cmp(&long[j]) {
                    std::cmp::Ordering::Less => i += 1,
                    std::cmp::Ordering::Greater => j += 1,
                    std::cmp::Ordering::Equal => {
                        c += 1;
                        i += 1;
                        j += 1;
                    }
                }
            }
            c
        }
    }

    /// Returns a copy with `v` and all incident edges removed.
    ///
    /// Seed nodes and absent nodes are contract violations.
    pub fn delete_node(&self, v: NodeId) -> Result<Graph, GraphError> {
        if !self.contains(v) {
            return Err(GraphError::Absent(v));
        }
        if self.is_seed(v) {
            return Err(GraphError::SeedDeletion(v));
        }
        let mut g = self.clone();
        for &u in &self.adj[v as usize] {
            let ns = &mut g.adj[u as usize];
            if let Ok(pos) = ns.binary_search(&v) {
                ns.remove(pos);
            }
        }
        g.adj[v as usize].clear();
        g.alive[v as usize] = false;
        g.n_alive -= 1;
        Ok(g)
    }

    /// Relabels nodes: edge (u,v) maps to (s(u), s(v)).
    pub fn apply_permutation(&self, s: &Permutation) -> Result<Graph, GraphError> {
        s.validate(self.id_bound(), self.n0)?;
        let mut g = Graph {
            adj: vec![Vec::new(); self.id_bound()],
            alive: vec![false; self.id_bound()],
            n_alive: self.n_alive,
            n0: self.n0,
        };
        for v in self.nodes() {
            g.alive[s.map(v) as usize] = true;
        }
        for (u, v) in self.edges() {
            g.add_edge(s.map(u), s.map(v))?;
        }
        Ok(g)
    }

    /// Erdős–Rényi seed graph: every unordered pair is an edge independently
    /// with probability `p0`. All nodes are seeds.
    pub fn erdos_renyi_seed(n0: usize, p0: f64, rng: &mut impl Rng) -> Graph {
        assert!((0.0..=1.0).contains(&p0), "p0 must lie in [0, 1]");
        let mut g = Graph::empty(n0, n0).expect("n0 == n");
        for u in 0..n0 as NodeId {
            for v in (u + 1)..n0 as NodeId {
                if rng.random::<f64>() < p0 {
                    g.add_edge(u, v).expect("pairs visited once");
                }
            }
        }
        g
    }

    /// Serializes to the edge-list text format. The leading comment records
    /// node count and seed size so isolated nodes survive a round trip.
    pub fn to_edge_list(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# nodes {} seed {}", self.id_bound(), self.n0);
        for (u, v) in self.edges() {
            let _ = writeln!(s, "{} {}", u, v);
        }
        s
    }
}

/// Result of lenient edge-list ingestion.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub self_loops_dropped: usize,
    pub multi_edges_dropped: usize,
}

/// Parses the edge-list text format: one `u v` pair per line, whitespace
/// separated; lines starting with `#` are comments. Multi-edges and
/// self-loops are dropped and counted. A `# nodes N seed N0` comment, when
/// present, fixes the node count and seed size; otherwise `n = max id + 1`
/// and `n0 = n0_default`.
pub fn parse_edge_list(
    text: &str,
    n0_default: usize,
) -> Result<(Graph, IngestReport), GraphError> {
    let mut pairs: Vec<(NodeId, NodeId)> = Vec::new();
    let mut declared: Option<(usize, usize)> = None;
    let mut report = IngestReport::default();
    let mut max_id: Option<NodeId> = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let toks: Vec<&str> = rest.split_whitespace().collect();
            if toks.len() == 4 && toks[0] == "nodes" && toks[2] == "seed" {
                if let (Ok(n), Ok(n0)) = (toks[1].parse(), toks[3].parse()) {
                    declared = Some((n, n0));
                }
            }
            continue;
        }
        let mut it = line.split_whitespace();
        let (u, v) = match (it.next(), it.next()) {
            (Some(a), Some(b)) => {
                let u: NodeId = a
                    .parse()
                    .map_err(|_| GraphError::Parse(lineno + 1, line.to_string()))?;
                let v: NodeId = b
                    .parse()
                    .map_err(|_| GraphError::Parse(lineno + 1, line.to_string()))?;
                (u, v)
            }
            _ => return Err(GraphError::Parse(lineno + 1, line.to_string())),
        };
        if u == v {
            report.self_loops_dropped += 1;
            continue;
        }
        max_id = Some(max_id.map_or(u.max(v), |m| m.max(u).max(v)));
        pairs.push((u.min(v), u.max(v)));
    }
    let n = match declared {
        Some((n, _)) => n,
        None => max_id.map_or(0, |m| m as usize + 1),
    };
    let n0 = declared.map_or(n0_default, |(_, n0)| n0);
    let mut g = Graph::empty(n, n0)?;
    pairs.sort_unstable();
    for w in pairs.windows(2) {
        if w[0] == w[1] {
            report.multi_edges_dropped += 1;
        }
    }
    pairs.dedup();
    for (u, v) in pairs {
        g.add_edge(u, v)?;
    }
    Ok((g, report))
}

/// Bijection on node ids that fixes every seed id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    map: Vec<NodeId>,
}

impl Permutation {
    pub fn identity(n: usize) -> Permutation {
        Permutation {
            map: (0..n as NodeId).collect(),
        }
    }

    /// Builds from an image vector `map[v] = s(v)`, checking bijectivity and
    /// that ids below `n0` are fixed.
    pub fn new(map: Vec<NodeId>, n0: usize) -> Result<Permutation, GraphError> {
        let p = Permutation { map };
        p.validate(p.map.len(), n0)?;
        Ok(p)
    }

    fn validate(&self, n: usize, n0: usize) -> Result<(), GraphError> {
        if self.map.len() != n {
            return Err(GraphError::NotBijective);
        }
        let mut seen = vec![false; n];
        for (v, &img) in self.map.iter().enumerate() {
            let Some(slot) = seen.get_mut(img as usize) else {
                return Err(GraphError::NotBijective);
            };
            if *slot {
                return Err(GraphError::NotBijective);
            }
            *slot = true;
            if v < n0 && img as usize != v {
                return Err(GraphError::MovesSeed(v as NodeId));
            }
        }
        Ok(())
    }

    pub fn map(&self, v: NodeId) -> NodeId {
        self.map[v as usize]
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Permutation) -> Permutation {
        let map = other.map.iter().map(|&v| self.map(v)).collect();
        Permutation { map }
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0; self.map.len()];
        for (v, &img) in self.map.iter().enumerate() {
            inv[img as usize] = v as NodeId;
        }
        Permutation { map: inv }
    }

    /// Uniform random permutation of the non-seed ids, fixing seeds.
    pub fn random_seed_fixing(n: usize, n0: usize, rng: &mut impl Rng) -> Permutation {
        let mut tail: Vec<NodeId> = (n0 as NodeId..n as NodeId).collect();
        // Fisher-Yates
        for i in (1..tail.len()).rev() {
            let j = rng.random_range(0..=i);
            tail.swap(i, j);
        }
        let mut map: Vec<NodeId> = (0..n0 as NodeId).collect();
        map.extend(tail);
        Permutation { map }
    }
}
