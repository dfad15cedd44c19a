//! Strict partial orders over node ids, ordered clusters, and the density
//! and precision measures used to score inferred orders against ground truth.
//!
//! A relation pair `(u, v)` means "u is older than v". Density is the
//! fraction of ground-truth-comparable pairs the order makes comparable;
//! precision is the fraction of jointly comparable pairs directed the same
//! way as the ground truth.

use crate::graph::NodeId;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OrderError {
    #[error("node {0} out of range (n = {1})")]
    OutOfRange(NodeId, usize),
    #[error("reflexive pair ({0}, {0}) not allowed")]
    Reflexive(NodeId),
    #[error("antisymmetry violation: both ({0}, {1}) and ({1}, {0})")]
    Antisymmetry(NodeId, NodeId),
    #[error("cycle detected: {}", format_cycle(.0))]
    Cycle(Vec<NodeId>),
    #[error("ground truth has no comparable pairs")]
    EmptyGroundTruth,
    #[error("no pairs comparable in both orders")]
    EmptyOverlap,
    #[error("clusters do not partition the node set")]
    BadClustering,
    #[error("line {0}: expected `u < v`, got {1:?}")]
    Parse(usize, String),
}

fn format_cycle(c: &[NodeId]) -> String {
    let mut s = String::new();
    for (i, v) in c.iter().enumerate() {
        if i > 0 {
            s.push_str(" < ");
        }
        let _ = write!(s, "{}", v);
    }
    if let Some(first) = c.first() {
        let _ = write!(s, " < {}", first);
    }
    s
}

const WORD: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq)]
struct BitMatrix {
    n: usize,
    words: usize,
    rows: Vec<u64>,
}

impl BitMatrix {
    fn new(n: usize) -> Self {
        let words = n.div_ceil(WORD);
        BitMatrix {
            n,
            words,
            rows: vec![0; n * words],
        }
    }
    #[inline]
    fn get(&self, i: usize, j: usize) -> bool {
        self.rows[i * self.words + j / WORD] >> (j % WORD) & 1 == 1
    }
    #[inline]
    fn set(&mut self, i: usize, j: usize) {
        self.rows[i * self.words + j / WORD] |= 1 << (j % WORD);
    }
    #[inline]
    fn clear(&mut self, i: usize, j: usize) {
        self.rows[i * self.words + j / WORD] &= !(1 << (j % WORD));
    }
    fn or_row_into(&mut self, src: usize, dst: usize) {
        let (s, d) = (src * self.words, dst * self.words);
        for k in 0..self.words {
            let v = self.rows[s + k];
            self.rows[d + k] |= v;
        }
    }
    fn row_count(&self, i: usize) -> usize {
        self.rows[i * self.words..(i + 1) * self.words]
            .iter()
            .map(|w| w.count_ones() as usize)
            .sum()
    }
    fn row_intersects(&self, i: usize, mask: &[u64]) -> bool {
        self.rows[i * self.words..(i + 1) * self.words]
            .iter()
            .zip(mask)
            .any(|(w, m)| w & m != 0)
    }
}

/// Strict partial order: irreflexive, antisymmetric relation on `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartialOrder {
    n: usize,
    older: BitMatrix,
    pairs: usize,
}

impl PartialOrder {
    pub fn new(n: usize) -> PartialOrder {
        PartialOrder {
            n,
            older: BitMatrix::new(n),
            pairs: 0,
        }
    }

    pub fn from_pairs<I>(n: usize, pairs: I) -> Result<PartialOrder, OrderError>
    where
        I: IntoIterator<Item = (NodeId, NodeId)>,
    {
        let mut po = PartialOrder::new(n);
        for (u, v) in pairs {
            po.add(u, v)?;
        }
        Ok(po)
    }

    /// Total order from an oldest-first arrival sequence.
    pub fn from_total(order: &[NodeId]) -> PartialOrder {
        let n = order.len();
        let mut po = PartialOrder::new(n);
        for i in 0..n {
            for j in (i + 1)..n {
                po.add(order[i], order[j]).expect("sequence is a ranking");
            }
        }
        po
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Records "u is older than v".
    pub fn add(&mut self, u: NodeId, v: NodeId) -> Result<(), OrderError> {
        let (ui, vi) = (u as usize, v as usize);
        if ui >= self.n {
            return Err(OrderError::OutOfRange(u, self.n));
        }
        if vi >= self.n {
            return Err(OrderError::OutOfRange(v, self.n));
        }
        if u == v {
            return Err(OrderError::Reflexive(u));
        }
        if self.older.get(vi, ui) {
            return Err(OrderError::Antisymmetry(u, v));
        }
        if !self.older.get(ui, vi) {
            self.older.set(ui, vi);
            self.pairs += 1;
        }
        Ok(())
    }

    pub fn remove(&mut self, u: NodeId, v: NodeId) {
        if self.contains(u, v) {
            self.older.clear(u as usize, v as usize);
            self.pairs -= 1;
        }
    }

    /// True when u is recorded older than v.
    pub fn contains(&self, u: NodeId, v: NodeId) -> bool {
        self.older.get(u as usize, v as usize)
    }

    pub fn comparable(&self, u: NodeId, v: NodeId) -> bool {
        self.contains(u, v) || self.contains(v, u)
    }

    /// Number of comparable unordered pairs, `|K(σ)|`.
    pub fn comparable_pairs(&self) -> usize {
        self.pairs
    }

    /// All ordered pairs (older, younger).
    pub fn iter_pairs(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        (0..self.n).flat_map(move |u| {
            (0..self.n).filter_map(move |v| {
                if self.older.get(u, v) {
                    Some((u as NodeId, v as NodeId))
                } else {
                    None
                }
            })
        })
    }

    /// Kahn topological order (oldest first); returns a cycle on failure.
    fn toposort(&self) -> Result<Vec<NodeId>, OrderError> {
        // indeg[v] = number of u with u older than v
        let mut indeg = vec![0usize; self.n];
        for (_, v) in self.iter_pairs() {
            indeg[v as usize] += 1;
        }
        let mut queue: Vec<usize> = (0..self.n).filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(self.n);
        let mut qi = 0;
        while qi < queue.len() {
            let u = queue[qi];
            qi += 1;
            order.push(u as NodeId);
            for v in 0..self.n {
                if self.older.get(u, v) {
                    indeg[v] -= 1;
                    if indeg[v] == 0 {
                        queue.push(v);
                    }
                }
            }
        }
        if order.len() == self.n {
            return Ok(order);
        }
        // Extract one cycle among the remaining nodes by following "older"
        // edges restricted to unresolved nodes until a repeat.
        let remaining: Vec<usize> = (0..self.n).filter(|&v| indeg[v] > 0).collect();
        let in_rem = {
            let mut m = vec![false; self.n];
            for &v in &remaining {
                m[v] = true;
            }
            m
        };
        let start = remaining[0];
        let mut seen_at = vec![usize::MAX; self.n];
        let mut path = vec![start];
        seen_at[start] = 0;
        loop {
            let cur = *path.last().expect("nonempty");
            let next = (0..self.n)
                .find(|&v| in_rem[v] && self.older.get(v, cur))
                .expect("unresolved node must have an unresolved predecessor");
            if seen_at[next] != usize::MAX {
                let cycle = path[seen_at[next]..]
                    .iter()
                    .rev()
                    .map(|&v| v as NodeId)
                    .collect();
                return Err(OrderError::Cycle(cycle));
            }
            seen_at[next] = path.len();
            path.push(next);
        }
    }

    /// Minimal transitive superset. Fails on a cycle, naming one.
    pub fn transitive_close(&self) -> Result<PartialOrder, OrderError> {
        let topo = self.toposort()?;
        let mut closed = self.clone();
        // Process youngest first so each row already holds its full closure
        // when merged into its elders.
        for &v in topo.iter().rev() {
            for u in 0..self.n {
                if closed.older.get(u, v as usize) {
                    closed.older.or_row_into(v as usize, u);
                }
            }
        }
        // Antisymmetry cannot break for an acyclic relation, but recount pairs.
        closed.pairs = (0..self.n).map(|u| closed.older.row_count(u)).sum();
        for u in 0..self.n {
            if closed.older.get(u, u) {
                return Err(OrderError::Cycle(vec![u as NodeId]));
            }
        }
        Ok(closed)
    }

    /// Ordered clusters by iterated peeling of the closed DAG: nodes with no
    /// younger comparables form the youngest cluster, are removed, repeat.
    /// Requires an acyclic relation; the number of clusters emerges.
    pub fn to_clusters(&self) -> Result<OrderedClustering, OrderError> {
        let closed = self.transitive_close()?;
        let words = closed.older.words;
        let mut alive_mask = vec![u64::MAX; words];
        // trim trailing bits
        if self.n % WORD != 0 {
            alive_mask[words - 1] = (1u64 << (self.n % WORD)) - 1;
        }
        if self.n == 0 {
            return Ok(OrderedClustering { clusters: vec![] });
        }
        let mut remaining = self.n;
        let mut youngest_first: Vec<Vec<NodeId>> = Vec::new();
        let mut alive = vec![true; self.n];
        while remaining > 0 {
            let layer: Vec<NodeId> = (0..self.n)
                .filter(|&v| alive[v] && !closed.older.row_intersects(v, &alive_mask))
                .map(|v| v as NodeId)
                .collect();
            debug_assert!(!layer.is_empty(), "acyclic DAG always has a youngest layer");
            for &v in &layer {
                alive[v as usize] = false;
                alive_mask[v as usize / WORD] &= !(1u64 << (v as usize % WORD));
            }
            remaining -= layer.len();
            youngest_first.push(layer);
        }
        youngest_first.reverse();
        Ok(OrderedClustering {
            clusters: youngest_first,
        })
    }

    /// Comparable pairs of `self` that are not comparable in `other`,
    /// directions kept. Used to form σ_test = σ_orig \ σ_train.
    pub fn without_pairs(&self, other: &PartialOrder) -> PartialOrder {
        let mut out = PartialOrder::new(self.n);
        for (u, v) in self.iter_pairs() {
            if !other.comparable(u, v) {
                out.add(u, v).expect("subset of a valid relation");
            }
        }
        out
    }

    /// Serializes as one `u < v` line per ordered pair.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (u, v) in self.iter_pairs() {
            let _ = writeln!(s, "{} < {}", u, v);
        }
        s
    }

    /// Parses the `u < v` line format. `n` must cover all mentioned ids.
    pub fn parse(text: &str, n: usize) -> Result<PartialOrder, OrderError> {
        let mut po = PartialOrder::new(n);
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            let bad = || OrderError::Parse(lineno + 1, line.to_string());
            if toks.len() != 3 || toks[1] != "<" {
                return Err(bad());
            }
            let u: NodeId = toks[0].parse().map_err(|_| bad())?;
            let v: NodeId = toks[2].parse().map_err(|_| bad())?;
            po.add(u, v)?;
        }
        Ok(po)
    }
}

/// Disjoint node clusters ordered oldest (`clusters[0]`) to youngest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderedClustering {
    pub clusters: Vec<Vec<NodeId>>,
}

impl OrderedClustering {
    pub fn k(&self) -> usize {
        self.clusters.len()
    }

    pub fn node_count(&self) -> usize {
        self.clusters.iter().map(|c| c.len()).sum()
    }

    /// The induced partial order: every node of an older cluster precedes
    /// every node of a younger one; within-cluster pairs incomparable.
    pub fn to_order(&self) -> PartialOrder {
        let n = self.node_count();
        let mut po = PartialOrder::new(n);
        for i in 0..self.clusters.len() {
            for j in (i + 1)..self.clusters.len() {
                for &u in &self.clusters[i] {
                    for &v in &self.clusters[j] {
                        po.add(u, v).expect("clusters are disjoint");
                    }
                }
            }
        }
        po
    }

    /// Serializes as `node_id cluster_index` lines, cluster 1 = oldest.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (i, cluster) in self.clusters.iter().enumerate() {
            let mut sorted = cluster.clone();
            sorted.sort_unstable();
            for v in sorted {
                let _ = writeln!(s, "{} {}", v, i + 1);
            }
        }
        s
    }

    /// Parses `node_id cluster_index` lines (cluster 1 = oldest).
    pub fn parse(text: &str) -> Result<OrderedClustering, OrderError> {
        let mut pairs: Vec<(NodeId, usize)> = Vec::new();
        let mut max_cluster = 0usize;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            let bad = || OrderError::Parse(lineno + 1, line.to_string());
            if toks.len() != 2 {
                return Err(bad());
            }
            let v: NodeId = toks[0].parse().map_err(|_| bad())?;
            let c: usize = toks[1].parse().map_err(|_| bad())?;
            if c == 0 {
                return Err(bad());
            }
            max_cluster = max_cluster.max(c);
            pairs.push((v, c));
        }
        let mut clusters = vec![Vec::new(); max_cluster];
        let mut seen = std::collections::HashSet::new();
        for (v, c) in pairs {
            if !seen.insert(v) {
                return Err(OrderError::BadClustering);
            }
            clusters[c - 1].push(v);
        }
        if clusters.iter().any(|c| c.is_empty()) {
            return Err(OrderError::BadClustering);
        }
        Ok(OrderedClustering { clusters })
    }
}

/// Density δ: fraction of ground-truth-comparable pairs that `sigma` also
/// makes comparable. With a total-order ground truth this is K(σ)/C(n,2).
pub fn density(sigma: &PartialOrder, sigma_orig: &PartialOrder) -> Result<f64, OrderError> {
    let denom = sigma_orig.comparable_pairs();
    if denom == 0 {
        return Err(OrderError::EmptyGroundTruth);
    }
    let mut hit = 0usize;
    for (u, v) in sigma_orig.iter_pairs() {
        if sigma.comparable(u, v) {
            hit += 1;
        }
    }
    Ok(hit as f64 / denom as f64)
}

/// Precision θ: among pairs comparable in both orders, the fraction whose
/// direction in `sigma` matches the ground truth.
pub fn precision(sigma: &PartialOrder, sigma_orig: &PartialOrder) -> Result<f64, OrderError> {
    let mut both = 0usize;
    let mut correct = 0usize;
    for (u, v) in sigma_orig.iter_pairs() {
        // (u, v) ground truth: u older
        if sigma.contains(u, v) {
            both += 1;
            correct += 1;
        } else if sigma.contains(v, u) {
            both += 1;
        }
    }
    if both == 0 {
        return Err(OrderError::EmptyOverlap);
    }
    Ok(correct as f64 / both as f64)
}

/// Reference line for plots: guessing directions at random scores 1/2.
pub fn random_guess_baseline(_n: usize) -> f64 {
    0.5
}

#[cfg(test)]
mod tests {
    use super::*;

    fn po(n: usize, pairs: &[(NodeId, NodeId)]) -> PartialOrder {
        PartialOrder::from_pairs(n, pairs.iter().copied()).unwrap()
    }

    #[test]
    fn close_chain() {
        let closed = po(3, &[(0, 1), (1, 2)]).transitive_close().unwrap();
        assert!(closed.contains(0, 2));
        assert_eq!(closed.comparable_pairs(), 3);
    }

    #[test]
    fn close_idempotent() {
        let closed = po(4, &[(0, 1), (1, 2), (2, 3)]).transitive_close().unwrap();
        assert_eq!(closed.transitive_close().unwrap(), closed);
    }

    #[test]
    fn antisymmetry_rejected_on_add() {
        let mut p = po(2, &[(0, 1)]);
        assert_eq!(p.add(1, 0).unwrap_err(), OrderError::Antisymmetry(1, 0));
    }

    #[test]
    fn cycle_detected_and_named() {
        let p = po(3, &[(0, 1), (1, 2), (2, 0)]);
        match p.transitive_close() {
            Err(OrderError::Cycle(c)) => assert_eq!(c.len(), 3),
            other => panic!("expected cycle, got {other:?}"),
        }
    }

    #[test]
    fn clusters_empty_relation() {
        let c = po(4, &[]).to_clusters().unwrap();
        assert_eq!(c.k(), 1);
        assert_eq!(c.clusters[0].len(), 4);
    }

    #[test]
    fn clusters_total_order() {
        let c = PartialOrder::from_total(&[2, 0, 3, 1]).to_clusters().unwrap();
        assert_eq!(c.k(), 4);
        let flat: Vec<NodeId> = c.clusters.iter().map(|cl| cl[0]).collect();
        assert_eq!(flat, vec![2, 0, 3, 1]);
    }

    #[test]
    fn clusters_fig2_dag() {
        // Nodes u,v,w,x,y,z = 0..5; v older than u, w older than v,
        // x older than w, x older than y (the supervision example DAG).
        let p = po(6, &[(1, 0), (2, 1), (3, 2), (3, 4)]);
        let c = p.to_clusters().unwrap();
        // Peeling by hand: youngest layer {u, y, z}, then {v}, {w}, {x}.
        assert_eq!(c.k(), 4);
        let oldest = &c.clusters[0];
        assert_eq!(oldest, &vec![3]);
        let youngest = c.clusters.last().unwrap();
        let mut y = youngest.clone();
        y.sort_unstable();
        assert_eq!(y, vec![0, 4, 5]);
    }

    #[test]
    fn cluster_round_trip_idempotent() {
        let p = po(5, &[(0, 1), (0, 2), (1, 3), (2, 3)]);
        let c = p.to_clusters().unwrap();
        let c2 = c.to_order().to_clusters().unwrap();
        assert_eq!(c, c2);
    }

    #[test]
    fn density_cases() {
        let total = PartialOrder::from_total(&[0, 1, 2, 3]);
        assert_eq!(density(&PartialOrder::new(4), &total).unwrap(), 0.0);
        assert_eq!(density(&total, &total).unwrap(), 1.0);
        let partial = po(4, &[(0, 1), (0, 2)]);
        assert!((density(&partial, &total).unwrap() - 2.0 / 6.0).abs() < 1e-12);
        assert_eq!(
            density(&total, &PartialOrder::new(4)).unwrap_err(),
            OrderError::EmptyGroundTruth
        );
    }

    #[test]
    fn precision_cases() {
        let total = PartialOrder::from_total(&[0, 1, 2, 3]);
        assert_eq!(precision(&total, &total).unwrap(), 1.0);
        let reversed = PartialOrder::from_total(&[3, 2, 1, 0]);
        assert_eq!(precision(&reversed, &total).unwrap(), 0.0);
        let single = po(4, &[(1, 2)]);
        assert_eq!(precision(&single, &total).unwrap(), 1.0);
        assert_eq!(
            precision(&PartialOrder::new(4), &total).unwrap_err(),
            OrderError::EmptyOverlap
        );
    }

    #[test]
    fn reverse_precision_complement() {
        let orig = PartialOrder::from_total(&[0, 1, 2, 3, 4]);
        let arrival = [2, 0, 4, 1, 3];
        let sig = PartialOrder::from_total(&arrival);
        let mut reversed = arrival;
        reversed.reverse();
        let rev = PartialOrder::from_total(&reversed);
        let p1 = precision(&sig, &orig).unwrap();
        let p2 = precision(&rev, &orig).unwrap();
        assert!((p1 + p2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn baseline_is_half() {
        assert_eq!(random_guess_baseline(2), 0.5);
        assert_eq!(random_guess_baseline(1000), 0.5);
    }

    #[test]
    fn order_text_round_trip() {
        let p = po(4, &[(0, 1), (2, 3), (0, 3)]);
        let q = PartialOrder::parse(&p.to_text(), 4).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn clustering_text_round_trip() {
        let c = OrderedClustering {
            clusters: vec![vec![3], vec![0, 2], vec![1]],
        };
        let c2 = OrderedClustering::parse(&c.to_text()).unwrap();
        assert_eq!(c.k(), c2.k());
        for (a, b) in c.clusters.iter().zip(&c2.clusters) {
            let mut a = a.clone();
            let mut b = b.clone();
            a.sort_unstable();
            b.sort_unstable();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn without_pairs_subtracts() {
        let orig = PartialOrder::from_total(&[0, 1, 2]);
        let train = po(3, &[(0, 1)]);
        let test = orig.without_pairs(&train);
        assert_eq!(test.comparable_pairs(), 2);
        assert!(!test.comparable(0, 1));
        assert!(test.contains(0, 2) && test.contains(1, 2));
    }
}
