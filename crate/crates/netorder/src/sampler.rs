//! Sequential importance sampling over backward node-removal chains.
//!
//! A path peels the snapshot one node at a time, youngest first, down to the
//! seed. Each removal is drawn from a proposal `q`; the path's importance
//! weight is the product of step-likelihood over proposal ratios. Weighted
//! indicator averages over many paths estimate, for every node pair, the
//! posterior probability that one node arrived before the other.
//!
//! Three proposals are provided. `local-unif` removes a uniform candidate
//! (O(n) per step); `high-prob` removes proportionally to the step
//! likelihood (O(n²) per step, lower weight variance per path but slower
//! convergence in practice); `accept-reject` is the uniform proposal
//! implemented by rejection from the full node set and is distributionally
//! identical to `local-unif`.
//!
//! Supervision restricts the candidate set: a node known to be older than a
//! still-present node can never be removed as the youngest.
//!
//! Path `i` is reproducible from `(master seed, i)` alone, so results do not
//! depend on worker scheduling; aggregation runs in path order with online
//! max-rescaling, which makes resumed runs bit-identical to uninterrupted
//! ones.

use crate::dd::{log_parent_term, log_sum_exp, DdError, DdParams};
use crate::graph::{Graph, NodeId};
use crate::order::{OrderError, PartialOrder};
use crate::rng::stream;
use rand::Rng;
use rayon::prelude::*;
use std::fmt;
use thiserror::Error;

/// Dense pair-probability storage is refused above this node count; use the
/// streaming score accumulator instead.
pub const DENSE_LIMIT: usize = 5000;

/// Paths aggregated per parallel batch. Fixed so that chunked aggregation is
/// reproducible regardless of thread count.
const BATCH: usize = 1024;

#[derive(Debug, Error, PartialEq)]
pub enum SamplerError {
    #[error(transparent)]
    Dd(#[from] DdError),
    #[error("training pairs invalid: {0}")]
    Training(#[from] OrderError),
    #[error("every candidate is restricted or infeasible at {remaining} remaining nodes")]
    Deadlock { remaining: usize },
    #[error("path count must be at least 1")]
    NoPaths,
    #[error("n = {0} exceeds dense matrix limit {DENSE_LIMIT}; use score accumulation")]
    DenseTooLarge(usize),
    #[error("checkpoint malformed at line {0}")]
    BadCheckpoint(usize),
    #[error("checkpoint does not match this run configuration")]
    CheckpointMismatch,
}

/// Proposal scheme for the backward chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    LocalUnif,
    HighProb,
    AcceptReject,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Scheme::LocalUnif => "local-unif",
            Scheme::HighProb => "high-prob",
            Scheme::AcceptReject => "accept-reject",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Scheme {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "local-unif" => Ok(Scheme::LocalUnif),
            "high-prob" => Ok(Scheme::HighProb),
            "accept-reject" => Ok(Scheme::AcceptReject),
            other => Err(format!(
                "unknown scheme {other:?}; expected local-unif, high-prob or accept-reject"
            )),
        }
    }
}

/// Pairs whose relative age is known with certainty, kept transitively
/// closed. Pair `(u, v)` means u is older than v.
#[derive(Debug, Clone)]
pub struct TrainingPairs {
    order: PartialOrder,
}

impl TrainingPairs {
    pub fn empty(n: usize) -> TrainingPairs {
        TrainingPairs {
            order: PartialOrder::new(n),
        }
    }

    /// Builds from (older, younger) pairs; closes transitively and rejects
    /// cycles.
    pub fn from_pairs<I>(n: usize, pairs: I) -> Result<TrainingPairs, OrderError>
    where
        I: IntoIterator<Item = (NodeId, NodeId)>,
    {
        let order = PartialOrder::from_pairs(n, pairs)?.transitive_close()?;
        Ok(TrainingPairs { order })
    }

    pub fn from_order(order: &PartialOrder) -> Result<TrainingPairs, OrderError> {
        Ok(TrainingPairs {
            order: order.transitive_close()?,
        })
    }

    pub fn contains(&self, older: NodeId, younger: NodeId) -> bool {
        self.order.contains(older, younger)
    }

    pub fn len(&self) -> usize {
        self.order.comparable_pairs()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.order.iter_pairs()
    }

    pub fn as_order(&self) -> &PartialOrder {
        &self.order
    }
}

/// One backward trajectory: removed nodes youngest-first and the
/// accumulated log importance weight.
#[derive(Debug, Clone)]
pub struct SamplePath {
    pub removed_sequence: Vec<NodeId>,
    pub log_weight: f64,
}

impl SamplePath {
    /// Arrival ranks implied by the removal sequence: seeds take ranks
    /// `0..n0` in id order; the node removed first is youngest.
    pub fn arrival_ranks(&self, n: usize, n0: usize) -> Vec<u32> {
        let mut rank = vec![u32::MAX; n];
        for s in 0..n0 {
            rank[s] = s as u32;
        }
        let m = self.removed_sequence.len();
        for (j, &v) in self.removed_sequence.iter().enumerate() {
            rank[v as usize] = (n0 + m - 1 - j) as u32;
        }
        rank
    }
}

/// Peeling state over a fixed snapshot: alive mask, alive degrees and the
/// supervised candidate pool. Owned privately by one sampling worker.
struct PeelState<'a> {
    h: &'a Graph,
    params: &'a DdParams,
    alive: Vec<bool>,
    alive_deg: Vec<u32>,
    t: usize,
    /// Unrestricted non-seed nodes, unordered pool with O(1) removal.
    pool: Vec<NodeId>,
    pool_pos: Vec<usize>,
    /// Per node: count of still-alive younger partners in the training
    /// relation (the node is non-removable while this is positive).
    blockers: Vec<u32>,
    /// For each younger node, the older partners to unblock on removal.
    olders_of: Vec<Vec<NodeId>>,
    boundary: bool,
    scratch: Vec<f64>,
}

impl<'a> PeelState<'a> {
    fn new(
        h: &'a Graph,
        params: &'a DdParams,
        restriction: Option<&TrainingPairs>,
    ) -> PeelState<'a> {
        let nb = h.id_bound();
        let alive: Vec<bool> = (0..nb as NodeId).map(|v| h.contains(v)).collect();
        let alive_deg: Vec<u32> = (0..nb as NodeId).map(|v| h.degree(v) as u32).collect();
        let mut blockers = vec![0u32; nb];
        let mut olders_of = vec![Vec::new(); nb];
        if let Some(tr) = restriction {
            for (older, younger) in tr.iter() {
                if alive[older as usize] && alive[younger as usize] && !h.is_seed(older) {
                    blockers[older as usize] += 1;
                    olders_of[younger as usize].push(older);
                }
            }
        }
        let mut pool = Vec::new();
        let mut pool_pos = vec![usize::MAX; nb];
        for v in h.nodes() {
            if !h.is_seed(v) && blockers[v as usize] == 0 {
                pool_pos[v as usize] = pool.len();
                pool.push(v);
            }
        }
        PeelState {
            h,
            params,
            alive,
            alive_deg,
            t: h.n(),
            pool,
            pool_pos,
            blockers,
            olders_of,
            boundary: !params.all_feasible(),
            scratch: Vec::new(),
        }
    }

    /// Log step likelihood of removing `v` from the current alive graph.
    fn log_w(&self, v: NodeId) -> f64 {
        let k = self.t - 1;
        let nv = self.h.neighbors(v);
        let deg_v = self.alive_deg[v as usize] as usize;
        let mut terms = Vec::with_capacity(k);
        for u in 0..self.alive.len() as NodeId {
            if u == v || !self.alive[u as usize] {
                continue;
            }
            let a = self.alive_common(u, nv);
            let adjacent = nv.binary_search(&u).is_ok() as usize;
            let deg_u = self.alive_deg[u as usize] as usize;
            let b = deg_u - adjacent - a;
            let c = deg_v - a;
            terms.push(log_parent_term(a, b, c, k, self.params.p, self.params.r));
        }
        log_sum_exp(&terms)
    }

    /// |N(u) ∩ nv ∩ alive| by sorted merge.
    fn alive_common(&self, u: NodeId, nv: &[NodeId]) -> usize {
        let nu = self.h.neighbors(u);
        let mut i = 0;
        let mut j = 0;
        let mut c = 0;
        while i < nu.len() && j < nv.len() {
            match nu[i].cmp(&nv[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    if self.alive[nu[i] as usize] {
                        c += 1;
                    }
                    i += 1;
                    j += 1;
                }
            }
        }
        c
    }

    fn remove_from_pool(&mut self, v: NodeId) {
        let pos = self.pool_pos[v as usize];
        debug_assert!(pos != usize::MAX);
        let last = *self.pool.last().expect("pool nonempty");
        self.pool.swap_remove(pos);
        if pos < self.pool.len() {
            self.pool_pos[last as usize] = pos;
        }
        self.pool_pos[v as usize] = usize::MAX;
    }

    /// Applies the removal of `v`: updates mask, degrees, pool and blockers.
    fn commit_removal(&mut self, v: NodeId) {
        self.alive[v as usize] = false;
        self.t -= 1;
        for &u in self.h.neighbors(v) {
            if self.alive[u as usize] {
                self.alive_deg[u as usize] -= 1;
            }
        }
        if self.pool_pos[v as usize] != usize::MAX {
            self.remove_from_pool(v);
        }
        let olders = std::mem::take(&mut self.olders_of[v as usize]);
        for u in olders {
            if self.alive[u as usize] {
                let b = &mut self.blockers[u as usize];
                *b -= 1;
                if *b == 0 {
                    self.pool_pos[u as usize] = self.pool.len();
                    self.pool.push(u);
                }
            }
        }
    }

    /// Candidate ids (unrestricted pool), for inspection and tests.
    fn candidates(&self) -> &[NodeId] {
        &self.pool
    }

    /// One step of the given scheme. Returns (removed node, log w/q).
    fn step(&mut self, scheme: Scheme, rng: &mut impl Rng) -> Result<(NodeId, f64), SamplerError> {
        if self.pool.is_empty() {
            return Err(SamplerError::Deadlock {
                remaining: self.t - self.params.n0,
            });
        }
        let (v, log_ratio) = match scheme {
            Scheme::LocalUnif => self.step_local_unif(rng)?,
            Scheme::HighProb => self.step_high_prob(rng)?,
            Scheme::AcceptReject => self.step_accept_reject(rng)?,
        };
        self.commit_removal(v);
        Ok((v, log_ratio))
    }

    fn feasible_pool(&mut self) -> Result<Vec<NodeId>, SamplerError> {
        // At boundary parameters the removable set is the positive-likelihood
        // subset of the pool; interior parameters admit the whole pool.
        if !self.boundary {
            return Ok(self.pool.clone());
        }
        let feasible: Vec<NodeId> = self
            .pool
            .iter()
            .copied()
            .filter(|&v| self.log_w(v) > f64::NEG_INFINITY)
            .collect();
        if feasible.is_empty() {
            return Err(SamplerError::Deadlock {
                remaining: self.t - self.params.n0,
            });
        }
        Ok(feasible)
    }

    fn step_local_unif(&mut self, rng: &mut impl Rng) -> Result<(NodeId, f64), SamplerError> {
        if !self.boundary {
            let v = self.pool[rng.random_range(0..self.pool.len())];
            return Ok((v, self.log_w(v) + (self.pool.len() as f64).ln()));
        }
        let cands = self.feasible_pool()?;
        let v = cands[rng.random_range(0..cands.len())];
        // w / q with q = 1/|candidates|
        Ok((v, self.log_w(v) + (cands.len() as f64).ln()))
    }

    fn step_high_prob(&mut self, rng: &mut impl Rng) -> Result<(NodeId, f64), SamplerError> {
        let cands = self.feasible_pool()?;
        self.scratch.clear();
        for &v in &cands {
            self.scratch.push(self.log_w(v));
        }
        let log_z = log_sum_exp(&self.scratch);
        if log_z == f64::NEG_INFINITY {
            return Err(SamplerError::Deadlock {
                remaining: self.t - self.params.n0,
            });
        }
        // categorical draw over exp(lw - log_z)
        let x: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = cands[cands.len() - 1];
        for (i, &v) in cands.iter().enumerate() {
            acc += (self.scratch[i] - log_z).exp();
            if x < acc {
                chosen = v;
                break;
            }
        }
        // w(chosen)/q(chosen) = Z for every choice
        Ok((chosen, log_z))
    }

    fn step_accept_reject(&mut self, rng: &mut impl Rng) -> Result<(NodeId, f64), SamplerError> {
        let cands = self.feasible_pool()?;
        let q_count = cands.len();
        // Rejection from the full non-seed alive set; accepted iff the node
        // is an unrestricted, positive-likelihood candidate. Identical in
        // distribution to local-unif.
        let n0 = self.params.n0;
        let alive_non_seed: Vec<NodeId> = (n0 as NodeId..self.alive.len() as NodeId)
            .filter(|&v| self.alive[v as usize])
            .collect();
        loop {
            let v = alive_non_seed[rng.random_range(0..alive_non_seed.len())];
            let unrestricted = self.pool_pos[v as usize] != usize::MAX;
            if !unrestricted {
                continue;
            }
            let lw = self.log_w(v);
            if lw == f64::NEG_INFINITY {
                continue;
            }
            return Ok((v, lw + (q_count as f64).ln()));
        }
    }
}

/// Samples one backward trajectory. `n = n0` yields an empty path with zero
/// log-weight.
pub fn sample_path(
    h: &Graph,
    params: &DdParams,
    scheme: Scheme,
    restriction: Option<&TrainingPairs>,
    rng: &mut impl Rng,
) -> Result<SamplePath, SamplerError> {
    params.validate()?;
    let steps = h.n() - params.n0;
    let mut state = PeelState::new(h, params, restriction);
    let mut removed = Vec::with_capacity(steps);
    let mut log_weight = 0.0;
    for _ in 0..steps {
        let (v, lr) = state.step(scheme, rng)?;
        removed.push(v);
        log_weight += lr;
    }
    Ok(SamplePath {
        removed_sequence: removed,
        log_weight,
    })
}

/// Provenance of a pair-probability matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Provenance {
    Exact,
    Sampled { paths: u64, scheme: Scheme },
}

/// Dense matrix of estimated probabilities that the row node arrived before
/// the column node. Seed convention: a seed precedes every non-seed with
/// probability 1; intra-seed pairs carry the uninformative 1/2.
#[derive(Debug, Clone, PartialEq)]
pub struct PuvMatrix {
    n: usize,
    n0: usize,
    data: Vec<f64>,
    pub provenance: Provenance,
}

impl PuvMatrix {
    pub fn new_with_seed_convention(n: usize, n0: usize, provenance: Provenance) -> PuvMatrix {
        assert!(n <= DENSE_LIMIT, "dense matrix limited to {DENSE_LIMIT} nodes");
        let mut data = vec![0.5; n * n];
        for u in 0..n {
            for v in 0..n {
                if u < n0 && v >= n0 {
                    data[u * n + v] = 1.0;
                } else if u >= n0 && v < n0 {
                    data[u * n + v] = 0.0;
                }
            }
        }
        PuvMatrix {
            n,
            n0,
            data,
            provenance,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n0(&self) -> usize {
        self.n0
    }

    pub fn get(&self, u: NodeId, v: NodeId) -> f64 {
        self.data[u as usize * self.n + v as usize]
    }

    /// Sets p_uv and its complement p_vu = 1 - p_uv.
    pub fn set_pair(&mut self, u: NodeId, v: NodeId, p: f64) {
        debug_assert!((-1e-9..=1.0 + 1e-9).contains(&p), "p = {p}");
        let p = p.clamp(0.0, 1.0);
        self.data[u as usize * self.n + v as usize] = p;
        self.data[v as usize * self.n + u as usize] = 1.0 - p;
    }

    /// Score p_u = Σ_v p_uv; high values mark old nodes.
    pub fn pu_sum(&self, u: NodeId) -> f64 {
        (0..self.n as NodeId)
            .filter(|&v| v != u)
            .map(|v| self.get(u, v))
            .sum()
    }

    /// Largest absolute entry difference over non-seed pairs.
    pub fn sup_gap(&self, other: &PuvMatrix) -> f64 {
        assert_eq!(self.n, other.n);
        let mut gap: f64 = 0.0;
        for u in self.n0..self.n {
            for v in self.n0..self.n {
                if u != v {
                    let d = (self.get(u as NodeId, v as NodeId)
                        - other.get(u as NodeId, v as NodeId))
                    .abs();
                    gap = gap.max(d);
                }
            }
        }
        gap
    }

    /// CSV with a header row of node ids; row-leading node id column.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        s.push_str("node");
        for v in 0..self.n {
            s.push(',');
            s.push_str(&v.to_string());
        }
        s.push('\n');
        for u in 0..self.n {
            s.push_str(&u.to_string());
            for v in 0..self.n {
                s.push(',');
                if u == v {
                    s.push_str("0.5");
                } else {
                    s.push_str(&format!("{}", self.get(u as NodeId, v as NodeId)));
                }
            }
            s.push('\n');
        }
        s
    }

    /// Parses the CSV form; seed size must be supplied by the caller.
    pub fn parse_csv(text: &str, n0: usize) -> Result<PuvMatrix, String> {
        let mut lines = text.lines();
        let header = lines.next().ok_or("empty input")?;
        let n = header.split(',').count() - 1;
        let mut m = PuvMatrix::new_with_seed_convention(n, n0, Provenance::Exact);
        let mut seen = 0usize;
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut toks = line.split(',');
            let u: usize = toks
                .next()
                .ok_or(format!("row {i}: missing id"))?
                .trim()
                .parse()
                .map_err(|e| format!("row {i}: {e}"))?;
            for (v, tok) in toks.enumerate() {
                let p: f64 = tok.trim().parse().map_err(|e| format!("row {i}: {e}"))?;
                if u != v {
                    m.data[u * n + v] = p;
                }
            }
            seen += 1;
        }
        if seen != n {
            return Err(format!("expected {n} rows, found {seen}"));
        }
        Ok(m)
    }
}

/// Streaming weighted aggregation in path order. Online max-rescaling keeps
/// exponentials in range; resuming from a checkpoint reproduces the exact
/// float operation sequence of an uninterrupted run.
#[derive(Debug, Clone)]
pub struct Accumulator {
    n: usize,
    n0: usize,
    max_lw: f64,
    total_w: f64,
    total_sq: f64,
    /// Shifted weight sums for ordered non-seed pairs, row-major n×n.
    pair_w: Vec<f64>,
    paths_done: u64,
}

impl Accumulator {
    pub fn new(n: usize, n0: usize) -> Result<Accumulator, SamplerError> {
        if n > DENSE_LIMIT {
            return Err(SamplerError::DenseTooLarge(n));
        }
        Ok(Accumulator {
            n,
            n0,
            max_lw: f64::NEG_INFINITY,
            total_w: 0.0,
            total_sq: 0.0,
            pair_w: vec![0.0; n * n],
            paths_done: 0,
        })
    }

    pub fn paths_done(&self) -> u64 {
        self.paths_done
    }

    fn rescale(&mut self, new_max: f64) {
        let scale = (self.max_lw - new_max).exp(); // 0 when starting from -inf
        let scale = if scale.is_nan() { 0.0 } else { scale };
        self.total_w *= scale;
        self.total_sq *= scale * scale;
        for w in &mut self.pair_w {
            *w *= scale;
        }
        self.max_lw = new_max;
    }

    pub fn push(&mut self, path: &SamplePath) {
        if path.log_weight > self.max_lw {
            self.rescale(path.log_weight);
        }
        let w = (path.log_weight - self.max_lw).exp();
        self.total_w += w;
        self.total_sq += w * w;
        let ranks = path.arrival_ranks(self.n, self.n0);
        let seq = &path.removed_sequence;
        for i in 0..seq.len() {
            for j in 0..seq.len() {
                if i != j {
                    let (u, v) = (seq[i], seq[j]);
                    if ranks[u as usize] < ranks[v as usize] {
                        self.pair_w[u as usize * self.n + v as usize] += w;
                    }
                }
            }
        }
        self.paths_done += 1;
    }

    /// Self-normalized estimates. Supervised pairs are forced to 1/0.
    pub fn finalize(
        &self,
        restriction: Option<&TrainingPairs>,
        provenance: Provenance,
    ) -> Result<PuvMatrix, SamplerError> {
        assert!(
            self.paths_done == 0 || self.total_w > 0.0,
            "weights cannot all vanish after max-subtraction"
        );
        let mut m = PuvMatrix::new_with_seed_convention(self.n, self.n0, provenance);
        for u in self.n0..self.n {
            for v in (u + 1)..self.n {
                let wuv = self.pair_w[u * self.n + v];
                let p = if self.total_w > 0.0 {
                    wuv / self.total_w
                } else {
                    0.5
                };
                m.set_pair(u as NodeId, v as NodeId, p);
            }
        }
        if let Some(tr) = restriction {
            for (older, younger) in tr.iter() {
                m.set_pair(older, younger, 1.0);
            }
        }
        Ok(m)
    }

    /// log of the empirical mean of the weights, Σ W_i / k.
    pub fn log_mean_weight(&self) -> f64 {
        if self.paths_done == 0 {
            return f64::NEG_INFINITY;
        }
        self.max_lw + (self.total_w / self.paths_done as f64).ln()
    }

    /// Standard error of the mean weight, shifted by `max_lw`; pair with
    /// [`Self::shifted_mean`] for comparisons in a common scale.
    pub fn shifted_se(&self) -> f64 {
        let k = self.paths_done as f64;
        let mean = self.total_w / k;
        let var = (self.total_sq / k - mean * mean).max(0.0);
        (var / k).sqrt()
    }

    pub fn shifted_mean(&self) -> f64 {
        self.total_w / self.paths_done as f64
    }

    pub fn max_lw(&self) -> f64 {
        self.max_lw
    }

    /// Checkpoint record: plain text with bit-exact hex floats.
    pub fn to_checkpoint(&self, master_seed: u64, scheme: Scheme) -> String {
        let mut s = String::new();
        s.push_str("netorder-checkpoint v1\n");
        s.push_str(&format!("scheme {scheme}\n"));
        s.push_str(&format!("master_seed {master_seed}\n"));
        s.push_str(&format!("paths_done {}\n", self.paths_done));
        s.push_str(&format!("n {} n0 {}\n", self.n, self.n0));
        s.push_str(&format!("max_lw {:016x}\n", self.max_lw.to_bits()));
        s.push_str(&format!("total_w {:016x}\n", self.total_w.to_bits()));
        s.push_str(&format!("total_sq {:016x}\n", self.total_sq.to_bits()));
        s.push_str("pair_w");
        for w in &self.pair_w {
            s.push_str(&format!(" {:016x}", w.to_bits()));
        }
        s.push('\n');
        s
    }

    /// Restores a checkpoint, verifying it matches the run configuration.
    pub fn from_checkpoint(
        text: &str,
        master_seed: u64,
        scheme: Scheme,
    ) -> Result<Accumulator, SamplerError> {
        let mut lines = text.lines().enumerate();
        let mut expect = |tag: &str| -> Result<(usize, String), SamplerError> {
            let (i, line) = lines
                .next()
                .ok_or(SamplerError::BadCheckpoint(usize::MAX))?;
            let rest = line
                .strip_prefix(tag)
                .ok_or(SamplerError::BadCheckpoint(i + 1))?;
            Ok((i + 1, rest.trim().to_string()))
        };
        let (_, _) = expect("netorder-checkpoint")?;
        let (i, sch) = expect("scheme")?;
        let sch: Scheme = sch.parse().map_err(|_| SamplerError::BadCheckpoint(i))?;
        let (i, seed) = expect("master_seed")?;
        let seed: u64 = seed.parse().map_err(|_| SamplerError::BadCheckpoint(i))?;
        if sch != scheme || seed != master_seed {
            return Err(SamplerError::CheckpointMismatch);
        }
        let (i, done) = expect("paths_done")?;
        let paths_done: u64 = done.parse().map_err(|_| SamplerError::BadCheckpoint(i))?;
        let (i, dims) = expect("n")?;
        let toks: Vec<&str> = dims.split_whitespace().collect();
        if toks.len() != 3 || toks[1] != "n0" {
            return Err(SamplerError::BadCheckpoint(i));
        }
        let n: usize = toks[0].parse().map_err(|_| SamplerError::BadCheckpoint(i))?;
        let n0: usize = toks[2].parse().map_err(|_| SamplerError::BadCheckpoint(i))?;
        let parse_f64 = |s: &str, i: usize| -> Result<f64, SamplerError> {
            u64::from_str_radix(s.trim(), 16)
                .map(f64::from_bits)
                .map_err(|_| SamplerError::BadCheckpoint(i))
        };
        let (i, max_lw) = expect("max_lw")?;
        let max_lw = parse_f64(&max_lw, i)?;
        let (i, total_w) = expect("total_w")?;
        let total_w = parse_f64(&total_w, i)?;
        let (i, total_sq) = expect("total_sq")?;
        let total_sq = parse_f64(&total_sq, i)?;
        let (i, pair) = expect("pair_w")?;
        let mut pair_w = Vec::with_capacity(n * n);
        for tok in pair.split_whitespace() {
            pair_w.push(parse_f64(tok, i)?);
        }
        if pair_w.len() != n * n {
            return Err(SamplerError::BadCheckpoint(i));
        }
        Ok(Accumulator {
            n,
            n0,
            max_lw,
            total_w,
            total_sq,
            pair_w,
            paths_done,
        })
    }
}

fn generate_batch(
    h: &Graph,
    params: &DdParams,
    scheme: Scheme,
    restriction: Option<&TrainingPairs>,
    master_seed: u64,
    range: std::ops::Range<u64>,
) -> Result<Vec<SamplePath>, SamplerError> {
    range
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(master_seed, "path", i);
            sample_path(h, params, scheme, restriction, &mut rng)
        })
        .collect()
}

/// Runs `k - accum.paths_done()` further paths into `accum`, in path order.
pub fn run_paths(
    h: &Graph,
    params: &DdParams,
    scheme: Scheme,
    k: u64,
    restriction: Option<&TrainingPairs>,
    master_seed: u64,
    accum: &mut Accumulator,
) -> Result<(), SamplerError> {
    let mut i = accum.paths_done();
    while i < k {
        let hi = (i + BATCH as u64).min(k);
        let batch = generate_batch(h, params, scheme, restriction, master_seed, i..hi)?;
        for path in &batch {
            accum.push(path);
        }
        i = hi;
    }
    Ok(())
}

/// Self-normalized importance-sampling estimate of the pairwise precedence
/// matrix from `k` paths of the given scheme.
pub fn estimate_puv(
    h: &Graph,
    params: &DdParams,
    scheme: Scheme,
    k: u64,
    restriction: Option<&TrainingPairs>,
    master_seed: u64,
) -> Result<PuvMatrix, SamplerError> {
    if k == 0 {
        return Err(SamplerError::NoPaths);
    }
    let mut accum = Accumulator::new(h.id_bound(), h.n0())?;
    run_paths(h, params, scheme, k, restriction, master_seed, &mut accum)?;
    accum.finalize(restriction, Provenance::Sampled { paths: k, scheme })
}

/// Report of the weighted-mean estimator of the posterior normalizer.
#[derive(Debug, Clone)]
pub struct WeightedMeanReport {
    pub log_mean: f64,
    pub shifted_mean: f64,
    pub shifted_se: f64,
    pub max_lw: f64,
    pub paths: u64,
}

impl WeightedMeanReport {
    /// Whether `log_exact` lies within `k_se` empirical standard errors of
    /// the estimate, compared in the common shifted scale.
    pub fn within_se(&self, log_exact: f64, k_se: f64) -> bool {
        let exact_shifted = (log_exact - self.max_lw).exp();
        (self.shifted_mean - exact_shifted).abs() <= k_se * self.shifted_se
    }
}

/// Empirical mean of the path weights over `k` paths; by the importance-
/// sampling identity it converges to the total probability mass of feasible
/// arrival orders.
pub fn weighted_mean_check(
    h: &Graph,
    params: &DdParams,
    scheme: Scheme,
    k: u64,
    master_seed: u64,
) -> Result<WeightedMeanReport, SamplerError> {
    if k == 0 {
        return Err(SamplerError::NoPaths);
    }
    let mut accum = Accumulator::new(h.id_bound(), h.n0())?;
    run_paths(h, params, scheme, k, None, master_seed, &mut accum)?;
    Ok(WeightedMeanReport {
        log_mean: accum.log_mean_weight(),
        shifted_mean: accum.shifted_mean(),
        shifted_se: accum.shifted_se(),
        max_lw: accum.max_lw(),
        paths: k,
    })
}

/// Streaming p_u score accumulation for snapshots too large for the dense
/// matrix: only the per-node sums Σ_v p̂_uv are kept.
pub fn estimate_pu_scores(
    h: &Graph,
    params: &DdParams,
    scheme: Scheme,
    k: u64,
    restriction: Option<&TrainingPairs>,
    master_seed: u64,
) -> Result<Vec<f64>, SamplerError> {
    if k == 0 {
        return Err(SamplerError::NoPaths);
    }
    let n = h.id_bound();
    let n0 = h.n0();
    let mut max_lw = f64::NEG_INFINITY;
    let mut total = 0.0f64;
    let mut score = vec![0.0f64; n];
    let mut i = 0u64;
    while i < k {
        let hi = (i + BATCH as u64).min(k);
        let batch = generate_batch(h, params, scheme, restriction, master_seed, i..hi)?;
        for path in &batch {
            if path.log_weight > max_lw {
                let scale = (max_lw - path.log_weight).exp();
                let scale = if scale.is_nan() { 0.0 } else { scale };
                total *= scale;
                for s in &mut score {
                    *s *= scale;
                }
                max_lw = path.log_weight;
            }
            let w = (path.log_weight - max_lw).exp();
            total += w;
            let ranks = path.arrival_ranks(n, n0);
            let m = path.removed_sequence.len();
            for &v in &path.removed_sequence {
                // younger non-seeds after u, all seeds before every non-seed
                let younger = (n0 + m - 1) as u32 - ranks[v as usize];
                score[v as usize] += w * younger as f64;
            }
        }
        i = hi;
    }
    // Normalize and apply the seed convention: a seed scores 1 against each
    // alive non-seed and 1/2 against each other seed; a non-seed scores 0
    // against every seed.
    let alive: Vec<bool> = (0..n as NodeId).map(|v| h.contains(v)).collect();
    let alive_non_seed = h.n() - n0;
    for (v, s) in score.iter_mut().enumerate() {
        if !alive[v] {
            *s = 0.0;
        } else if v < n0 {
            *s = alive_non_seed as f64 + 0.5 * (n0 - 1) as f64;
        } else {
            *s /= total;
        }
    }
    Ok(score)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{enumerate_orders, exact_puv};
    use approx::assert_relative_eq;

    fn fig3a() -> Graph {
        Graph::from_edges(5, 3, &[(0, 1), (0, 2), (1, 2), (1, 3)]).unwrap()
    }

    fn params(h: &Graph, p: f64, r: f64) -> DdParams {
        DdParams {
            p,
            r,
            n: h.n(),
            n0: h.n0(),
        }
    }

    #[test]
    fn empty_path_at_seed_size() {
        let g = Graph::from_edges(3, 3, &[(0, 1)]).unwrap();
        let pr = params(&g, 0.5, 0.5);
        let mut rng = stream(1, "t", 0);
        let path = sample_path(&g, &pr, Scheme::LocalUnif, None, &mut rng).unwrap();
        assert!(path.removed_sequence.is_empty());
        assert_eq!(path.log_weight, 0.0);
    }

    #[test]
    fn local_unif_q_is_candidate_count() {
        // Interior parameters: q = 1/(t - n0 - restricted) at each step, so
        // the log-ratio is log w + log |candidates|.
        let g = fig3a();
        let pr = params(&g, 0.5, 0.5);
        let mut rng = stream(2, "t", 1);
        let path = sample_path(&g, &pr, Scheme::LocalUnif, None, &mut rng).unwrap();
        assert_eq!(path.removed_sequence.len(), 2);
        assert!(path.log_weight.is_finite());
    }

    #[test]
    fn supervision_candidates_match_example() {
        // Six labeled nodes u,v,w,x,y,z behind one seed node. Constraints:
        // v>u, w>v, x>w, x>y (in "older than" notation). Non-removable set
        // is {v,w,x}; candidates are {u,y,z}.
        let mut g = Graph::empty(7, 1).unwrap();
        g.add_edge(0, 1).unwrap();
        let (u, v, w, x, y, z) = (1u32, 2u32, 3u32, 4u32, 5u32, 6u32);
        let tr =
            TrainingPairs::from_pairs(7, [(v, u), (w, v), (x, w), (x, y)]).unwrap();
        let pr = params(&g, 0.5, 0.5);
        let state = PeelState::new(&g, &pr, Some(&tr));
        let mut cands = state.candidates().to_vec();
        cands.sort_unstable();
        assert_eq!(cands, vec![u, y, z]);
    }

    #[test]
    fn supervised_paths_respect_training_order() {
        let mut rng = stream(40, "t", 0);
        let seed_graph = Graph::erdos_renyi_seed(3, 0.6, &mut rng);
        let pr = DdParams { p: 0.4, r: 0.8, n: 10, n0: 3 };
        let (g, _) = crate::dd::generate(&pr, &seed_graph, &mut rng).unwrap();
        let tr = TrainingPairs::from_pairs(10, [(3u32, 7u32), (5u32, 9u32), (7u32, 8u32)])
            .unwrap();
        for i in 0..200u64 {
            let mut prng = stream(41, "t-sup", i);
            let path = sample_path(&g, &pr, Scheme::LocalUnif, Some(&tr), &mut prng).unwrap();
            let pos = |v: NodeId| {
                path.removed_sequence
                    .iter()
                    .position(|&x| x == v)
                    .unwrap()
            };
            for (older, younger) in tr.iter() {
                assert!(
                    pos(younger) < pos(older),
                    "younger {younger} must be removed before older {older}"
                );
            }
        }
    }

    #[test]
    fn estimator_recovers_exact_small_instance() {
        let g = fig3a();
        let pr = params(&g, 0.2, 0.0);
        let exact = exact_puv(&g, &pr).unwrap();
        let est = estimate_puv(&g, &pr, Scheme::LocalUnif, 40_000, None, 99).unwrap();
        assert!(
            est.sup_gap(&exact) < 0.02,
            "gap {} too large",
            est.sup_gap(&exact)
        );
    }

    #[test]
    fn high_prob_agrees_on_small_instance() {
        let g = fig3a();
        let pr = params(&g, 0.2, 0.0);
        let exact = exact_puv(&g, &pr).unwrap();
        let est = estimate_puv(&g, &pr, Scheme::HighProb, 40_000, None, 7).unwrap();
        assert!(est.sup_gap(&exact) < 0.02);
    }

    #[test]
    fn forced_pairs_are_exact() {
        let g = fig3a();
        let pr = params(&g, 0.5, 0.5);
        let tr = TrainingPairs::from_pairs(5, [(4u32, 3u32)]).unwrap();
        let est = estimate_puv(&g, &pr, Scheme::LocalUnif, 500, Some(&tr), 3).unwrap();
        assert_eq!(est.get(4, 3), 1.0);
        assert_eq!(est.get(3, 4), 0.0);
    }

    #[test]
    fn weighted_mean_matches_enumeration() {
        let g = fig3a();
        let pr = params(&g, 0.2, 0.0);
        let table = enumerate_orders(&g, &pr).unwrap();
        for scheme in [Scheme::LocalUnif, Scheme::HighProb, Scheme::AcceptReject] {
            let rep = weighted_mean_check(&g, &pr, scheme, 30_000, 5).unwrap();
            assert!(
                rep.within_se(table.log_denominator, 4.0),
                "{scheme}: log mean {} vs exact {}",
                rep.log_mean,
                table.log_denominator
            );
        }
    }

    #[test]
    fn high_prob_zero_variance_on_symmetric_graph() {
        // Edgeless non-seed tail: every candidate has the same step
        // likelihood at every step, and all paths carry the same weight.
        let g = Graph::from_edges(6, 3, &[(0, 1), (1, 2)]).unwrap();
        let pr = params(&g, 0.5, 0.5);
        let rep = weighted_mean_check(&g, &pr, Scheme::HighProb, 200, 11).unwrap();
        assert!(
            rep.shifted_se < 1e-12,
            "expected zero empirical variance, got se {}",
            rep.shifted_se
        );
    }

    #[test]
    fn accept_reject_matches_local_unif_distribution() {
        // Same first-removal distribution as local-unif on an asymmetric
        // instance (exercised further in the acceptance suite with a
        // chi-square test).
        let g = fig3a();
        let pr = params(&g, 0.2, 0.0);
        let mut counts = [0usize; 2];
        let trials = 4000;
        for i in 0..trials {
            let mut rng = stream(13, "t-ar", i);
            let path = sample_path(&g, &pr, Scheme::AcceptReject, None, &mut rng).unwrap();
            counts[(path.removed_sequence[0] == 3) as usize] += 1;
        }
        let frac = counts[1] as f64 / trials as f64;
        assert!((frac - 0.5).abs() < 0.05, "first-removal fraction {frac}");
    }

    #[test]
    fn deadlock_reported_when_no_candidate_is_feasible() {
        // Two seed nodes both adjacent only to the single non-seed node.
        // With p = 1, r = 0 no parent's neighborhood (excluding the child)
        // covers N(2) = {0, 1}, so the sole candidate is infeasible.
        let g = Graph::from_edges(3, 2, &[(0, 2), (1, 2)]).unwrap();
        let pr = DdParams { p: 1.0, r: 0.0, n: 3, n0: 2 };
        let mut rng = stream(14, "t-deadlock", 0);
        let err = sample_path(&g, &pr, Scheme::LocalUnif, None, &mut rng).unwrap_err();
        assert!(matches!(err, SamplerError::Deadlock { .. }));
    }

    #[test]
    fn checkpoint_resume_is_bit_identical() {
        let g = fig3a();
        let pr = params(&g, 0.3, 0.5);
        let seed = 123u64;
        // Uninterrupted run
        let mut full = Accumulator::new(5, 3).unwrap();
        run_paths(&g, &pr, Scheme::LocalUnif, 2000, None, seed, &mut full).unwrap();
        // Interrupted at 700 paths, serialized, resumed
        let mut part = Accumulator::new(5, 3).unwrap();
        run_paths(&g, &pr, Scheme::LocalUnif, 700, None, seed, &mut part).unwrap();
        let text = part.to_checkpoint(seed, Scheme::LocalUnif);
        let mut resumed = Accumulator::from_checkpoint(&text, seed, Scheme::LocalUnif).unwrap();
        run_paths(&g, &pr, Scheme::LocalUnif, 2000, None, seed, &mut resumed).unwrap();
        let a = full
            .finalize(None, Provenance::Sampled { paths: 2000, scheme: Scheme::LocalUnif })
            .unwrap();
        let b = resumed
            .finalize(None, Provenance::Sampled { paths: 2000, scheme: Scheme::LocalUnif })
            .unwrap();
        for u in 0..5u32 {
            for v in 0..5u32 {
                assert_eq!(a.get(u, v).to_bits(), b.get(u, v).to_bits());
            }
        }
    }

    #[test]
    fn checkpoint_mismatch_detected() {
        let acc = Accumulator::new(4, 2).unwrap();
        let text = acc.to_checkpoint(9, Scheme::LocalUnif);
        assert_eq!(
            Accumulator::from_checkpoint(&text, 9, Scheme::HighProb).unwrap_err(),
            SamplerError::CheckpointMismatch
        );
    }

    #[test]
    fn csv_round_trip() {
        let g = fig3a();
        let pr = params(&g, 0.2, 0.0);
        let m = exact_puv(&g, &pr).unwrap();
        let m2 = PuvMatrix::parse_csv(&m.to_csv(), 3).unwrap();
        for u in 0..5u32 {
            for v in 0..5u32 {
                if u != v {
                    assert_eq!(m.get(u, v).to_bits(), m2.get(u, v).to_bits());
                }
            }
        }
    }

    #[test]
    fn pu_scores_match_dense_path() {
        let g = fig3a();
        let pr = params(&g, 0.3, 0.5);
        let dense = estimate_puv(&g, &pr, Scheme::LocalUnif, 5000, None, 21).unwrap();
        let scores = estimate_pu_scores(&g, &pr, Scheme::LocalUnif, 5000, None, 21).unwrap();
        for v in 0..5u32 {
            assert_relative_eq!(dense.pu_sum(v), scores[v as usize], max_relative = 1e-9);
        }
    }
}
