//! Pastor-Satorras duplication-divergence model: growth, and the one-step
//! likelihoods that every inference path in this crate is built on.
//!
//! Growth step, graph of size k -> k+1: the new node picks a parent uniformly
//! at random, inherits each parent neighbor independently with probability
//! `p`, and gains an edge to each remaining node (those outside the parent's
//! neighborhood, parent included) independently with probability `r/k`.
//! Likelihoods follow the same decomposition, so summing the one-step
//! likelihood over all possible child neighborhoods gives exactly 1; that
//! conservation property is tested by brute force below.
//!
//! All likelihood arithmetic is carried in log space: peeling a large
//! snapshot multiplies hundreds of sub-unity factors.

use crate::graph::{Graph, NodeId};
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DdError {
    #[error("p = {0} outside [0, 1]")]
    BadP(f64),
    #[error("r = {0} negative")]
    BadR(f64),
    #[error("n = {n} must be at least n0 = {n0} (and n0 >= 1)")]
    BadSize { n: usize, n0: usize },
    #[error("r = {r} exceeds smallest step size k = {k}: r/k is not a probability")]
    RTooLarge { r: f64, k: usize },
    #[error("graph has only seed nodes; no step to evaluate")]
    SeedOnly,
    #[error("nodes {0} and {1} must be distinct, present nodes")]
    BadPair(NodeId, NodeId),
}

/// Parameters of `DD-model(n, p, r, seed)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DdParams {
    /// Retention probability for copied edges.
    pub p: f64,
    /// Expected extra-edge budget; each outside node linked w.p. `r/k`.
    pub r: f64,
    /// Target node count.
    pub n: usize,
    /// Seed size.
    pub n0: usize,
}

impl DdParams {
    pub fn new(n: usize, p: f64, r: f64, n0: usize) -> Result<DdParams, DdError> {
        let params = DdParams { p, r, n, n0 };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), DdError> {
        if !(0.0..=1.0).contains(&self.p) || self.p.is_nan() {
            return Err(DdError::BadP(self.p));
        }
        if self.r < 0.0 || self.r.is_nan() {
            return Err(DdError::BadR(self.r));
        }
        if self.n0 < 1 || self.n < self.n0 {
            return Err(DdError::BadSize {
                n: self.n,
                n0: self.n0,
            });
        }
        // r/k must be a probability at every growth step k in [n0, n).
        if self.n > self.n0 && self.r > self.n0 as f64 {
            return Err(DdError::RTooLarge {
                r: self.r,
                k: self.n0,
            });
        }
        Ok(())
    }

    /// True when every non-seed node is removable regardless of structure:
    /// interior parameters give every neighborhood outcome positive mass.
    pub fn all_feasible(&self) -> bool {
        self.p > 0.0 && self.p < 1.0 && self.r > 0.0
    }
}

/// Grows a DD graph from `seed`. Node id equals arrival rank, so the
/// returned arrival order is `0..n`; it is returned explicitly because every
/// consumer treats the ground truth as data, not as a convention.
pub fn generate(
    params: &DdParams,
    seed: &Graph,
    rng: &mut impl Rng,
) -> Result<(Graph, Vec<NodeId>), DdError> {
    params.validate()?;
    assert_eq!(seed.n(), params.n0, "seed graph must have n0 nodes");
    let n = params.n;
    let mut g = Graph::empty(n, params.n0).expect("n >= n0");
    for (u, v) in seed.edges() {
        g.add_edge(u, v).expect("seed edges are valid");
    }
    let mut inherit = Vec::new();
    for new in params.n0 as NodeId..n as NodeId {
        let k = new as usize; // current size
        let parent = rng.random_range(0..k) as NodeId;
        inherit.clear();
        inherit.extend_from_slice(g.neighbors(parent));
        let mut linked = vec![false; k];
        for &w in &inherit {
            if rng.random::<f64>() < params.p {
                linked[w as usize] = true;
            }
        }
        if params.r > 0.0 {
            let rho = params.r / k as f64;
            // Extra edges go to nodes outside the parent's neighborhood
            // (parent included); dropped copies are not revisited, matching
            // the likelihood decomposition.
            for x in 0..k {
                let outside = !inherit.contains(&(x as NodeId));
                if outside && rng.random::<f64>() < rho {
                    linked[x] = true;
                }
            }
        }
        for (x, &is_linked) in linked.iter().enumerate() {
            if is_linked {
                g.add_edge(new, x as NodeId).expect("fresh endpoint");
            }
        }
    }
    Ok((g, (0..n as NodeId).collect()))
}

/// Log of one parent term of the step likelihood, from the set sizes:
/// `a = |N(v) ∩ N(u)|`, `b = |N(u) \ N(v)|`, `c = |N(v) \ N(u)|`,
/// with `k` existing nodes. Returns `-inf` for impossible outcomes.
/// Zero-exponent corner cases evaluate to 1 so the result is continuous
/// in `p` and `r`.
pub fn log_parent_term(a: usize, b: usize, c: usize, k: usize, p: f64, r: f64) -> f64 {
    debug_assert!(a + b + c <= k);
    let mut lw = -(k as f64).ln();
    if a > 0 {
        if p == 0.0 {
            return f64::NEG_INFINITY;
        }
        lw += a as f64 * p.ln();
    }
    if b > 0 {
        if p == 1.0 {
            return f64::NEG_INFINITY;
        }
        lw += b as f64 * (1.0 - p).ln();
    }
    let rho = r / k as f64;
    if c > 0 {
        if rho == 0.0 {
            return f64::NEG_INFINITY;
        }
        lw += c as f64 * rho.ln();
    }
    let e = k - a - b - c;
    if e > 0 {
        if rho >= 1.0 {
            return f64::NEG_INFINITY;
        }
        lw += e as f64 * (-rho).ln_1p();
    }
    lw
}

fn parent_counts(h: &Graph, v: NodeId, u: NodeId) -> (usize, usize, usize) {
    let a = h.common_neighbors(u, v);
    let adjacent = h.has_edge(u, v) as usize;
    // N(u) excludes v; N(v) keeps u, since an edge v-u can only be an extra.
    let b = h.degree(u) - adjacent - a;
    let c = h.degree(v) - a;
    (a, b, c)
}

/// Log-probability that `u` was the parent of `v` at the step that created
/// `v`, i.e. `ln w(δ(H_t, v), u, H_t)` with `t = |nodes(h)|`. Neighborhoods
/// of `u` are taken with `v` excluded: a parent cannot have been adjacent to
/// a child that did not exist yet.
pub fn log_parent_likelihood(
    h: &Graph,
    v: NodeId,
    u: NodeId,
    params: &DdParams,
) -> Result<f64, DdError> {
    if u == v || !h.contains(u) || !h.contains(v) {
        return Err(DdError::BadPair(u, v));
    }
    let k = h.n() - 1;
    if params.r > k as f64 {
        return Err(DdError::RTooLarge { r: params.r, k });
    }
    let (a, b, c) = parent_counts(h, v, u);
    Ok(log_parent_term(a, b, c, k, params.p, params.r))
}

/// Numerically stable log of a sum of exponentials.
pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let s: f64 = terms.iter().map(|&t| (t - m).exp()).sum();
    m + s.ln()
}

/// Log step likelihood `ln w(δ(H_t, v), H_t)`: probability that the graph
/// with `v` removed evolves into `h` in one step, summed over candidate
/// parents.
pub fn log_step_likelihood(h: &Graph, v: NodeId, params: &DdParams) -> Result<f64, DdError> {
    if h.n() <= params.n0 {
        return Err(DdError::SeedOnly);
    }
    if !h.contains(v) {
        return Err(DdError::BadPair(v, v));
    }
    let mut terms = Vec::with_capacity(h.n() - 1);
    for u in h.nodes() {
        if u != v {
            terms.push(log_parent_likelihood(h, v, u, params)?);
        }
    }
    Ok(log_sum_exp(&terms))
}

/// Nodes that may be removed as the youngest: for interior parameters all
/// non-seed nodes; at boundary parameters (`r = 0` or `p ∈ {0,1}`) only
/// those with positive step likelihood.
pub fn removable_set(h: &Graph, params: &DdParams) -> Vec<NodeId> {
    h.nodes()
        .filter(|&v| !h.is_seed(v))
        .filter(|&v| {
            params.all_feasible()
                || log_step_likelihood(h, v, params).is_ok_and(|lw| lw > f64::NEG_INFINITY)
        })
        .collect()
}
