//! Brute-force oracles for small snapshots: exact arrival-order
//! probabilities by enumeration, and exact pairwise precedence
//! probabilities via a subset dynamic program.
//!
//! Two independent routes compute the total probability mass of feasible
//! arrival orders (the denominator of the pairwise posterior): plain DFS
//! over removal sequences, and the peel recursion memoized on the set of
//! remaining non-seed nodes. Their agreement is part of the test suite, and
//! both serve as ground truth for the sampling estimator.

use crate::dd::{log_step_likelihood, log_sum_exp, DdError, DdParams};
use crate::graph::{Graph, NodeId};
use crate::sampler::{Provenance, PuvMatrix};
use thiserror::Error;

/// Hard cap on non-seed count for factorial enumeration.
pub const ENUMERATION_BOUND: usize = 10;

#[derive(Debug, Error, PartialEq)]
pub enum ExactError {
    #[error("{m} non-seed nodes exceed the enumeration bound {ENUMERATION_BOUND}")]
    TooLarge { m: usize },
    #[error("no arrival order has positive probability: graph and model disagree")]
    NoFeasibleOrder,
    #[error(transparent)]
    Dd(#[from] DdError),
}

/// Exact enumeration output: every feasible arrival order of the non-seed
/// nodes with its log-probability, their total, and the pairwise posterior.
#[derive(Debug, Clone)]
pub struct OrderProbabilityTable {
    /// (arrival order of non-seed nodes, oldest first; log P[G = σ⁻¹(H)]).
    pub orders: Vec<(Vec<NodeId>, f64)>,
    /// log Σ over feasible orders — the posterior normalizer.
    pub log_denominator: f64,
    /// Exact pairwise precedence probabilities.
    pub puv: PuvMatrix,
}

impl OrderProbabilityTable {
    /// Posterior probability of one enumerated order.
    pub fn conditional(&self, idx: usize) -> f64 {
        (self.orders[idx].1 - self.log_denominator).exp()
    }

    /// Posterior probability of a given non-seed arrival order, zero if
    /// infeasible.
    pub fn conditional_of(&self, order: &[NodeId]) -> f64 {
        self.orders
            .iter()
            .find(|(o, _)| o == order)
            .map_or(0.0, |(_, lp)| (lp - self.log_denominator).exp())
    }
}

fn non_seed_nodes(h: &Graph) -> Vec<NodeId> {
    h.nodes().filter(|&v| !h.is_seed(v)).collect()
}

/// Enumerates all feasible arrival orders of the non-seed nodes by DFS over
/// removal sequences, peeling youngest-first and multiplying step
/// likelihoods. Orders hitting a zero-likelihood step are skipped.
pub fn enumerate_orders(h: &Graph, params: &DdParams) -> Result<OrderProbabilityTable, ExactError> {
    let non_seed = non_seed_nodes(h);
    let m = non_seed.len();
    if m > ENUMERATION_BOUND {
        return Err(ExactError::TooLarge { m });
    }
    let mut orders: Vec<(Vec<NodeId>, f64)> = Vec::new();
    let mut removal: Vec<NodeId> = Vec::with_capacity(m);
    dfs(h, params, &mut removal, 0.0, &mut orders)?;
    if orders.is_empty() {
        return Err(ExactError::NoFeasibleOrder);
    }
    let log_denominator = log_sum_exp(&orders.iter().map(|(_, lp)| *lp).collect::<Vec<_>>());
    let puv = puv_from_orders(h, &orders, log_denominator);
    Ok(OrderProbabilityTable {
        orders,
        log_denominator,
        puv,
    })
}

fn dfs(
    h: &Graph,
    params: &DdParams,
    removal: &mut Vec<NodeId>,
    log_acc: f64,
    out: &mut Vec<(Vec<NodeId>, f64)>,
) -> Result<(), ExactError> {
    if h.n() == h.n0() {
        let mut arrival = removal.clone();
        arrival.reverse();
        out.push((arrival, log_acc));
        return Ok(());
    }
    for v in non_seed_nodes(h) {
        let lw = log_step_likelihood(h, v, params)?;
        if lw == f64::NEG_INFINITY {
            continue;
        }
        let peeled = h.delete_node(v).expect("non-seed, present");
        removal.push(v);
        dfs(&peeled, params, removal, log_acc + lw, out)?;
        removal.pop();
    }
    Ok(())
}

fn puv_from_orders(
    h: &Graph,
    orders: &[(Vec<NodeId>, f64)],
    log_denominator: f64,
) -> PuvMatrix {
    let n = h.id_bound();
    let n0 = h.n0();
    let mut num = vec![vec![f64::NEG_INFINITY; n]; n];
    for (order, lp) in orders {
        for i in 0..order.len() {
            for j in (i + 1)..order.len() {
                let (u, v) = (order[i] as usize, order[j] as usize);
                let cell = &mut num[u][v];
                *cell = log_sum_exp(&[*cell, *lp]);
            }
        }
    }
    let mut m = PuvMatrix::new_with_seed_convention(n, n0, Provenance::Exact);
    let non_seed = non_seed_nodes(h);
    for &u in &non_seed {
        for &v in &non_seed {
            if u < v {
                let puv = (num[u as usize][v as usize] - log_denominator).exp();
                m.set_pair(u, v, puv);
            }
        }
    }
    m
}

/// Exact pairwise precedence probabilities via the peel recursion memoized
/// on subsets of remaining non-seed nodes. Handles up to
/// [`ENUMERATION_BOUND`] non-seed nodes in O(2^m · m²).
pub fn exact_puv(h: &Graph, params: &DdParams) -> Result<PuvMatrix, ExactError> {
    let (denom, m) = subset_dp(h, params)?;
    let _ = denom;
    Ok(m)
}

/// Denominator of the pairwise posterior — the total probability mass of
/// feasible arrival orders — via the subset dynamic program.
pub fn log_denominator_recursive(h: &Graph, params: &DdParams) -> Result<f64, ExactError> {
    let (denom, _) = subset_dp(h, params)?;
    Ok(denom)
}

fn subset_dp(h: &Graph, params: &DdParams) -> Result<(f64, PuvMatrix), ExactError> {
    let non_seed = non_seed_nodes(h);
    let m = non_seed.len();
    if m > ENUMERATION_BOUND {
        return Err(ExactError::TooLarge { m });
    }
    let full: u32 = if m == 32 { u32::MAX } else { (1u32 << m) - 1 };
    let size = 1usize << m;

    // Graph for each subset is h with the absent non-seeds deleted.
    // w[mask][i] = log step likelihood of removing non_seed[i] from state(mask).
    let mut step_w = vec![Vec::new(); size];
    for mask in 1..=full {
        let mut g = h.clone();
        for (i, &v) in non_seed.iter().enumerate() {
            if mask >> i & 1 == 0 {
                g = g.delete_node(v).expect("non-seed");
            }
        }
        let mut ws = vec![f64::NEG_INFINITY; m];
        for (i, &v) in non_seed.iter().enumerate() {
            if mask >> i & 1 == 1 {
                ws[i] = log_step_likelihood(&g, v, params)?;
            }
        }
        step_w[mask as usize] = ws;
    }

    // completion[mask]: log Σ over removal sequences of state(mask) of Π w.
    let mut completion = vec![f64::NEG_INFINITY; size];
    completion[0] = 0.0;
    for mask in 1..=full {
        let mut terms = Vec::new();
        for i in 0..m {
            if mask >> i & 1 == 1 {
                let w = step_w[mask as usize][i];
                let rest = completion[(mask & !(1 << i)) as usize];
                if w > f64::NEG_INFINITY && rest > f64::NEG_INFINITY {
                    terms.push(w + rest);
                }
            }
        }
        completion[mask as usize] = log_sum_exp(&terms);
    }
    let denom = completion[full as usize];
    if denom == f64::NEG_INFINITY {
        return Err(ExactError::NoFeasibleOrder);
    }

    // forward[mask]: log Σ over peels from the full state down to state(mask).
    let mut forward = vec![f64::NEG_INFINITY; size];
    forward[full as usize] = 0.0;
    for mask in (0..full).rev() {
        let mut terms = Vec::new();
        for i in 0..m {
            if mask >> i & 1 == 0 {
                let sup = mask | 1 << i;
                let w = step_w[sup as usize][i];
                let before = forward[sup as usize];
                if w > f64::NEG_INFINITY && before > f64::NEG_INFINITY {
                    terms.push(before + w);
                }
            }
        }
        forward[mask as usize] = log_sum_exp(&terms);
    }

    // Pair numerators: v removed at a state where u is still present means
    // u arrived earlier.
    let mut num = vec![f64::NEG_INFINITY; m * m];
    let mut terms: Vec<Vec<f64>> = vec![Vec::new(); m * m];
    for mask in 1..=full {
        for i in 0..m {
            if mask >> i & 1 == 1 {
                let w = step_w[mask as usize][i];
                if w == f64::NEG_INFINITY {
                    continue;
                }
                let contrib = forward[mask as usize] + w + completion[(mask & !(1 << i)) as usize];
                if contrib == f64::NEG_INFINITY {
                    continue;
                }
                for j in 0..m {
                    if j != i && mask >> j & 1 == 1 {
                        terms[j * m + i].push(contrib);
                    }
                }
            }
        }
    }
    for (cell, ts) in num.iter_mut().zip(&terms) {
        *cell = log_sum_exp(ts);
    }

    let mut matrix =
        PuvMatrix::new_with_seed_convention(h.id_bound(), h.n0(), Provenance::Exact);
    for i in 0..m {
        for j in (i + 1)..m {
            let p = (num[i * m + j] - denom).exp();
            matrix.set_pair(non_seed[i], non_seed[j], p);
        }
    }
    Ok((denom, matrix))
}
