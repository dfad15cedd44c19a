//! Expected-degree recurrences for the duplication-divergence model and
//! simulation cross-checks of their scaling.
//!
//! One growth step multiplies the expected degree of an existing node by
//! `1 + p/t - r/t²` and adds `r/t`; a node arriving at time `t+1` lands with
//! expected degree `(p - r/t)·(2/t)·E(G_t) + r`. For `p > 0.5` the mean
//! degree of the arrival-`s` node at time `t` scales as `(t/s)^p s^{2p-1}`;
//! we check exponent-level fits only, never absolute constants.

use crate::dd::{generate, DdParams};
use crate::graph::Graph;
use crate::rng::stream;
use rayon::prelude::*;

/// Evaluates `E[deg_t(s)]` by running the one-step recursion from an initial
/// value `E[deg_s(s)] = initial`, left to right.
pub fn expected_degree_recursion(s: usize, t: usize, params: &DdParams, initial: f64) -> f64 {
    assert!(t >= s && s >= params.n0, "need t >= s >= n0");
    assert!(initial >= 0.0);
    let (p, r) = (params.p, params.r);
    let mut deg = initial;
    for k in s..t {
        let kf = k as f64;
        deg = deg * (1.0 + p / kf - r / (kf * kf)) + r / kf;
    }
    deg
}

/// Expected degree of the node arriving at time `t + 1`, from the mean edge
/// count `E[E(G_t)]`: `(p - r/t)·(2/t)·E + r`.
pub fn arrival_degree_mean(t: usize, params: &DdParams, mean_edges: f64) -> f64 {
    assert!(t >= params.n0);
    let tf = t as f64;
    (params.p - params.r / tf) * (2.0 / tf) * mean_edges + params.r
}

/// Ordinary least squares slope of y on x.
pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Least squares fit of `y = a·x1 + b·x2 + c`; returns (a, b, c).
pub fn fit_two_predictors(x1: &[f64], x2: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = y.len() as f64;
    let s = |v: &[f64]| v.iter().sum::<f64>();
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    // Normal equations for [a, b, c]
    let mut m = [
        [dot(x1, x1), dot(x1, x2), s(x1)],
        [dot(x1, x2), dot(x2, x2), s(x2)],
        [s(x1), s(x2), n],
    ];
    let mut rhs = [dot(x1, y), dot(x2, y), s(y)];
    // Gaussian elimination with partial pivoting on the 3x3 system.
    for col in 0..3 {
        let pivot = (col..3)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .expect("nonempty");
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in (col + 1)..3 {
            let f = m[row][col] / m[col][col];
            for k in col..3 {
                m[row][k] -= f * m[col][k];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut sol = [0.0; 3];
    for row in (0..3).rev() {
        let mut v = rhs[row];
        for k in (row + 1)..3 {
            v -= m[row][k] * sol[k];
        }
        sol[row] = v / m[row][row];
    }
    (sol[0], sol[1], sol[2])
}

/// One row of the degree report: simulated mean degree vs the recursion
/// value seeded from the arrival-degree identity.
#[derive(Debug, Clone)]
pub struct DegreeRow {
    pub s: usize,
    pub t: usize,
    pub simulated_mean: f64,
    pub recursion_value: f64,
    pub ratio: f64,
}

/// Result of the Lemma-style scaling fit over simulated degrees.
#[derive(Debug, Clone)]
pub struct ScalingReport {
    /// Fitted exponent of t/s (the lemma predicts p).
    pub t_exponent: f64,
    /// Fitted exponent of s (the lemma predicts 2p - 1).
    pub s_exponent: f64,
    pub rows: Vec<DegreeRow>,
}

/// Aggregate simulated means used by the degree checks: mean degree of the
/// rank-`s` node at time `t` for every grid pair, and mean edge counts at
/// requested times. Ids are arrival ranks, so a final graph encodes its own
/// history: `deg_t(s)` counts neighbors of node `s-1` with id `< t`.
fn simulate_degree_grid(
    params: &DdParams,
    seed_graph: &Graph,
    pairs: &[(usize, usize)],
    edge_times: &[usize],
    runs: usize,
    master_seed: u64,
) -> (Vec<f64>, Vec<f64>) {
    let per_run: Vec<(Vec<f64>, Vec<f64>)> = (0..runs as u64)
        .into_par_iter()
        .map(|run| {
            let mut rng = stream(master_seed, "degree-sim", run);
            let (g, _) = generate(params, seed_graph, &mut rng).expect("valid params");
            let degs: Vec<f64> = pairs
                .iter()
                .map(|&(s, t)| {
                    let node = (s - 1) as u32;
                    g.neighbors(node).iter().filter(|&&x| (x as usize) < t).count() as f64
                })
                .collect();
            let edges: Vec<f64> = edge_times
                .iter()
                .map(|&t| {
                    g.edges()
                        .iter()
                        .filter(|&&(u, v)| (u as usize) < t && (v as usize) < t)
                        .count() as f64
                })
                .collect();
            (degs, edges)
        })
        .collect();
    let mut mean_deg = vec![0.0; pairs.len()];
    let mut mean_edges = vec![0.0; edge_times.len()];
    for (degs, edges) in per_run {
        for (acc, d) in mean_deg.iter_mut().zip(degs) {
            *acc += d / runs as f64;
        }
        for (acc, e) in mean_edges.iter_mut().zip(edges) {
            *acc += e / runs as f64;
        }
    }
    (mean_deg, mean_edges)
}

/// Simulates `runs` graphs and fits `ln E[deg_t(s)]` against
/// `ln(t/s)` and `ln s`. Requires `p > 0.5`, where the scaling law holds.
pub fn scaling_check(
    params: &DdParams,
    seed_graph: &Graph,
    s_values: &[usize],
    t_values: &[usize],
    runs: usize,
    master_seed: u64,
) -> ScalingReport {
    assert!(params.p > 0.5, "scaling law requires p > 0.5");
    let mut pairs = Vec::new();
    for &s in s_values {
        for &t in t_values {
            if t >= s {
                pairs.push((s, t));
            }
        }
    }
    // Edge counts at s-1 seed the recursion with the arrival-degree identity.
    let mut edge_times: Vec<usize> = s_values.iter().map(|&s| s - 1).collect();
    edge_times.sort_unstable();
    edge_times.dedup();
    let (mean_deg, mean_edges) =
        simulate_degree_grid(params, seed_graph, &pairs, &edge_times, runs, master_seed);

    let mut rows = Vec::with_capacity(pairs.len());
    for (&(s, t), &sim) in pairs.iter().zip(&mean_deg) {
        let e_idx = edge_times.binary_search(&(s - 1)).expect("present");
        let initial = arrival_degree_mean(s - 1, params, mean_edges[e_idx]);
        let rec = expected_degree_recursion(s, t, params, initial);
        rows.push(DegreeRow {
            s,
            t,
            simulated_mean: sim,
            recursion_value: rec,
            ratio: sim / rec,
        });
    }
    let x1: Vec<f64> = rows.iter().map(|r| (r.t as f64 / r.s as f64).ln()).collect();
    let x2: Vec<f64> = rows.iter().map(|r| (r.s as f64).ln()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.simulated_mean.max(1e-9).ln()).collect();
    let (a, b, _c) = fit_two_predictors(&x1, &x2, &y);
    ScalingReport {
        t_exponent: a,
        s_exponent: b,
        rows,
    }
}

/// Log-log slope of mean edge count against t over simulated runs.
pub fn edge_count_slope(
    params: &DdParams,
    seed_graph: &Graph,
    t_values: &[usize],
    runs: usize,
    master_seed: u64,
) -> f64 {
    let (_, mean_edges) =
        simulate_degree_grid(params, seed_graph, &[], t_values, runs, master_seed);
    let xs: Vec<f64> = t_values.iter().map(|&t| (t as f64).ln()).collect();
    let ys: Vec<f64> = mean_edges.iter().map(|&e| e.ln()).collect();
    least_squares_slope(&xs, &ys)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params(p: f64, r: f64, n: usize, n0: usize) -> DdParams {
        DdParams { p, r, n, n0 }
    }

    #[test]
    fn recursion_t_equals_s_is_initial() {
        let pr = params(0.7, 0.5, 100, 10);
        assert_eq!(expected_degree_recursion(20, 20, &pr, 3.5), 3.5);
    }

    #[test]
    fn recursion_r_zero_power_growth() {
        // With r = 0 the product Π (1 + p/k) tracks (t/s)^p up to a bounded
        // ratio that tends to 1 for large s.
        let pr = params(0.8, 0.0, 4000, 10);
        let v = expected_degree_recursion(200, 4000, &pr, 1.0);
        let power = (4000.0f64 / 200.0).powf(0.8);
        assert!((v / power - 1.0).abs() < 0.02, "ratio {}", v / power);
    }

    #[test]
    fn recursion_monotone_when_p_dominates() {
        let pr = params(0.6, 0.5, 1000, 10);
        let mut last = 0.8;
        for t in 11..200 {
            let next = expected_degree_recursion(10, t, &pr, 0.8);
            assert!(next >= last - 1e-12);
            last = next;
        }
    }

    #[test]
    fn arrival_degree_boundary_cases() {
        // p = r/t: first term vanishes, value is r.
        let pr = params(0.01, 1.0, 200, 10);
        assert_relative_eq!(arrival_degree_mean(100, &pr, 777.0), 1.0);
        // empty graph: value is r.
        let pr2 = params(0.9, 0.25, 200, 10);
        assert_relative_eq!(arrival_degree_mean(50, &pr2, 0.0), 0.25);
    }

    #[test]
    fn one_step_conditional_expectation_matches_simulation() {
        // For a fixed G_t, the conditional mean of deg_{t+1}(s) is
        // deg_t(s)(1 + p/t - r/t²) + r/t.
        let mut rng = crate::rng::stream(17, "deg-onestep", 0);
        let seed_graph = Graph::erdos_renyi_seed(10, 0.5, &mut rng);
        let pr = params(0.6, 0.8, 30, 10);
        let (g, _) = generate(&pr, &seed_graph, &mut rng).unwrap();
        let t = 30usize;
        let node = 4u32;
        let d0 = g.degree(node) as f64;
        let step = params(0.6, 0.8, 31, 30);
        let trials = 20_000u64;
        let mut total = 0.0;
        for i in 0..trials {
            let mut r2 = crate::rng::stream(18, "deg-onestep-trial", i);
            let (g2, _) = generate(&step, &g, &mut r2).unwrap();
            total += g2.degree(node) as f64;
        }
        let sim = total / trials as f64;
        let tf = t as f64;
        let expect = d0 * (1.0 + 0.6 / tf - 0.8 / (tf * tf)) + 0.8 / tf;
        // Monte Carlo tolerance: one added edge is Bernoulli-ish
        assert!((sim - expect).abs() < 0.03, "sim {sim} vs expect {expect}");
    }

    #[test]
    fn two_predictor_fit_recovers_exact_plane() {
        let x1 = [0.0, 1.0, 2.0, 0.5, 1.5, 2.5];
        let x2 = [1.0, 0.0, 1.0, 2.0, 0.5, 1.5];
        let y: Vec<f64> = x1
            .iter()
            .zip(&x2)
            .map(|(a, b)| 0.7 * a - 0.3 * b + 2.0)
            .collect();
        let (a, b, c) = fit_two_predictors(&x1, &x2, &y);
        assert_relative_eq!(a, 0.7, epsilon = 1e-10);
        assert_relative_eq!(b, -0.3, epsilon = 1e-10);
        assert_relative_eq!(c, 2.0, epsilon = 1e-10);
    }
}
