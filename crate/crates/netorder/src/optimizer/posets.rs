//! Enumeration of labeled strict partial orders on small ground sets.
//!
//! A poset is stored as successor bitmasks: bit v of `succ[u]` set means
//! u < v. Enumeration walks all antisymmetric pair assignments (3 states per
//! unordered pair) in lexicographic order and keeps the transitively closed
//! ones, so the output order is deterministic.

/// Successor-mask representation of one strict partial order.
pub type Poset = Vec<u32>;

/// True when the relation is its own transitive closure.
fn is_closed(succ: &[u32]) -> bool {
    for u in 0..succ.len() {
        let mut rest = succ[u];
        while rest != 0 {
            let v = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            if succ[v] & !succ[u] != 0 {
                return false;
            }
        }
    }
    true
}

/// All labeled strict partial orders on `n` elements, lexicographic in the
/// pair-assignment odometer. Counts grow as 1, 1, 3, 19, 219, 4231, 130023.
pub fn enumerate_posets(n: usize) -> Vec<Poset> {
    assert!(n <= 6, "poset enumeration limited to n <= 6");
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|u| ((u + 1)..n).map(move |v| (u, v)))
        .collect();
    let np = pairs.len();
    let mut out = Vec::new();
    // states[i]: 0 incomparable, 1 forward (u < v), 2 backward (v < u)
    let mut states = vec![0u8; np];
    loop {
        let mut succ = vec![0u32; n];
        for (i, &(u, v)) in pairs.iter().enumerate() {
            match states[i] {
                1 => succ[u] |= 1 << v,
                2 => succ[v] |= 1 << u,
                _ => {}
            }
        }
        if is_closed(&succ) {
            out.push(succ);
        }
        // odometer increment
        let mut i = np;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if states[i] < 2 {
                states[i] += 1;
                for s in &mut states[i + 1..] {
                    *s = 0;
                }
                break;
            }
        }
    }
}

/// Number of comparable pairs of a poset.
pub fn pair_count(p: &Poset) -> usize {
    p.iter().map(|m| m.count_ones() as usize).sum()
}
