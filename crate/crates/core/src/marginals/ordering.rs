use std::collections::BTreeSet;

/// Minimum-degree elimination order over variable blocks, eliminating all
/// blocks of stage 0 before any block of stage 1, and so on.
///
/// Degrees are weighted by the scalar dimension of each neighbour. Ties go to
/// the lower block index, so the result is deterministic.
pub fn constrained_minimum_degree(adjacency: &[BTreeSet<usize>], dims: &[usize], stage: &[u8]) -> Vec<usize> {
    let n = adjacency.len();
    assert_eq!(dims.len(), n);
    assert_eq!(stage.len(), n);
    let mut adj: Vec<BTreeSet<usize>> = adjacency.to_vec();
    let mut eliminated = vec![false; n];
    let mut order = Vec::with_capacity(n);

    let mut stages: Vec<u8> = stage.to_vec();
    stages.sort_unstable();
    stages.dedup();

    for s in stages {
        let mut remaining: BTreeSet<(usize, usize)> =
            (0..n).filter(|&b| stage[b] == s).map(|b| (weighted_degree(&adj[b], dims), b)).collect();
        while let Some(&(deg, b)) = remaining.iter().next() {
            remaining.remove(&(deg, b));
            eliminated[b] = true;
            order.push(b);

            let nbrs: Vec<usize> = adj[b].iter().copied().collect();
            let before: Vec<usize> = nbrs.iter().map(|&v| weighted_degree(&adj[v], dims)).collect();
            for &u in &nbrs {
                adj[u].remove(&b);
                for &v in &nbrs {
                    if u != v {
                        adj[u].insert(v);
                    }
                }
            }
            adj[b].clear();
            for (&u, &old) in nbrs.iter().zip(&before) {
                if !eliminated[u] && stage[u] == s && remaining.remove(&(old, u)) {
                    remaining.insert((weighted_degree(&adj[u], dims), u));
                }
            }
        }
    }
    order
}

fn weighted_degree(nbrs: &BTreeSet<usize>, dims: &[usize]) -> usize {
    nbrs.iter().map(|&v| dims[v]).sum()
}
