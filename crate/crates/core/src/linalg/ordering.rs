use std::collections::VecDeque;

use super::sparse::SparseMatrix;

/// Reverse Cuthill–McKee ordering of a structurally symmetric matrix.
/// Returns `perm` with `perm[new] = old`. Deterministic for a given pattern.
pub fn reverse_cuthill_mckee(a: &SparseMatrix) -> Vec<usize> {
    let n = a.nrows();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (r, c, _) in a.triplets() {
        if r != c {
            adj[r].push(c);
            adj[c].push(r);
        }
    }
    for nb in adj.iter_mut() {
        nb.sort_unstable();
        nb.dedup();
    }
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    for nb in adj.iter_mut() {
        nb.sort_by_key(|&v| (degree[v], v));
    }

    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut level = vec![usize::MAX; n];
    while let Some(seed) = (0..n).filter(|&v| !visited[v]).min_by_key(|&v| (degree[v], v)) {
        let root = pseudo_peripheral(seed, &adj, &mut level);
        let mut queue = VecDeque::from([root]);
        visited[root] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &w in &adj[v] {
                if !visited[w] {
                    visited[w] = true;
                    queue.push_back(w);
                }
            }
        }
    }
    order.reverse();
    order
}

fn pseudo_peripheral(seed: usize, adj: &[Vec<usize>], level: &mut [usize]) -> usize {
    let mut root = seed;
    let mut ecc = bfs_levels(root, adj, level);
    for _ in 0..8 {
        let (far, _) = ecc.1;
        let next = bfs_levels(far, adj, level);
        if next.0 <= ecc.0 {
            break;
        }
        root = far;
        ecc = next;
    }
    root
}

/// BFS from `root`; returns (eccentricity, (min-degree vertex in last level, its degree)).
fn bfs_levels(root: usize, adj: &[Vec<usize>], level: &mut [usize]) -> (usize, (usize, usize)) {
    let mut touched = vec![root];
    level[root] = 0;
    let mut queue = VecDeque::from([root]);
    let mut maxl = 0;
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if level[w] == usize::MAX {
                level[w] = level[v] + 1;
                maxl = maxl.max(level[w]);
                touched.push(w);
                queue.push_back(w);
            }
        }
    }
    let best = touched
        .iter()
        .filter(|&&v| level[v] == maxl)
        .map(|&v| (v, adj[v].len()))
        .min_by_key(|&(v, d)| (d, v))
        .unwrap_or((root, 0));
    for v in touched {
        level[v] = usize::MAX;
    }
    (maxl, best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_graph_gets_unit_bandwidth() {
        // Path 0-3-1-4-2 scrambled.
        let edges = [(0, 3), (3, 1), (1, 4), (4, 2)];
        let mut t = Vec::new();
        for i in 0..5 {
            t.push((i, i, 1.0));
        }
        for &(a, b) in &edges {
            t.push((a, b, 1.0));
            t.push((b, a, 1.0));
        }
        let a = SparseMatrix::from_triplets(5, 5, &t);
        let perm = reverse_cuthill_mckee(&a);
        let mut iperm = [0; 5];
        for (k, &p) in perm.iter().enumerate() {
            iperm[p] = k;
        }
        for &(x, y) in &edges {
            assert_eq!((iperm[x] as i64 - iperm[y] as i64).abs(), 1);
        }
    }
}
