//! Exact minimum-cost perfect matching (Hungarian algorithm with potentials,
//! O(n^3)) for square dense cost matrices.

use crate::exec;

/// Solves the assignment problem for an `n x n` cost matrix given by
/// `cost(i, j)`. Returns `(assign, total)` where `assign[i]` is the column
/// matched to row `i` and `total` the optimal cost.
///
/// The cost matrix is materialized up front (rows in parallel); the matching
/// itself is sequential and deterministic.
pub fn solve_assignment(n: usize, cost: &(dyn Fn(usize, usize) -> f64 + Sync)) -> (Vec<usize>, f64) {
    assert!(n > 0);
    let rows: Vec<Vec<f64>> = exec::map_indexed(n, |i| (0..n).map(|j| cost(i, j)).collect());

    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1]; // row matched to column j (1-based, 0 = free)
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            let row = &rows[i0 - 1];
            for j in 1..=n {
                if !used[j] {
                    let cur = row[j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assign = vec![0usize; n];
    for j in 1..=n {
        assign[p[j] - 1] = j - 1;
    }
    let total = assign.iter().enumerate().map(|(i, &j)| rows[i][j]).sum();
    (assign, total)
}
