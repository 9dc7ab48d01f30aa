//! Minimum-cost assignment on square matrices.
//!
//! Two interchangeable solvers: an O(k!) exhaustive search used for small
//! instances and as an oracle, and an O(k^3) Hungarian algorithm
//! (shortest-augmenting-path formulation with row/column potentials) for
//! larger ones. Both return the assignment cost recomputed as
//! `sum_i cost[i][assign[i]]` in row order, so equal assignments produce
//! bit-identical totals.

/// Cost of a fixed assignment, summed in row order.
pub fn assignment_cost(cost: &[Vec<f64>], assign: &[usize]) -> f64 {
    assign.iter().enumerate().map(|(i, &j)| cost[i][j]).sum()
}

/// Exhaustive minimum over all permutations (Heap's algorithm, no allocation
/// per permutation). Intended for k <= 8 or so.
pub fn min_cost_exhaustive(cost: &[Vec<f64>]) -> f64 {
    let k = cost.len();
    if k == 0 {
        return 0.0;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    let mut best = assignment_cost(cost, &idx);
    let mut c = vec![0usize; k];
    let mut i = 0;
    while i < k {
        if c[i] < i {
            if i % 2 == 0 {
                idx.swap(0, i);
            } else {
                idx.swap(c[i], i);
            }
            let cur = assignment_cost(cost, &idx);
            if cur < best {
                best = cur;
            }
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best
}

/// Hungarian algorithm on a square cost matrix. Returns `assign` with
/// `assign[row] = column` and the total cost of that assignment.
pub fn min_cost_hungarian(cost: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let n = cost.len();
    if n == 0 {
        return (Vec::new(), 0.0);
    }
    debug_assert!(cost.iter().all(|row| row.len() == n));

    // 1-based potentials; p[j] is the row matched to column j (0 = none).
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
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
        if p[j] > 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    let total = assignment_cost(cost, &assign);
    (assign, total)
}
