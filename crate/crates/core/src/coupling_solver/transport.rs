//! Exact discrete optimal transport.
//!
//! `solve` is a transportation simplex (north-west corner start, MODI
//! potentials, Bland's entering/leaving rule). `brute_force` enumerates every
//! spanning-forest support and is only meant as an oracle on tiny inputs.

use ndarray::Array2;

use crate::error::{Error, Result};

const REDUCED_COST_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub(crate) struct TransportPlan {
    pub plan: Array2<f64>,
    pub cost: f64,
}

fn plan_cost(plan: &Array2<f64>, cost: &Array2<f64>) -> f64 {
    plan.iter().zip(cost.iter()).map(|(p, c)| p * c).sum()
}

/// Path between two nodes of the basis tree. Nodes `0..m` are rows and
/// `m..m+n` columns; returns the cells along the path in order.
fn tree_path(basis: &[(usize, usize)], m: usize, n: usize, from: usize, to: usize) -> Vec<(usize, usize)> {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); m + n];
    for (k, &(i, j)) in basis.iter().enumerate() {
        adj[i].push(k);
        adj[m + j].push(k);
    }
    let mut via: Vec<Option<usize>> = vec![None; m + n];
    let mut seen = vec![false; m + n];
    let mut stack = vec![from];
    seen[from] = true;
    while let Some(node) = stack.pop() {
        if node == to {
            break;
        }
        for &k in &adj[node] {
            let (i, j) = basis[k];
            let other = if node < m { m + j } else { i };
            if !seen[other] {
                seen[other] = true;
                via[other] = Some(k);
                stack.push(other);
            }
        }
    }
    let mut path = Vec::new();
    let mut node = to;
    while node != from {
        let k = via[node].expect("basis is a spanning tree");
        let (i, j) = basis[k];
        path.push((i, j));
        node = if node < m { m + j } else { i };
    }
    path.reverse();
    path
}

pub(crate) fn solve(a: &[f64], b: &[f64], cost: &Array2<f64>) -> TransportPlan {
    let (m, n) = (a.len(), b.len());
    let mut plan = Array2::zeros((m, n));
    let mut basis = Vec::with_capacity(m + n - 1);
    let (mut ra, mut rb) = (a.to_vec(), b.to_vec());
    let (mut i, mut j) = (0, 0);
    loop {
        let q = ra[i].min(rb[j]).max(0.0);
        plan[[i, j]] = q;
        basis.push((i, j));
        ra[i] -= q;
        rb[j] -= q;
        if i == m - 1 && j == n - 1 {
            break;
        }
        if j == n - 1 || (i < m - 1 && ra[i] <= rb[j]) {
            i += 1;
        } else {
            j += 1;
        }
    }

    let max_pivots = 50 * m * n + 100;
    for _ in 0..max_pivots {
        // potentials u_i + v_j = c_ij on the basis tree
        let mut u = vec![f64::NAN; m];
        let mut v = vec![f64::NAN; n];
        u[0] = 0.0;
        let mut changed = true;
        while changed {
            changed = false;
            for &(i, j) in &basis {
                if !u[i].is_nan() && v[j].is_nan() {
                    v[j] = cost[[i, j]] - u[i];
                    changed = true;
                } else if u[i].is_nan() && !v[j].is_nan() {
                    u[i] = cost[[i, j]] - v[j];
                    changed = true;
                }
            }
        }
        let mut entering = None;
        'search: for i in 0..m {
            for j in 0..n {
                if cost[[i, j]] - u[i] - v[j] < -REDUCED_COST_TOL * (1.0 + cost[[i, j]].abs())
                    && !basis.contains(&(i, j))
                {
                    entering = Some((i, j));
                    break 'search;
                }
            }
        }
        let Some((ei, ej)) = entering else {
            break;
        };
        // cycle: entering cell (+), then the tree path from column ej back to row ei
        let path = tree_path(&basis, m, n, m + ej, ei);
        let mut leave: Option<(usize, usize)> = None;
        let mut theta = f64::INFINITY;
        for (k, &cell) in path.iter().enumerate() {
            if k % 2 == 0 {
                let x = plan[cell];
                let better = x < theta || (x == theta && leave.is_some_and(|l| cell < l));
                if better {
                    theta = x;
                    leave = Some(cell);
                }
            }
        }
        let leave = leave.expect("cycle has a decreasing cell");
        plan[[ei, ej]] += theta;
        for (k, &cell) in path.iter().enumerate() {
            if k % 2 == 0 {
                plan[cell] -= theta;
            } else {
                plan[cell] += theta;
            }
        }
        plan[leave] = 0.0;
        let pos = basis.iter().position(|&c| c == leave).unwrap();
        basis[pos] = (ei, ej);
    }
    plan.mapv_inplace(|x| x.max(0.0));
    let cost_value = plan_cost(&plan, cost);
    TransportPlan { plan, cost: cost_value }
}

pub const OT_BRUTE_FORCE_CAP: usize = 4;

/// Minimum transport cost by enumerating all vertices of the transportation
/// polytope (supports forming a forest in the bipartite row/column graph).
pub(crate) fn brute_force(a: &[f64], b: &[f64], cost: &Array2<f64>) -> Result<f64> {
    let (m, n) = (a.len(), b.len());
    if m > OT_BRUTE_FORCE_CAP || n > OT_BRUTE_FORCE_CAP {
        return Err(Error::CapExceeded {
            what: "transport alphabet",
            size: m.max(n),
            cap: OT_BRUTE_FORCE_CAP,
        });
    }
    let cells: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let mut best = f64::INFINITY;
    for mask in 1u32..(1u32 << cells.len()) {
        if mask.count_ones() as usize > m + n - 1 {
            continue;
        }
        let support: Vec<(usize, usize)> = cells
            .iter()
            .enumerate()
            .filter(|(k, _)| mask & (1 << k) != 0)
            .map(|(_, &c)| c)
            .collect();
        if let Some(x) = peel(a, b, &support) {
            let c: f64 = support.iter().zip(&x).map(|(&(i, j), v)| v * cost[[i, j]]).sum();
            best = best.min(c);
        }
    }
    Ok(best)
}

/// Solves the marginal equations on a forest support by repeatedly fixing a
/// cell at a leaf. Returns `None` for cyclic supports, negative flows or
/// unmatched marginals.
fn peel(a: &[f64], b: &[f64], support: &[(usize, usize)]) -> Option<Vec<f64>> {
    let m = a.len();
    let mut left = a.to_vec();
    left.extend_from_slice(b);
    let mut alive = vec![true; support.len()];
    let mut x = vec![0.0; support.len()];
    for _ in 0..support.len() {
        let mut degree = vec![0usize; left.len()];
        for (k, &(i, j)) in support.iter().enumerate() {
            if alive[k] {
                degree[i] += 1;
                degree[m + j] += 1;
            }
        }
        let leaf = support.iter().enumerate().find_map(|(k, &(i, j))| {
            if !alive[k] {
                None
            } else if degree[i] == 1 {
                Some((k, i, m + j))
            } else if degree[m + j] == 1 {
                Some((k, m + j, i))
            } else {
                None
            }
        });
        // no leaf among live cells means a cycle
        let (k, leaf_node, other) = leaf?;
        let v = left[leaf_node];
        if v < -1e-12 {
            return None;
        }
        x[k] = v.max(0.0);
        left[leaf_node] = 0.0;
        left[other] -= v;
        alive[k] = false;
    }
    if left.iter().all(|r| r.abs() < 1e-12) {
        Some(x)
    } else {
        None
    }
}
