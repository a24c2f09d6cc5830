//! Log-domain Sinkhorn for `min_π E_π[c] + ε·KL(π ‖ a⊗b)` over couplings of
//! `(a, b)`. With potentials `(f, h)` the plan is
//! `π = a b exp((f + h - c)/ε)`; after a row update the plan has total mass
//! one, so `Σ a f + Σ b h` is a valid lower bound on the regularized optimum.

use ndarray::Array2;

pub(crate) const MARGINAL_TOL: f64 = 1e-11;

#[derive(Debug, Clone)]
pub(crate) struct SinkhornState {
    pub f: Vec<f64>,
    pub h: Vec<f64>,
}

impl SinkhornState {
    pub fn zeros(m: usize, n: usize) -> Self {
        Self {
            f: vec![0.0; m],
            h: vec![0.0; n],
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct SinkhornOutcome {
    pub plan: Array2<f64>,
    /// Lower bound on the regularized optimum.
    pub dual: f64,
    /// `I` of the plan under its own marginals.
    pub rate: f64,
    pub converged: bool,
}

fn soft_min(values: impl Iterator<Item = f64> + Clone, eps: f64) -> f64 {
    // -ε ln Σ exp(-x/ε) with weights folded into the values by the caller
    let m = values.clone().fold(f64::INFINITY, f64::min);
    if m == f64::INFINITY {
        return f64::INFINITY;
    }
    let s: f64 = values.map(|x| (-(x - m) / eps).exp()).sum();
    m - eps * s.ln()
}

pub(crate) fn solve(
    a: &[f64],
    b: &[f64],
    cost: &Array2<f64>,
    eps: f64,
    state: &mut SinkhornState,
    max_iter: usize,
) -> SinkhornOutcome {
    let (m, n) = (a.len(), b.len());
    let log_a: Vec<f64> = a.iter().map(|x| x.ln()).collect();
    let log_b: Vec<f64> = b.iter().map(|x| x.ln()).collect();
    let mut converged = false;
    for _ in 0..max_iter {
        for j in 0..n {
            state.h[j] = soft_min((0..m).map(|i| cost[[i, j]] - state.f[i] - eps * log_a[i]), eps);
        }
        for i in 0..m {
            state.f[i] = soft_min((0..n).map(|j| cost[[i, j]] - state.h[j] - eps * log_b[j]), eps);
        }
        // rows are exact now; measure the column error
        let mut err = 0.0;
        for j in 0..n {
            let col: f64 = (0..m)
                .map(|i| (log_a[i] + log_b[j] + (state.f[i] + state.h[j] - cost[[i, j]]) / eps).exp())
                .sum();
            err += (col - b[j]).abs();
        }
        if err <= MARGINAL_TOL {
            converged = true;
            break;
        }
    }
    let plan = Array2::from_shape_fn((m, n), |(i, j)| {
        (log_a[i] + log_b[j] + (state.f[i] + state.h[j] - cost[[i, j]]) / eps).exp()
    });
    let dual = a.iter().zip(&state.f).map(|(x, f)| x * f).sum::<f64>()
        + b.iter().zip(&state.h).map(|(x, h)| x * h).sum::<f64>();
    let rate = plan_information(&plan);
    SinkhornOutcome {
        plan,
        dual,
        rate,
        converged,
    }
}

/// Mutual information of a joint mass matrix under its own marginals.
pub(crate) fn plan_information(plan: &Array2<f64>) -> f64 {
    let rows: Vec<f64> = plan.rows().into_iter().map(|r| r.sum()).collect();
    let cols: Vec<f64> = plan.columns().into_iter().map(|c| c.sum()).collect();
    let mut acc = 0.0;
    for ((i, j), &p) in plan.indexed_iter() {
        if p > 0.0 && rows[i] > 0.0 && cols[j] > 0.0 {
            acc += p * (p / (rows[i] * cols[j])).ln();
        }
    }
    acc.max(0.0)
}
