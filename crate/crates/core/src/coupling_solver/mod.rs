//! Couplings of a hypothesis law with the training law.
//!
//! `D₄(r)` is the smallest expected gap `E[g(Ŵ, Z′)]` over couplings of a
//! fixed hypothesis law `pw` with `μ′` whose mutual information is at most
//! `r`. For every `ε > 0` and every coupling `π` with `I(π) ≤ r`,
//! `E_π[g] ≥ OT_ε - ε r`, where `OT_ε` is the entropic transport value; the
//! Sinkhorn dual gives a certified lower bound on `OT_ε`, so every value
//! returned here is a certified lower bound on `D₄(r)`, tightened by
//! bisecting `ε` until the entropic plan has rate `r`.

mod sinkhorn;
mod transport;

use ndarray::Array2;

use crate::error::{ensure_same_len, Error, Result};
use crate::measures::{tv_distance, FiniteDistribution};
use crate::numeric::geomspace;
use crate::rd_solver::{GapMatrix, Scenario};
use sinkhorn::{plan_information, SinkhornState};

pub use transport::OT_BRUTE_FORCE_CAP;

const SINKHORN_MAX_ITER: usize = 20_000;
const RATE_TOL: f64 = 1e-6;
const MAX_BISECTIONS: usize = 60;

/// A joint law with prescribed marginals, rows indexed by the first
/// marginal's alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    mass: Array2<f64>,
    marginals: (FiniteDistribution, FiniteDistribution),
}

impl Coupling {
    pub fn new(mass: Array2<f64>, row: FiniteDistribution, col: FiniteDistribution) -> Result<Self> {
        if mass.dim() != (row.alphabet_size(), col.alphabet_size()) {
            return Err(Error::DimensionMismatch(format!(
                "coupling {:?} vs marginals ({}, {})",
                mass.dim(),
                row.alphabet_size(),
                col.alphabet_size()
            )));
        }
        if mass.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::InvalidDistribution("coupling has a negative or NaN cell".into()));
        }
        let c = Self {
            mass,
            marginals: (row, col),
        };
        if c.marginal_error() > 1e-8 {
            return Err(Error::InvalidDistribution(format!(
                "coupling marginals off by {}",
                c.marginal_error()
            )));
        }
        Ok(c)
    }

    pub fn mass(&self) -> &Array2<f64> {
        &self.mass
    }

    pub fn target_marginals(&self) -> (&FiniteDistribution, &FiniteDistribution) {
        (&self.marginals.0, &self.marginals.1)
    }

    /// Largest absolute deviation of a row or column sum from its target.
    pub fn marginal_error(&self) -> f64 {
        let rows = self
            .mass
            .rows()
            .into_iter()
            .zip(self.marginals.0.probs())
            .map(|(r, p)| (r.sum() - p).abs());
        let cols = self
            .mass
            .columns()
            .into_iter()
            .zip(self.marginals.1.probs())
            .map(|(c, p)| (c.sum() - p).abs());
        rows.chain(cols).fold(0.0, f64::max)
    }

    /// `P[X ≠ Y]` for a coupling on a common alphabet.
    pub fn mismatch_probability(&self) -> f64 {
        let diag: f64 = (0..self.mass.nrows().min(self.mass.ncols()))
            .map(|i| self.mass[[i, i]])
            .sum();
        (1.0 - diag).max(0.0)
    }

    pub fn expectation(&self, m: &Array2<f64>) -> f64 {
        self.mass.iter().zip(m.iter()).map(|(p, v)| p * v).sum()
    }

    pub fn mutual_information(&self) -> f64 {
        plan_information(&self.mass)
    }
}

/// `E_pw[L_μ(W)] - E_pw[L_μ′(W)]`: the expected gap of the independent
/// coupling, the only one at rate zero.
pub fn d3_zero(pw: &FiniteDistribution, s: &Scenario) -> Result<f64> {
    ensure_same_len("hypothesis law", pw.alphabet_size(), s.num_hypotheses())?;
    let test = s.population_risk();
    let train = s.train_population_risk();
    Ok(pw
        .probs()
        .iter()
        .zip(test.iter().zip(&train))
        .map(|(p, (a, b))| p * (a - b))
        .sum())
}

/// Coupling attaining `P[X ≠ Y] = TV(p, q)`: diagonal `min(p, q)` plus the
/// normalized product of the residuals.
pub fn maximal_coupling(p: &FiniteDistribution, q: &FiniteDistribution) -> Result<Coupling> {
    let tv = tv_distance(p, q)?;
    let k = p.alphabet_size();
    let common: Vec<f64> = p.probs().iter().zip(q.probs()).map(|(a, b)| a.min(*b)).collect();
    let mut mass = Array2::zeros((k, k));
    for i in 0..k {
        mass[[i, i]] = common[i];
    }
    if tv > 0.0 {
        for i in 0..k {
            for j in 0..k {
                mass[[i, j]] += (p.probs()[i] - common[i]) * (q.probs()[j] - common[j]) / tv;
            }
        }
    }
    Coupling::new(mass, p.clone(), q.clone())
}

/// Exact transport optimum `min_π E_π[cost]` over couplings of `(pw, pz)`.
pub fn optimal_transport(pw: &FiniteDistribution, pz: &FiniteDistribution, cost: &Array2<f64>) -> Result<(f64, Coupling)> {
    check_cost(pw, pz, cost)?;
    let (rows, cols) = (support(pw), support(pz));
    let a: Vec<f64> = rows.iter().map(|&i| pw.probs()[i]).collect();
    let b: Vec<f64> = cols.iter().map(|&j| pz.probs()[j]).collect();
    let sub = Array2::from_shape_fn((rows.len(), cols.len()), |(i, j)| cost[[rows[i], cols[j]]]);
    let plan = transport::solve(&a, &b, &sub);
    let full = embed(&plan.plan, &rows, &cols, pw.alphabet_size(), pz.alphabet_size());
    Ok((plan.cost, Coupling::new(full, pw.clone(), pz.clone())?))
}

/// Transport optimum by enumerating the vertices of the transportation
/// polytope; an oracle for alphabets of size at most four.
pub fn ot_brute_force(pw: &FiniteDistribution, pz: &FiniteDistribution, cost: &Array2<f64>) -> Result<f64> {
    check_cost(pw, pz, cost)?;
    transport::brute_force(pw.probs(), pz.probs(), cost)
}

fn check_cost(pw: &FiniteDistribution, pz: &FiniteDistribution, cost: &Array2<f64>) -> Result<()> {
    if cost.dim() != (pw.alphabet_size(), pz.alphabet_size()) {
        return Err(Error::DimensionMismatch(format!(
            "cost {:?} vs marginals ({}, {})",
            cost.dim(),
            pw.alphabet_size(),
            pz.alphabet_size()
        )));
    }
    Ok(())
}

fn support(p: &FiniteDistribution) -> Vec<usize> {
    (0..p.alphabet_size()).filter(|&i| p.probs()[i] > 0.0).collect()
}

fn embed(sub: &Array2<f64>, rows: &[usize], cols: &[usize], m: usize, n: usize) -> Array2<f64> {
    let mut full = Array2::zeros((m, n));
    for (i, &r) in rows.iter().enumerate() {
        for (j, &c) in cols.iter().enumerate() {
            full[[r, c]] = sub[[i, j]];
        }
    }
    full
}

/// Result of one `D₄` evaluation.
#[derive(Debug, Clone)]
pub struct D4Solution {
    /// Certified lower bound on `D₄(r)`.
    pub value: f64,
    /// Primal plan at the selected `ε` (the transport or product plan at the ends).
    pub coupling: Coupling,
    /// Regularization strength that produced the value; `None` when the
    /// value came from the product (r = 0) or the exact transport plan.
    pub epsilon: Option<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone)]
struct EntropicPoint {
    eps: f64,
    rate: f64,
    dual: f64,
    plan: Array2<f64>,
    converged: bool,
    state: SinkhornState,
}

/// Evaluates `D₄` at many rates for one hypothesis law, reusing the
/// entropic solutions computed so far.
#[derive(Debug, Clone)]
pub struct D4Solver {
    pw: FiniteDistribution,
    pz: FiniteDistribution,
    rows: Vec<usize>,
    cols: Vec<usize>,
    a: Vec<f64>,
    b: Vec<f64>,
    cost: Array2<f64>,
    independent: f64,
    transport_value: f64,
    transport_rate: f64,
    transport_plan: Coupling,
    path: Vec<EntropicPoint>,
}

impl D4Solver {
    pub fn new(pw: &FiniteDistribution, s: &Scenario) -> Result<Self> {
        let independent = d3_zero(pw, s)?;
        let pz = s.train_dist().clone();
        let gap = GapMatrix::new(s);
        let (transport_value, transport_plan) = optimal_transport(pw, &pz, gap.values())?;
        let (rows, cols) = (support(pw), support(&pz));
        let a = rows.iter().map(|&i| pw.probs()[i]).collect();
        let b = cols.iter().map(|&j| pz.probs()[j]).collect();
        let cost = Array2::from_shape_fn((rows.len(), cols.len()), |(i, j)| gap.values()[[rows[i], cols[j]]]);
        Ok(Self {
            pw: pw.clone(),
            pz,
            rows,
            cols,
            a,
            b,
            cost,
            independent,
            transport_value,
            transport_rate: transport_plan.mutual_information(),
            transport_plan,
            path: Vec::new(),
        })
    }

    /// Exact value at rate zero.
    pub fn independent_value(&self) -> f64 {
        self.independent
    }

    /// Exact value without a rate constraint.
    pub fn transport_value(&self) -> f64 {
        self.transport_value
    }

    fn entropic(&mut self, eps: f64) -> &EntropicPoint {
        let at = self.path.partition_point(|p| p.eps < eps);
        if at < self.path.len() && self.path[at].eps == eps {
            return &self.path[at];
        }
        // warm start from the nearest solved neighbour
        let mut state = [at.checked_sub(1), (at < self.path.len()).then_some(at)]
            .into_iter()
            .flatten()
            .min_by(|&x, &y| {
                let d = |k: usize| (self.path[k].eps.ln() - eps.ln()).abs();
                d(x).total_cmp(&d(y))
            })
            .map(|k| self.path[k].state.clone())
            .unwrap_or_else(|| SinkhornState::zeros(self.a.len(), self.b.len()));
        let out = sinkhorn::solve(&self.a, &self.b, &self.cost, eps, &mut state, SINKHORN_MAX_ITER);
        self.path.insert(
            at,
            EntropicPoint {
                eps,
                rate: out.rate,
                dual: out.dual,
                plan: out.plan,
                converged: out.converged,
                state,
            },
        );
        &self.path[at]
    }

    fn ensure_grid(&mut self) {
        if !self.path.is_empty() {
            return;
        }
        let mut grid = geomspace(1e-3, 1e3, 25);
        grid.reverse();
        for eps in grid {
            self.entropic(eps);
        }
    }

    pub fn solve(&mut self, r: f64) -> Result<D4Solution> {
        if r.is_nan() || r < 0.0 {
            return Err(Error::InvalidArgument(format!("rate must be nonnegative, got {r}")));
        }
        if r == 0.0 {
            let product = self.pw.product(&self.pz).mass().clone();
            return Ok(D4Solution {
                value: self.independent,
                coupling: Coupling::new(product, self.pw.clone(), self.pz.clone())?,
                epsilon: None,
                converged: true,
            });
        }
        if r >= self.transport_rate {
            return Ok(D4Solution {
                value: self.transport_value,
                coupling: self.transport_plan.clone(),
                epsilon: None,
                converged: true,
            });
        }
        self.ensure_grid();
        // very small rates need stronger regularization than the grid offers
        let mut eps = self.path.last().unwrap().eps;
        while self.path.last().unwrap().rate > r && eps < 1e15 {
            eps *= 10.0;
            self.entropic(eps);
        }
        let k = self.path.partition_point(|p| p.rate > r);
        if k > 0 && k < self.path.len() {
            let (mut lo, mut hi) = (self.path[k - 1].eps, self.path[k].eps);
            for _ in 0..MAX_BISECTIONS {
                if hi / lo < 1.0 + 1e-12 {
                    break;
                }
                let mid = (lo * hi).sqrt();
                let rate = self.entropic(mid).rate;
                if (rate - r).abs() <= RATE_TOL {
                    break;
                }
                if rate > r {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
        }

        let mut best = (self.transport_value, None::<usize>);
        for (k, p) in self.path.iter().enumerate() {
            let v = p.dual - p.eps * r;
            if v > best.0 {
                best = (v, Some(k));
            }
        }
        let value = best.0.min(self.independent);
        Ok(match best.1 {
            None => D4Solution {
                value,
                coupling: self.transport_plan.clone(),
                epsilon: None,
                converged: true,
            },
            Some(k) => {
                let p = &self.path[k];
                let full = embed(&p.plan, &self.rows, &self.cols, self.pw.alphabet_size(), self.pz.alphabet_size());
                let row = self.pw.clone();
                let col = self.pz.clone();
                D4Solution {
                    value,
                    // Sinkhorn stops at a small column error; keep the plan as computed
                    coupling: Coupling {
                        mass: full,
                        marginals: (row, col),
                    },
                    epsilon: Some(p.eps),
                    converged: p.converged,
                }
            }
        })
    }

    pub fn value_at(&mut self, r: f64) -> Result<f64> {
        Ok(self.solve(r)?.value)
    }
}

pub fn d4_solve(pw: &FiniteDistribution, s: &Scenario, r: f64) -> Result<D4Solution> {
    D4Solver::new(pw, s)?.solve(r)
}

/// Certified lower bound on `D₄(r)`; `r = +∞` gives the exact transport optimum.
pub fn d4_at(pw: &FiniteDistribution, s: &Scenario, r: f64) -> Result<f64> {
    Ok(d4_solve(pw, s, r)?.value)
}
