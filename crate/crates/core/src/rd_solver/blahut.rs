//! Blahut-Arimoto iterations for the tilted problem
//!
//!   maximize  E[T(Ŵ, Z)] - I(Z; Ŵ) / s   over channels P(ŵ | z),  Z ~ p.
//!
//! The iteration alternates `P(w|z) ∝ q(w) e^{s T(w,z)}` and `q ← p P`. At any
//! output law `q` the dual objective
//!
//!   F(q) = (1/s) Σ_z p(z) ln Σ_w q(w) e^{s T(w,z)}
//!
//! is concave in `q` with gradient `c_w / s`, where `c_w = q_new(w) / q(w)`.
//! Since `Σ_w q c_w = 1`, concavity gives `max_q F - F(q) ≤ (max_w c_w - 1) / s`,
//! which is the certified gap used as the stopping rule.

use ndarray::Array2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for BaOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 10_000,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct BaOutcome {
    /// Rows indexed by instance.
    pub cond: Array2<f64>,
    pub rate: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Certified bound on the Lagrangian suboptimality.
    pub gap: f64,
}

/// Relative tolerance for treating two tilt values as tied.
const TIE_TOL: f64 = 1e-12;

fn is_tied(v: f64, best: f64) -> bool {
    v >= best - TIE_TOL * best.abs().max(1.0)
}

/// `I(Z; Ŵ)` for source `p` and channel rows `cond`.
pub(crate) fn channel_rate(source: &[f64], cond: &Array2<f64>) -> f64 {
    let nw = cond.ncols();
    let mut q = vec![0.0; nw];
    for (z, &pz) in source.iter().enumerate() {
        for w in 0..nw {
            q[w] += pz * cond[[z, w]];
        }
    }
    let mut acc = 0.0;
    for (z, &pz) in source.iter().enumerate() {
        if pz == 0.0 {
            continue;
        }
        for w in 0..nw {
            let p = cond[[z, w]];
            if p > 0.0 && q[w] > 0.0 {
                acc += pz * p * (p / q[w]).ln();
            }
        }
    }
    acc.max(0.0)
}

/// Rate-zero optimum: every row equals the uniform split over
/// `argmax_w Σ_z p(z) T(w, z)`.
pub(crate) fn independent_optimum(source: &[f64], tilt: &Array2<f64>) -> BaOutcome {
    let (nw, nz) = tilt.dim();
    let means: Vec<f64> = (0..nw)
        .map(|w| (0..nz).map(|z| source[z] * tilt[[w, z]]).sum())
        .collect();
    let best = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let winners: Vec<usize> = (0..nw).filter(|&w| is_tied(means[w], best)).collect();
    let share = 1.0 / winners.len() as f64;
    let mut cond = Array2::zeros((nz, nw));
    for z in 0..nz {
        for &w in &winners {
            cond[[z, w]] = share;
        }
    }
    BaOutcome {
        cond,
        rate: 0.0,
        converged: true,
        iterations: 0,
        gap: 0.0,
    }
}

/// Unconstrained-rate optimum: each instance picks its best hypotheses, ties
/// split uniformly.
pub(crate) fn saturation(source: &[f64], tilt: &Array2<f64>) -> BaOutcome {
    let (nw, nz) = tilt.dim();
    let mut cond = Array2::zeros((nz, nw));
    for z in 0..nz {
        let best = (0..nw).map(|w| tilt[[w, z]]).fold(f64::NEG_INFINITY, f64::max);
        let winners: Vec<usize> = (0..nw).filter(|&w| is_tied(tilt[[w, z]], best)).collect();
        let share = 1.0 / winners.len() as f64;
        for &w in &winners {
            cond[[z, w]] = share;
        }
    }
    let rate = channel_rate(source, &cond);
    BaOutcome {
        cond,
        rate,
        converged: true,
        iterations: 0,
        gap: 0.0,
    }
}

/// Channel rows, dual value and multiplicative gradient at one output law.
struct Evaluation {
    cond: Array2<f64>,
    dual: f64,
    c: Vec<f64>,
}

/// Slope-dependent factors shared by every iteration of one solve, laid out
/// by instance: `tilted[z][w] = s·T(w,z)`,
/// `scaled[z][w] = e^{s·T(w,z) - max_w s·T(w,z)}` and
/// `shifted[z][w] = e^{s·T(w,z)} - 1`.
struct Kernel {
    nw: usize,
    tilted: Vec<f64>,
    scaled: Vec<f64>,
    shifted: Vec<f64>,
}

/// Below this row normalizer the linear-domain row is recomputed in logs.
const LINEAR_FLOOR: f64 = 1e-200;

impl Kernel {
    fn new(tilt: &Array2<f64>, slope: f64) -> Self {
        let (nw, nz) = tilt.dim();
        let mut tilted = Vec::with_capacity(nw * nz);
        let mut peak = Vec::with_capacity(nz);
        for z in 0..nz {
            let row: Vec<f64> = (0..nw).map(|w| slope * tilt[[w, z]]).collect();
            peak.push(row.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
            tilted.extend(row);
        }
        let scaled = tilted.iter().enumerate().map(|(k, t)| (t - peak[k / nw]).exp()).collect();
        let shifted = tilted.iter().map(|t| t.exp_m1()).collect();
        Self {
            nw,
            tilted,
            scaled,
            shifted,
        }
    }

    fn evaluate(&self, source: &[f64], slope: f64, log_q: &[f64]) -> Evaluation {
        let nw = self.nw;
        let nz = source.len();
        let mut cond = Array2::zeros((nz, nw));
        let mut c = vec![0.0; nw];
        let q: Vec<f64> = log_q.iter().map(|v| v.exp()).collect();
        let q_total: f64 = q.iter().sum();
        let mut dual = 0.0;
        let mut row = vec![0.0; nw];
        for z in 0..nz {
            let pz = source[z];
            let tilted = &self.tilted[z * nw..(z + 1) * nw];
            let scaled = &self.scaled[z * nw..(z + 1) * nw];
            let mut sum = 0.0;
            for w in 0..nw {
                row[w] = q[w] * scaled[w];
                sum += row[w];
            }
            // row[w] / sum = P(w|z); scaled[w] / sum = e^{sT - lse}
            let (norm, ratio): (f64, Vec<f64>) = if sum >= LINEAR_FLOOR {
                (1.0 / sum, Vec::new())
            } else {
                let mut m = f64::NEG_INFINITY;
                for w in 0..nw {
                    row[w] = log_q[w] + tilted[w];
                    m = m.max(row[w]);
                }
                let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
                for v in row.iter_mut() {
                    *v = (*v - lse).exp();
                }
                (1.0, tilted.iter().map(|t| (t - lse).exp()).collect())
            };
            for w in 0..nw {
                let p = row[w] * norm;
                // flush subnormals so rates never see 0/0
                cond[[z, w]] = if p < 1e-300 { 0.0 } else { p };
            }
            if pz > 0.0 {
                if ratio.is_empty() {
                    for w in 0..nw {
                        c[w] += pz * scaled[w] * norm;
                    }
                } else {
                    for w in 0..nw {
                        c[w] += pz * ratio[w];
                    }
                }
                // ln Σ q e^{sT} via expm1/ln_1p keeps the dual accurate at small slopes
                let shift: f64 = q.iter().zip(&self.shifted[z * nw..(z + 1) * nw]).map(|(a, b)| a * b).sum();
                dual += pz * (shift / q_total).ln_1p();
            }
        }
        Evaluation {
            cond,
            dual: dual / slope,
            c,
        }
    }
}

const MAX_RELAXATION: f64 = 1e15;

/// Share of the uniform law mixed into a warm start, so that no hypothesis
/// starts at zero mass.
const WARM_START_FLOOR: f64 = 1e-6;

/// Blahut-Arimoto at a finite positive slope, started from the uniform
/// output law or from `warm` (mixed with a little uniform mass). The update `q ← q·c^ω` is over-relaxed (ω ≥ 1) while the
/// dual keeps increasing and falls back to the plain step (ω = 1, which is
/// monotone) otherwise; the stopping rule is the certified gap either way.
pub(crate) fn solve(
    source: &[f64],
    tilt: &Array2<f64>,
    slope: f64,
    opts: BaOptions,
    warm: Option<&[f64]>,
) -> BaOutcome {
    debug_assert!(slope > 0.0 && slope.is_finite());
    let nw = tilt.nrows();
    let mut log_q = match warm {
        Some(q) => {
            let total: f64 = q.iter().sum();
            q.iter()
                .map(|x| ((1.0 - WARM_START_FLOOR) * x / total + WARM_START_FLOOR / nw as f64).ln())
                .collect()
        }
        None => vec![-(nw as f64).ln(); nw],
    };
    let kernel = Kernel::new(tilt, slope);
    let mut current = kernel.evaluate(source, slope, &log_q);
    let mut omega = 1.0;
    let mut iterations = 0;
    let mut converged = false;
    let mut gap;
    loop {
        let max_c = current.c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        gap = ((max_c - 1.0) / slope).max(0.0);
        if gap <= opts.tol {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        iterations += 1;
        let mut proposal: Vec<f64> = log_q
            .iter()
            .zip(&current.c)
            .map(|(lq, c)| lq + omega * c.ln())
            .collect();
        let norm = crate::numeric::logsumexp(proposal.iter().cloned());
        proposal.iter_mut().for_each(|v| *v -= norm);
        let next = kernel.evaluate(source, slope, &proposal);
        if omega > 1.0 && !(next.dual >= current.dual) {
            omega = (omega / 4.0).max(1.0);
            continue;
        }
        log_q = proposal;
        current = next;
        omega = (omega * 2.0).min(MAX_RELAXATION);
    }

    let rate = channel_rate(source, &current.cond);
    BaOutcome {
        cond: current.cond,
        rate,
        converged,
        iterations,
        gap,
    }
}
