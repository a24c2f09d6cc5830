//! Exhaustive search over channels whose rows lie on a probability grid.
//! Deliberately shares nothing with the iterative solver.

use ndarray::Array2;

use super::scenario::{GapMatrix, Scenario};
use crate::error::{Error, Result};

pub const BRUTE_FORCE_CELL_CAP: usize = 12;

/// All ways to write `units` as an ordered sum of `parts` nonnegative integers.
fn compositions(units: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![units]];
    }
    let mut out = Vec::new();
    for first in 0..=units {
        for mut rest in compositions(units - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// For each budget in `rates`, the best expected gap over grid channels with
/// `I ≤ budget`.
pub fn brute_force_d2_many(s: &Scenario, rates: &[f64], grid_step: f64) -> Result<Vec<f64>> {
    let (nw, nz) = (s.num_hypotheses(), s.num_instances());
    if nw * nz > BRUTE_FORCE_CELL_CAP {
        return Err(Error::CapExceeded {
            what: "channel cells",
            size: nw * nz,
            cap: BRUTE_FORCE_CELL_CAP,
        });
    }
    if !(grid_step > 0.0 && grid_step <= 1.0) {
        return Err(Error::InvalidArgument(format!("grid step must lie in (0, 1], got {grid_step}")));
    }
    let units = (1.0 / grid_step).round() as usize;
    let rows: Vec<Vec<f64>> = compositions(units, nw)
        .into_iter()
        .map(|c| c.into_iter().map(|k| k as f64 / units as f64).collect())
        .collect();
    let g = GapMatrix::new(s);
    let g: &Array2<f64> = g.values();
    let p = s.train_dist().probs();
    // per (z, row) contribution to the expected gap
    let gains: Vec<Vec<f64>> = (0..nz)
        .map(|z| {
            rows.iter()
                .map(|row| p[z] * row.iter().enumerate().map(|(w, v)| v * g[[w, z]]).sum::<f64>())
                .collect()
        })
        .collect();

    let mut best = vec![f64::NEG_INFINITY; rates.len()];
    let mut pick = vec![0usize; nz];
    let mut q = vec![0.0; nw];
    loop {
        q.iter_mut().for_each(|v| *v = 0.0);
        for z in 0..nz {
            for (w, v) in rows[pick[z]].iter().enumerate() {
                q[w] += p[z] * v;
            }
        }
        let mut info = 0.0;
        let mut value = 0.0;
        for z in 0..nz {
            value += gains[z][pick[z]];
            if p[z] == 0.0 {
                continue;
            }
            for (w, &v) in rows[pick[z]].iter().enumerate() {
                if v > 0.0 {
                    info += p[z] * v * (v / q[w]).ln();
                }
            }
        }
        for (b, &r) in best.iter_mut().zip(rates) {
            if info <= r + 1e-12 && value > *b {
                *b = value;
            }
        }
        // odometer over rows
        let mut k = 0;
        loop {
            if k == nz {
                return Ok(best);
            }
            pick[k] += 1;
            if pick[k] < rows.len() {
                break;
            }
            pick[k] = 0;
            k += 1;
        }
    }
}

pub fn brute_force_d2(s: &Scenario, r: f64, grid_step: f64) -> Result<f64> {
    if r.is_nan() || r < 0.0 {
        return Err(Error::InvalidArgument(format!("rate must be nonnegative, got {r}")));
    }
    Ok(brute_force_d2_many(s, &[r], grid_step)?[0])
}
