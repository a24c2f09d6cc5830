use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{aux_erm_value, require_aux};
use crate::error::{Error, Result};
use crate::rd_solver::Scenario;

/// Trials per independently seeded stream.
const CHUNK: usize = 4096;

/// Monte Carlo estimate of the expected ERM auxiliary risk.
#[derive(Debug, Clone, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    /// Sample standard deviation over `√trials`.
    pub std_error: f64,
    pub trials: usize,
    pub n: usize,
    /// Largest spread `max_z ℓ̃(w,z) - min_z ℓ̃(w,z)` over hypotheses.
    pub sensitivity: f64,
}

impl McEstimate {
    /// Half-width `t` with `P[|X - E X| ≥ t] ≤ fail` for the ERM value `X` of
    /// a single training set (bounded differences, each sample moves `X` by
    /// at most `sensitivity / n`).
    pub fn margin(&self, fail: f64) -> f64 {
        self.sensitivity * ((2.0 / fail).ln() / (2.0 * self.n as f64)).sqrt()
    }

    /// Same for the average over all trials, which is a bounded-differences
    /// function of `trials·n` samples.
    pub fn mean_margin(&self, fail: f64) -> f64 {
        self.sensitivity * ((2.0 / fail).ln() / (2.0 * (self.n * self.trials) as f64)).sqrt()
    }
}

/// Averages the ERM auxiliary risk over `trials` simulated training sets.
///
/// Chunk `c` of [`CHUNK`] trials draws from stream `c` of a ChaCha generator
/// keyed by `seed`, and chunk results are combined in index order, so the
/// output depends only on `(s, trials, seed)`.
pub fn v_n_monte_carlo(s: &Scenario, trials: usize, seed: u64) -> Result<McEstimate> {
    let aux = require_aux(s)?;
    if trials == 0 {
        return Err(Error::InvalidArgument("need at least one trial".into()));
    }
    let sensitivity = aux.max_row_spread();
    if !sensitivity.is_finite() {
        return Err(Error::InvalidArgument("auxiliary loss must be bounded".into()));
    }
    let (k, m, n) = (s.num_instances(), s.num_hypotheses(), s.n());
    let sampler = WeightedIndex::new(s.train_dist().probs())
        .map_err(|e| Error::InvalidDistribution(e.to_string()))?;
    let draw = |rng: &mut ChaCha8Rng, counts: &mut Vec<usize>, scratch: &mut Vec<f64>| {
        counts.iter_mut().for_each(|c| *c = 0);
        for _ in 0..n {
            counts[sampler.sample(rng)] += 1;
        }
        aux_erm_value(aux, counts, n, scratch)
    };
    let chunks = trials.div_ceil(CHUNK);
    let rng_for = |c: usize| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(c as u64);
        rng
    };
    // center on the first draw for an exact answer when every draw agrees
    let shift = draw(&mut rng_for(0), &mut vec![0; k], &mut vec![0.0; m]);
    let sums: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng_for(c);
            let (mut counts, mut scratch) = (vec![0; k], vec![0.0; m]);
            let len = CHUNK.min(trials - c * CHUNK);
            let (mut s1, mut s2) = (0.0, 0.0);
            for _ in 0..len {
                let d = draw(&mut rng, &mut counts, &mut scratch) - shift;
                s1 += d;
                s2 += d * d;
            }
            (s1, s2)
        })
        .collect();
    let (s1, s2) = sums.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let t = trials as f64;
    let mean_dev = s1 / t;
    let var = if trials > 1 {
        ((s2 - t * mean_dev * mean_dev) / (t - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(McEstimate {
        estimate: shift + mean_dev,
        std_error: (var / t).sqrt(),
        trials,
        n,
        sensitivity,
    })
}
