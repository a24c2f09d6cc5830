//! Fixtures shared by the benchmarks.

use genbound::rd_solver::discretize_interval_hypothesis;
use genbound::{FiniteDistribution, LossMatrix, Scenario};

/// Binary hypotheses and instances with `ℓ(w, z) = w·z` and `μ = μ′ = Bern(½)`.
pub fn binary_product(n: usize) -> Scenario {
    let bits = [0.0, 1.0];
    let loss = LossMatrix::from_fn(&bits, &bits, |w, z| w * z).unwrap();
    let mu = FiniteDistribution::bernoulli(0.5).unwrap();
    Scenario::new(mu.clone(), mu, bits.to_vec(), loss, n).unwrap()
}

/// `points` hypotheses on `[0, 1]` with `ℓ(w, z) = |w − z|`, test and
/// training laws `Bern(0.4)` and `Bern(0.6)`.
pub fn interval_abs(points: usize) -> Scenario {
    let hyps = discretize_interval_hypothesis(points).unwrap();
    let loss = LossMatrix::from_fn(&hyps, &[0.0, 1.0], |w, z| (w - z).abs()).unwrap();
    let squared = LossMatrix::from_fn(&hyps, &[0.0, 1.0], |w, z| (w - z).powi(2)).unwrap();
    Scenario::new(
        FiniteDistribution::bernoulli(0.4).unwrap(),
        FiniteDistribution::bernoulli(0.6).unwrap(),
        hyps,
        loss,
        10,
    )
    .unwrap()
    .with_aux_loss(squared)
    .unwrap()
}
