//! Finite-alphabet distributions and the divergences and information
//! measures used throughout the crate.
//!
//! Every quantity is expressed in nats. The `0 ln 0 = 0` convention holds
//! everywhere, and a violated support condition yields `+inf` rather than an
//! error: a KL divergence against a distribution that misses part of the
//! support is a perfectly meaningful (vacuous) answer.

use std::fmt;

use ndarray::Array2;

use crate::error::{ensure_same_len, Error, Result};
use crate::numeric::{logsumexp, xlogx};

/// Tolerance on total mass when constructing a distribution or joint table.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// A probability vector over the indexed alphabet `0..alphabet_size()`.
///
/// Construction renormalizes inputs whose mass is within
/// [`NORMALIZATION_TOL`] of one, so the stored vector sums to one up to the
/// rounding of a single division.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDistribution {
    probs: Vec<f64>,
}

impl FiniteDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("empty alphabet".into()));
        }
        if let Some(bad) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidDistribution(format!(
                "mass {bad} is negative or non-finite"
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidDistribution(format!(
                "masses sum to {total}, not 1"
            )));
        }
        Ok(Self {
            probs: probs.into_iter().map(|p| p / total).collect(),
        })
    }

    /// Normalizes arbitrary nonnegative weights with positive total.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total.is_finite() && total > 0.0) || weights.iter().any(|w| *w < 0.0) {
            return Err(Error::InvalidDistribution(
                "weights must be nonnegative with a finite positive total".into(),
            ));
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    /// `Bern(p)` on `{0, 1}`: mass `p` on symbol 1.
    pub fn bernoulli(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidDistribution(format!(
                "Bernoulli parameter {p} outside [0, 1]"
            )));
        }
        Self::new(vec![1.0 - p, p])
    }

    pub fn uniform(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::InvalidDistribution("empty alphabet".into()));
        }
        Self::new(vec![1.0 / size as f64; size])
    }

    pub fn point_mass(size: usize, at: usize) -> Result<Self> {
        if at >= size {
            return Err(Error::InvalidArgument(format!(
                "point mass index {at} outside alphabet of size {size}"
            )));
        }
        let mut probs = vec![0.0; size];
        probs[at] = 1.0;
        Self::new(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn alphabet_size(&self) -> usize {
        self.probs.len()
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self.probs.iter().map(|&p| xlogx(p)).sum::<f64>()
    }

    pub fn expectation(&self, values: &[f64]) -> Result<f64> {
        ensure_same_len("expectation", self.probs.len(), values.len())?;
        Ok(self.probs.iter().zip(values).map(|(p, v)| p * v).sum())
    }

    /// Product law with `other`, rows indexed by `self`.
    pub fn product(&self, other: &FiniteDistribution) -> JointTable {
        let mass = Array2::from_shape_fn((self.probs.len(), other.probs.len()), |(i, j)| {
            self.probs[i] * other.probs[j]
        });
        JointTable { mass }
    }
}

/// A divergence value in nats; `+inf` when absolute continuity fails.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct DivergenceValue(f64);

impl DivergenceValue {
    pub const INFINITE: DivergenceValue = DivergenceValue(f64::INFINITY);

    fn clamped(v: f64) -> Self {
        DivergenceValue(v.max(0.0))
    }

    pub fn nats(self) -> f64 {
        self.0
    }

    pub fn bits(self) -> f64 {
        self.0 / std::f64::consts::LN_2
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }
}

impl From<DivergenceValue> for f64 {
    fn from(v: DivergenceValue) -> f64 {
        v.0
    }
}

impl fmt::Display for DivergenceValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_finite() {
            write!(f, "{} nats", self.0)
        } else {
            f.write_str("+inf")
        }
    }
}

/// A joint probability table over a pair of finite alphabets.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    mass: Array2<f64>,
}

impl JointTable {
    pub fn new(mass: Array2<f64>) -> Result<Self> {
        if mass.is_empty() {
            return Err(Error::InvalidDistribution("empty joint table".into()));
        }
        if mass.iter().any(|m| !m.is_finite() || *m < 0.0) {
            return Err(Error::InvalidDistribution(
                "joint masses must be finite and nonnegative".into(),
            ));
        }
        let total = mass.sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidDistribution(format!(
                "joint masses sum to {total}, not 1"
            )));
        }
        Ok(Self { mass: mass / total })
    }

    pub fn mass(&self) -> &Array2<f64> {
        &self.mass
    }

    pub fn shape(&self) -> (usize, usize) {
        self.mass.dim()
    }

    pub fn row_marginal(&self) -> FiniteDistribution {
        FiniteDistribution {
            probs: self.mass.rows().into_iter().map(|r| r.sum()).collect(),
        }
    }

    pub fn col_marginal(&self) -> FiniteDistribution {
        FiniteDistribution {
            probs: self.mass.columns().into_iter().map(|c| c.sum()).collect(),
        }
    }

    pub fn product_of_marginals(&self) -> JointTable {
        self.row_marginal().product(&self.col_marginal())
    }

    /// Row-major flattening into a distribution on `rows * cols` symbols.
    pub fn flatten(&self) -> FiniteDistribution {
        FiniteDistribution {
            probs: self.mass.iter().copied().collect(),
        }
    }
}

/// `D(p‖q) = Σ p_i ln(p_i / q_i)`.
pub fn kl_divergence(p: &FiniteDistribution, q: &FiniteDistribution) -> Result<DivergenceValue> {
    ensure_same_len("kl_divergence", p.alphabet_size(), q.alphabet_size())?;
    let mut acc = 0.0;
    for (&pi, &qi) in p.probs.iter().zip(&q.probs) {
        if pi > 0.0 {
            if qi <= 0.0 {
                return Ok(DivergenceValue::INFINITE);
            }
            acc += pi * (pi / qi).ln();
        }
    }
    Ok(DivergenceValue::clamped(acc))
}

/// Rényi divergence of order `alpha > 1`,
/// `(1/(α-1)) ln Σ p_i^α q_i^(1-α)`, evaluated in the log domain.
pub fn renyi_divergence(
    p: &FiniteDistribution,
    q: &FiniteDistribution,
    alpha: f64,
) -> Result<DivergenceValue> {
    ensure_same_len("renyi_divergence", p.alphabet_size(), q.alphabet_size())?;
    if !(alpha > 1.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "Rényi order must be finite and > 1, got {alpha}"
        )));
    }
    let mut terms = Vec::with_capacity(p.alphabet_size());
    for (&pi, &qi) in p.probs.iter().zip(&q.probs) {
        if pi > 0.0 {
            if qi <= 0.0 {
                return Ok(DivergenceValue::INFINITE);
            }
            terms.push(alpha * pi.ln() + (1.0 - alpha) * qi.ln());
        }
    }
    Ok(DivergenceValue::clamped(logsumexp(terms) / (alpha - 1.0)))
}

/// `χ²(p‖q) = Σ (p_i - q_i)² / q_i`.
pub fn chi_squared(p: &FiniteDistribution, q: &FiniteDistribution) -> Result<DivergenceValue> {
    ensure_same_len("chi_squared", p.alphabet_size(), q.alphabet_size())?;
    let mut acc = 0.0;
    for (&pi, &qi) in p.probs.iter().zip(&q.probs) {
        if qi > 0.0 {
            acc += (pi - qi) * (pi - qi) / qi;
        } else if pi > 0.0 {
            return Ok(DivergenceValue::INFINITE);
        }
    }
    Ok(DivergenceValue::clamped(acc))
}

/// Total variation distance `½ Σ |p_i - q_i|`.
pub fn tv_distance(p: &FiniteDistribution, q: &FiniteDistribution) -> Result<f64> {
    ensure_same_len("tv_distance", p.alphabet_size(), q.alphabet_size())?;
    let tv = 0.5
        * p.probs
            .iter()
            .zip(&q.probs)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>();
    Ok(tv.clamp(0.0, 1.0))
}

/// `I(X;Y)` of a joint table, i.e. its KL divergence from the product of
/// its marginals.
pub fn mutual_information(joint: &JointTable) -> f64 {
    let rows = joint.row_marginal();
    let cols = joint.col_marginal();
    let mut acc = 0.0;
    for ((i, j), &m) in joint.mass.indexed_iter() {
        if m > 0.0 {
            acc += m * (m / (rows.probs[i] * cols.probs[j])).ln();
        }
    }
    acc.max(0.0)
}

/// Range-based sub-Gaussian parameter `σ = (max - min) / 2` of a variable
/// supported on `[loss_min, loss_max]` (Hoeffding's lemma).
pub fn hoeffding_sigma(loss_min: f64, loss_max: f64) -> Result<f64> {
    if !(loss_min.is_finite() && loss_max.is_finite()) || loss_min > loss_max {
        return Err(Error::InvalidArgument(format!(
            "loss range [{loss_min}, {loss_max}] must be finite and ordered"
        )));
    }
    Ok((loss_max - loss_min) / 2.0)
}
