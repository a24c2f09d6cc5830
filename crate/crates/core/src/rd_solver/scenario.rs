use ndarray::Array2;

use crate::error::{ensure_same_len, Error, Result};
use crate::measures::{mutual_information, FiniteDistribution, JointTable};

/// Loss values `ℓ(w, z)` indexed `(hypothesis, instance)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossMatrix {
    values: Array2<f64>,
}

impl LossMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("loss matrix is empty".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("loss matrix has a non-finite entry".into()));
        }
        Ok(Self { values })
    }

    /// Tabulates `f(w, z)` over hypothesis and instance labels.
    pub fn from_fn(hypotheses: &[f64], instances: &[f64], f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        Self::new(Array2::from_shape_fn((hypotheses.len(), instances.len()), |(i, j)| {
            f(hypotheses[i], instances[j])
        }))
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.dim()
    }

    /// `(min, max)` over all cells.
    pub fn range(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Largest per-hypothesis spread `max_w (max_z ℓ - min_z ℓ)`.
    pub fn max_row_spread(&self) -> f64 {
        self.values
            .rows()
            .into_iter()
            .map(|r| {
                let (lo, hi) = r
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
                hi - lo
            })
            .fold(0.0, f64::max)
    }

    /// `Σ_z dist(z) ℓ(w, z)` for every hypothesis.
    pub fn risk_under(&self, dist: &FiniteDistribution) -> Vec<f64> {
        self.values
            .rows()
            .into_iter()
            .map(|row| row.iter().zip(dist.probs()).map(|(l, p)| l * p).sum())
            .collect()
    }
}

/// The learning problem on finite alphabets: test law `μ`, training law
/// `μ′`, a hypothesis grid, the loss (and optionally an auxiliary loss), and
/// the sample size.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    test_dist: FiniteDistribution,
    train_dist: FiniteDistribution,
    hypotheses: Vec<f64>,
    loss: LossMatrix,
    aux_loss: Option<LossMatrix>,
    n: usize,
}

impl Scenario {
    pub fn new(
        test_dist: FiniteDistribution,
        train_dist: FiniteDistribution,
        hypotheses: Vec<f64>,
        loss: LossMatrix,
        n: usize,
    ) -> Result<Self> {
        ensure_same_len(
            "test/train instance alphabets",
            test_dist.alphabet_size(),
            train_dist.alphabet_size(),
        )?;
        let (rows, cols) = loss.shape();
        ensure_same_len("loss rows vs hypotheses", rows, hypotheses.len())?;
        ensure_same_len("loss columns vs instances", cols, test_dist.alphabet_size())?;
        if n == 0 {
            return Err(Error::InvalidArgument("sample size must be positive".into()));
        }
        Ok(Self {
            test_dist,
            train_dist,
            hypotheses,
            loss,
            aux_loss: None,
            n,
        })
    }

    pub fn with_aux_loss(mut self, aux: LossMatrix) -> Result<Self> {
        if aux.shape() != self.loss.shape() {
            return Err(Error::DimensionMismatch(format!(
                "auxiliary loss {:?} vs loss {:?}",
                aux.shape(),
                self.loss.shape()
            )));
        }
        self.aux_loss = Some(aux);
        Ok(self)
    }

    pub fn with_n(&self, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("sample size must be positive".into()));
        }
        Ok(Self { n, ..self.clone() })
    }

    /// Same losses and sample size under new test/train laws.
    pub fn with_distributions(&self, test: FiniteDistribution, train: FiniteDistribution) -> Result<Self> {
        let mut s = Self::new(test, train, self.hypotheses.clone(), self.loss.clone(), self.n)?;
        s.aux_loss = self.aux_loss.clone();
        Ok(s)
    }

    pub fn test_dist(&self) -> &FiniteDistribution {
        &self.test_dist
    }

    pub fn train_dist(&self) -> &FiniteDistribution {
        &self.train_dist
    }

    pub fn hypotheses(&self) -> &[f64] {
        &self.hypotheses
    }

    pub fn loss(&self) -> &LossMatrix {
        &self.loss
    }

    pub fn aux_loss(&self) -> Option<&LossMatrix> {
        self.aux_loss.as_ref()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_hypotheses(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn num_instances(&self) -> usize {
        self.test_dist.alphabet_size()
    }

    /// `L_μ(w)` for every hypothesis.
    pub fn population_risk(&self) -> Vec<f64> {
        self.loss.risk_under(&self.test_dist)
    }

    /// `L_μ′(w)` for every hypothesis.
    pub fn train_population_risk(&self) -> Vec<f64> {
        self.loss.risk_under(&self.train_dist)
    }
}

/// `g(w, z) = L_μ(w) - ℓ(w, z)`: the per-sample generalization gap, i.e. the
/// negated distortion of the rate-distortion view.
#[derive(Debug, Clone, PartialEq)]
pub struct GapMatrix {
    values: Array2<f64>,
    population_risk: Vec<f64>,
}

impl GapMatrix {
    pub fn new(scenario: &Scenario) -> Self {
        let population_risk = scenario.population_risk();
        let loss = scenario.loss().values();
        let values = Array2::from_shape_fn(loss.dim(), |(w, z)| population_risk[w] - loss[[w, z]]);
        Self {
            values,
            population_risk,
        }
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn population_risk(&self) -> &[f64] {
        &self.population_risk
    }
}

/// A Markov kernel `P(ŵ | z)`; row `z` is a distribution over hypotheses.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    cond: Array2<f64>,
}

impl Channel {
    pub fn new(cond: Array2<f64>) -> Result<Self> {
        for (z, row) in cond.rows().into_iter().enumerate() {
            FiniteDistribution::new(row.to_vec())
                .map_err(|e| Error::InvalidDistribution(format!("channel row {z}: {e}")))?;
        }
        Ok(Self { cond })
    }

    pub(crate) fn from_raw(cond: Array2<f64>) -> Self {
        Self { cond }
    }

    /// Rows indexed by instance, columns by hypothesis.
    pub fn cond(&self) -> &Array2<f64> {
        &self.cond
    }

    /// Joint law of `(Z, Ŵ)` when `Z ~ source`.
    pub fn joint(&self, source: &FiniteDistribution) -> Result<JointTable> {
        ensure_same_len("channel input", self.cond.nrows(), source.alphabet_size())?;
        let mass = Array2::from_shape_fn(self.cond.dim(), |(z, w)| source.probs()[z] * self.cond[[z, w]]);
        JointTable::new(mass)
    }

    pub fn rate(&self, source: &FiniteDistribution) -> Result<f64> {
        Ok(mutual_information(&self.joint(source)?))
    }

    /// `E[m(Ŵ, Z)]` for a `(hypothesis, instance)` matrix `m`.
    pub fn expectation(&self, source: &FiniteDistribution, m: &Array2<f64>) -> f64 {
        channel_expectation(source.probs(), &self.cond, m)
    }

    /// Hypothesis marginal under `source`.
    pub fn output_law(&self, source: &FiniteDistribution) -> Vec<f64> {
        self.output_law_raw(source.probs())
    }

    pub(crate) fn output_law_raw(&self, source: &[f64]) -> Vec<f64> {
        let mut q = vec![0.0; self.cond.ncols()];
        for (z, row) in self.cond.rows().into_iter().enumerate() {
            for (w, p) in row.iter().enumerate() {
                q[w] += source[z] * p;
            }
        }
        q
    }
}

pub(crate) fn channel_expectation(source: &[f64], cond: &Array2<f64>, m: &Array2<f64>) -> f64 {
    let mut acc = 0.0;
    for (z, &pz) in source.iter().enumerate() {
        if pz == 0.0 {
            continue;
        }
        let mut inner = 0.0;
        for (w, &p) in cond.row(z).iter().enumerate() {
            inner += p * m[[w, z]];
        }
        acc += pz * inner;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn fig1(p: f64) -> Scenario {
        let loss = LossMatrix::from_fn(&[0.0, 1.0], &[0.0, 1.0], |w, z| w * z).unwrap();
        let mu = FiniteDistribution::bernoulli(p).unwrap();
        Scenario::new(mu.clone(), mu, vec![0.0, 1.0], loss, 1).unwrap()
    }

    #[test]
    fn gap_matrix_examples() {
        let g = GapMatrix::new(&fig1(0.5));
        assert_eq!(g.values()[[1, 0]], 0.5);
        assert_eq!(g.values()[[1, 1]], -0.5);
        assert_eq!(g.values()[[0, 0]], 0.0);
        assert_eq!(g.values()[[0, 1]], 0.0);

        let flat = LossMatrix::new(Array2::from_elem((3, 2), 0.7)).unwrap();
        let mu = FiniteDistribution::bernoulli(0.3).unwrap();
        let s = Scenario::new(mu.clone(), mu, vec![0.0, 0.5, 1.0], flat, 1).unwrap();
        assert!(GapMatrix::new(&s).values().iter().all(|v| v.abs() < 1e-15));

        let point = FiniteDistribution::point_mass(2, 1).unwrap();
        let s = fig1(0.5).with_distributions(point.clone(), point).unwrap();
        let g = GapMatrix::new(&s);
        assert!(g.values().column(1).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn gap_rows_are_centered_under_test_law() {
        let loss = LossMatrix::new(array![[0.1, 0.9, 0.4], [0.3, 0.2, 0.8]]).unwrap();
        let mu = FiniteDistribution::new(vec![0.2, 0.5, 0.3]).unwrap();
        let nu = FiniteDistribution::uniform(3).unwrap();
        let s = Scenario::new(mu.clone(), nu, vec![0.0, 1.0], loss, 1).unwrap();
        let g = GapMatrix::new(&s);
        for row in g.values().rows() {
            let mean: f64 = row.iter().zip(mu.probs()).map(|(g, p)| g * p).sum();
            assert!(mean.abs() < 1e-12);
        }
    }

    #[test]
    fn scenario_validation() {
        let loss = LossMatrix::new(array![[0.0, 1.0]]).unwrap();
        let mu = FiniteDistribution::bernoulli(0.5).unwrap();
        assert!(Scenario::new(mu.clone(), mu.clone(), vec![0.0, 1.0], loss.clone(), 1).is_err());
        assert!(Scenario::new(mu.clone(), mu.clone(), vec![0.0], loss.clone(), 0).is_err());
        let three = FiniteDistribution::uniform(3).unwrap();
        assert!(Scenario::new(mu.clone(), three, vec![0.0], loss.clone(), 1).is_err());
        assert!(LossMatrix::new(array![[0.0, f64::NAN]]).is_err());
        let s = Scenario::new(mu.clone(), mu, vec![0.0], loss, 1).unwrap();
        assert!(s.with_aux_loss(LossMatrix::new(array![[1.0], [2.0]]).unwrap()).is_err());
    }
}
