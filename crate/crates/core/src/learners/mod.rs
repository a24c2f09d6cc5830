//! Exact analysis of small learning algorithms.
//!
//! A training set `S′ = (Z′₁, …, Z′ₙ)` over an alphabet of size `k` is indexed
//! by the base-`k` number whose digit `i` is `Z′ᵢ` (digit 0 least
//! significant). [`enumerate_joint`] builds the full law of `(S′, W′)` for a
//! learner, from which generalization error, mutual information and tail
//! probabilities follow exactly.

mod sampling;
mod sandwich;

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::measures::{mutual_information, renyi_divergence, FiniteDistribution, JointTable};
use crate::rd_solver::{LossMatrix, Scenario};

pub use sampling::{v_n_monte_carlo, McEstimate};
pub use sandwich::{sandwich_checks, tail_checks, InequalityCheck, SandwichOptions, SandwichReport};

/// Cap on `|𝒵|ⁿ·|𝒲|` for exact enumeration.
pub const ENUMERATION_CAP: usize = 1_000_000;

/// Two empirical risks closer than this count as tied.
pub const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LearnerKind {
    /// Empirical risk minimizer.
    Erm,
    /// `P(w | s′) ∝ exp(-β n L_{s′}(w))`.
    Gibbs { beta: f64 },
    /// Always outputs the given hypothesis index.
    Constant { index: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieBreak {
    #[default]
    LowestIndex,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnerSpec {
    pub kind: LearnerKind,
    pub tie_break: TieBreak,
}

impl LearnerSpec {
    pub fn erm() -> Self {
        Self {
            kind: LearnerKind::Erm,
            tie_break: TieBreak::LowestIndex,
        }
    }

    pub fn gibbs(beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "Gibbs inverse temperature must be finite and nonnegative, got {beta}"
            )));
        }
        Ok(Self {
            kind: LearnerKind::Gibbs { beta },
            tie_break: TieBreak::LowestIndex,
        })
    }

    pub fn constant(index: usize) -> Self {
        Self {
            kind: LearnerKind::Constant { index },
            tie_break: TieBreak::LowestIndex,
        }
    }

    fn validate(&self, num_hypotheses: usize) -> Result<()> {
        match self.kind {
            LearnerKind::Gibbs { beta } if !(beta.is_finite() && beta >= 0.0) => Err(Error::InvalidArgument(
                format!("Gibbs inverse temperature must be finite and nonnegative, got {beta}"),
            )),
            LearnerKind::Constant { index } if index >= num_hypotheses => Err(Error::InvalidArgument(format!(
                "constant hypothesis {index} out of range (have {num_hypotheses})"
            ))),
            _ => Ok(()),
        }
    }

    /// `P(w | s′)` given the empirical risks of one training set.
    fn kernel(&self, risks: &[f64], n: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        match self.kind {
            LearnerKind::Erm => out[erm_index(risks)] = 1.0,
            LearnerKind::Constant { index } => out[index] = 1.0,
            LearnerKind::Gibbs { beta } => {
                let min = risks.iter().copied().fold(f64::INFINITY, f64::min);
                let scale = beta * n as f64;
                let mut total = 0.0;
                for (o, r) in out.iter_mut().zip(risks) {
                    *o = (-scale * (r - min)).exp();
                    total += *o;
                }
                out.iter_mut().for_each(|x| *x /= total);
            }
        }
    }
}

/// Lowest index whose risk is within [`TIE_TOL`] of the minimum.
pub fn erm_index(risks: &[f64]) -> usize {
    let min = risks.iter().copied().fold(f64::INFINITY, f64::min);
    risks.iter().position(|&r| r <= min + TIE_TOL).unwrap_or(0)
}

/// `(1/n) Σ_z counts[z] loss(w, z)` for every hypothesis.
pub(crate) fn empirical_risks(loss: &LossMatrix, counts: &[usize], n: usize, out: &mut [f64]) {
    let values = loss.values();
    for (w, o) in out.iter_mut().enumerate() {
        let total: f64 = counts.iter().enumerate().map(|(z, &c)| c as f64 * values[[w, z]]).sum();
        *o = total / n as f64;
    }
}

fn check_cap(s: &Scenario) -> Result<usize> {
    let k = s.num_instances();
    let w = s.num_hypotheses();
    let mut datasets: usize = 1;
    for _ in 0..s.n() {
        datasets = datasets.checked_mul(k).filter(|d| d * w <= ENUMERATION_CAP).ok_or(Error::CapExceeded {
            what: "enumerated joint table",
            size: usize::MAX,
            cap: ENUMERATION_CAP,
        })?;
    }
    if datasets * w > ENUMERATION_CAP {
        return Err(Error::CapExceeded {
            what: "enumerated joint table",
            size: datasets * w,
            cap: ENUMERATION_CAP,
        });
    }
    Ok(datasets)
}

fn digits(mut index: usize, k: usize, n: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(index % k);
        index /= k;
    }
    out
}

/// Exact law of `(S′, W′)` for one learner on one scenario.
#[derive(Debug, Clone)]
pub struct ExactJoint {
    scenario: Scenario,
    /// Rows are training sets, columns hypotheses.
    mass: Array2<f64>,
    dataset_probs: Vec<f64>,
    /// `L_{s′}(w)`, same layout as `mass`.
    empirical_risk: Array2<f64>,
}

/// Enumerates every training set of the scenario's size and the learner's
/// output law on each.
pub fn enumerate_joint(s: &Scenario, learner: &LearnerSpec) -> Result<ExactJoint> {
    learner.validate(s.num_hypotheses())?;
    let datasets = check_cap(s)?;
    let (k, m, n) = (s.num_instances(), s.num_hypotheses(), s.n());
    let train = s.train_dist().probs();
    let rows: Vec<(f64, Vec<f64>, Vec<f64>)> = (0..datasets)
        .into_par_iter()
        .map(|idx| {
            let zs = digits(idx, k, n);
            let mut counts = vec![0usize; k];
            let mut p = 1.0;
            for &z in &zs {
                counts[z] += 1;
                p *= train[z];
            }
            let mut risks = vec![0.0; m];
            empirical_risks(s.loss(), &counts, n, &mut risks);
            let mut cond = vec![0.0; m];
            learner.kernel(&risks, n, &mut cond);
            (p, risks, cond)
        })
        .collect();
    let mut mass = Array2::zeros((datasets, m));
    let mut empirical_risk = Array2::zeros((datasets, m));
    let mut dataset_probs = Vec::with_capacity(datasets);
    for (i, (p, risks, cond)) in rows.into_iter().enumerate() {
        dataset_probs.push(p);
        for w in 0..m {
            mass[[i, w]] = p * cond[w];
            empirical_risk[[i, w]] = risks[w];
        }
    }
    Ok(ExactJoint {
        scenario: s.clone(),
        mass,
        dataset_probs,
        empirical_risk,
    })
}

impl ExactJoint {
    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    /// Joint mass, training sets by hypotheses.
    pub fn table(&self) -> &Array2<f64> {
        &self.mass
    }

    pub fn dataset_probs(&self) -> &[f64] {
        &self.dataset_probs
    }

    pub fn empirical_risk(&self) -> &Array2<f64> {
        &self.empirical_risk
    }

    pub fn num_datasets(&self) -> usize {
        self.dataset_probs.len()
    }

    /// Instance sequence of training set `index`.
    pub fn dataset(&self, index: usize) -> Vec<usize> {
        digits(index, self.scenario.num_instances(), self.scenario.n())
    }

    /// Law of `W′`.
    pub fn output_law(&self) -> FiniteDistribution {
        let col: Vec<f64> = self.mass.columns().into_iter().map(|c| c.sum()).collect();
        FiniteDistribution::from_weights(&col).expect("joint has positive mass")
    }

    pub fn joint_table(&self) -> JointTable {
        JointTable::new(self.mass.clone()).expect("enumerated joint is normalized")
    }

    /// `D_α(P_{S′W′} ‖ P_{S′} P_{W′})`.
    pub fn renyi_dependence(&self, alpha: f64) -> Result<f64> {
        let joint = self.joint_table();
        Ok(renyi_divergence(&joint.flatten(), &joint.product_of_marginals().flatten(), alpha)?.nats())
    }

    fn gaps(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let pop = self.scenario.population_risk();
        let m = pop.len();
        self.mass
            .iter()
            .zip(self.empirical_risk.iter())
            .enumerate()
            .map(move |(k, (&p, &l))| (p, pop[k % m] - l))
    }
}

/// `E[L_μ(W′) - L_{S′}(W′)]`.
pub fn exact_gen_error(j: &ExactJoint) -> f64 {
    j.gaps().map(|(p, g)| p * g).sum()
}

/// `I(S′; W′)`.
pub fn exact_mi(j: &ExactJoint) -> f64 {
    let pw: Vec<f64> = j.mass.columns().into_iter().map(|c| c.sum()).collect();
    let mut acc = 0.0;
    for ((s, w), &p) in j.mass.indexed_iter() {
        if p > 0.0 {
            acc += p * (p / (j.dataset_probs[s] * pw[w])).ln();
        }
    }
    acc.max(0.0)
}

/// `I(Z′ᵢ; W′)` for the zero-based sample position `i`.
pub fn per_sample_mi(j: &ExactJoint, i: usize) -> Result<f64> {
    let s = &j.scenario;
    if i >= s.n() {
        return Err(Error::InvalidArgument(format!(
            "sample index {i} out of range for n = {}",
            s.n()
        )));
    }
    let k = s.num_instances();
    let stride = k.pow(i as u32);
    let mut table = Array2::<f64>::zeros((k, s.num_hypotheses()));
    for ((d, w), &p) in j.mass.indexed_iter() {
        table[[(d / stride) % k, w]] += p;
    }
    let total = table.sum();
    Ok(mutual_information(&JointTable::new(table / total)?))
}

/// `P[|L_μ(W′) - L_{S′}(W′)| ≥ η]`. Gaps within rounding of `η` count as
/// reaching it.
pub fn empirical_tail(j: &ExactJoint, eta: f64) -> f64 {
    let cut = eta - 1e-12 * (1.0 + eta.abs());
    j.gaps().filter(|(_, g)| g.abs() >= cut).map(|(p, _)| p).sum::<f64>().min(1.0)
}

/// Largest `|L_μ(w) - L_{s′}(w)|` over pairs with positive mass.
pub fn max_abs_gap(j: &ExactJoint) -> f64 {
    j.gaps().filter(|(p, _)| *p > 0.0).map(|(_, g)| g.abs()).fold(0.0, f64::max)
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Calls `f` with every count vector of length `k` summing to `n`.
fn for_each_type(k: usize, n: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(counts: &mut Vec<usize>, pos: usize, left: usize, f: &mut impl FnMut(&[usize])) {
        if pos + 1 == counts.len() {
            counts[pos] = left;
            f(counts);
            return;
        }
        for c in 0..=left {
            counts[pos] = c;
            rec(counts, pos + 1, left - c, f);
        }
    }
    let mut counts = vec![0; k];
    rec(&mut counts, 0, n, f);
}

pub(crate) fn require_aux(s: &Scenario) -> Result<&LossMatrix> {
    s.aux_loss()
        .ok_or_else(|| Error::InvalidArgument("scenario has no auxiliary loss".into()))
}

/// `min_w (1/n) Σᵢ ℓ̃(w, zᵢ)` from the instance counts of a training set.
pub(crate) fn aux_erm_value(aux: &LossMatrix, counts: &[usize], n: usize, scratch: &mut [f64]) -> f64 {
    empirical_risks(aux, counts, n, scratch);
    scratch.iter().copied().fold(f64::INFINITY, f64::min)
}

/// `E_{S′}[min_w L̃_{S′}(w)]`: the expected auxiliary risk of ERM, summed
/// exactly over type classes of the training set.
pub fn v_n_exact(s: &Scenario) -> Result<f64> {
    let aux = require_aux(s)?;
    check_cap(s)?;
    let (k, n) = (s.num_instances(), s.n());
    let ln_train: Vec<f64> = s.train_dist().probs().iter().map(|p| p.ln()).collect();
    let ln_n = ln_factorial(n);
    let mut scratch = vec![0.0; s.num_hypotheses()];
    let mut acc = 0.0;
    for_each_type(k, n, &mut |counts| {
        let mut lp = ln_n;
        for (z, &c) in counts.iter().enumerate() {
            if c > 0 {
                lp += c as f64 * ln_train[z] - ln_factorial(c);
            }
        }
        let p = lp.exp();
        if p > 0.0 {
            acc += p * aux_erm_value(aux, counts, n, &mut scratch);
        }
    });
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digits_are_little_endian() {
        assert_eq!(digits(6, 2, 3), vec![0, 1, 1]);
        assert_eq!(digits(5, 3, 2), vec![2, 1]);
    }

    #[test]
    fn type_enumeration_counts() {
        let mut seen = 0;
        for_each_type(3, 4, &mut |c| {
            assert_eq!(c.iter().sum::<usize>(), 4);
            seen += 1;
        });
        assert_eq!(seen, 15);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        assert_eq!(erm_index(&[0.3, 0.1, 0.1]), 1);
        assert_eq!(erm_index(&[0.1 + 1e-13, 0.1]), 0);
    }
}
