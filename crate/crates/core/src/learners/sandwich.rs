//! Checks that measured quantities of an enumerated learner sit between the
//! lower and upper bounds they are supposed to satisfy.

use super::{empirical_tail, enumerate_joint, exact_gen_error, exact_mi, max_abs_gap, per_sample_mi, LearnerSpec};
use crate::bounds::{cor1_upper, cor2_lower, high_prob_tail, per_sample_upper, subgaussian_psi, thm4_lower};
use crate::coupling_solver::D4Solver;
use crate::error::Result;
use crate::measures::{hoeffding_sigma, kl_divergence, renyi_divergence};
use crate::rd_solver::{D2Solver, Scenario};

/// One inequality `lhs ≤ rhs`, checked with `lhs ≤ rhs + slack`.
#[derive(Debug, Clone, PartialEq)]
pub struct InequalityCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl InequalityCheck {
    fn new(name: impl Into<String>, lhs: f64, rhs: f64, slack: f64) -> Self {
        Self {
            name: name.into(),
            lhs,
            rhs,
            holds: lhs <= rhs + slack,
        }
    }

    /// `rhs - lhs`; negative means violated (before slack).
    pub fn margin(&self) -> f64 {
        self.rhs - self.lhs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SandwichOptions {
    pub slack: f64,
    /// Added to the named bound before checking; negative controls use this
    /// to make sure a broken bound is caught.
    pub corrupt: Option<(String, f64)>,
}

impl Default for SandwichOptions {
    fn default() -> Self {
        Self {
            slack: 1e-8,
            corrupt: None,
        }
    }
}

impl SandwichOptions {
    fn shift(&self, name: &str) -> f64 {
        match &self.corrupt {
            Some((n, d)) if n == name => *d,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SandwichReport {
    pub gen_error: f64,
    pub mi: f64,
    pub per_sample_mi: Vec<f64>,
    pub checks: Vec<InequalityCheck>,
}

impl SandwichReport {
    pub fn holds(&self) -> bool {
        self.checks.iter().all(|c| c.holds)
    }

    pub fn failures(&self) -> impl Iterator<Item = &InequalityCheck> {
        self.checks.iter().filter(|c| !c.holds)
    }
}

/// Sub-Gaussian variance proxy from the overall loss range.
fn range_sigma2(s: &Scenario) -> Result<f64> {
    let (lo, hi) = s.loss().range();
    Ok(hoeffding_sigma(lo, hi)?.powi(2))
}

/// Enumerates the learner and checks
///
/// * `cor2_lower ≤ gen`, `thm4_lower ≤ gen` (rate `I(S′;W′)`, output law as the family),
/// * `d4(I/n) ≤ gen ≤ d2(I/n) ≤ cor1_upper`,
/// * `gen ≤ per_sample_upper`.
pub fn sandwich_checks(s: &Scenario, learner: &LearnerSpec, opts: &SandwichOptions) -> Result<SandwichReport> {
    let j = enumerate_joint(s, learner)?;
    let n = s.n();
    let gen = exact_gen_error(&j);
    let mi = exact_mi(&j);
    let per_sample = (0..n).map(|i| per_sample_mi(&j, i)).collect::<Result<Vec<_>>>()?;
    let sigma2 = range_sigma2(s)?;
    let gamma = kl_divergence(s.train_dist(), s.test_dist())?.nats();
    let rate = mi / n as f64;
    let pw = j.output_law();

    let mut d4 = D4Solver::new(&pw, s)?;
    let d3 = d4.independent_value();
    let alpha = sigma2.sqrt();
    let thm4 = thm4_lower(d3, subgaussian_psi(alpha), n, mi)?;
    // the closed form needs a positive rate; at zero the output is independent
    let cor2 = if mi > 0.0 { cor2_lower(d3, alpha, n, mi)? } else { thm4 };
    let d4v = d4.value_at(rate)?;
    let d2v = D2Solver::new(s).value_at(rate)?;
    let cor1 = cor1_upper(sigma2, n, mi, gamma)?;
    let per = per_sample_upper(sigma2, &per_sample, gamma)?;

    let slack = opts.slack;
    let checks = vec![
        InequalityCheck::new("cor2_lower <= gen", cor2 + opts.shift("cor2_lower"), gen, slack),
        InequalityCheck::new("thm4_lower <= gen", thm4 + opts.shift("thm4_lower"), gen, slack),
        InequalityCheck::new("d4_at(I/n) <= gen", d4v + opts.shift("d4_at"), gen, slack),
        InequalityCheck::new("gen <= d2_at(I/n)", gen, d2v + opts.shift("d2_at"), slack),
        InequalityCheck::new("d2_at(I/n) <= cor1_upper", d2v + opts.shift("d2_at"), cor1 + opts.shift("cor1_upper"), slack),
        InequalityCheck::new("gen <= per_sample_upper", gen, per + opts.shift("per_sample_upper"), slack),
    ];
    Ok(SandwichReport {
        gen_error: gen,
        mi,
        per_sample_mi: per_sample,
        checks,
    })
}

/// Checks the exact tail `P[|gen| ≥ η]` against `high_prob_tail` at
/// `points` values of `η` spread evenly over `[0, 1.05·max |gap|]`.
pub fn tail_checks(s: &Scenario, learner: &LearnerSpec, points: usize, opts: &SandwichOptions) -> Result<Vec<InequalityCheck>> {
    let j = enumerate_joint(s, learner)?;
    let sigma2 = range_sigma2(s)?;
    let d2_mismatch = renyi_divergence(s.train_dist(), s.test_dist(), 2.0)?.nats();
    let d2_joint = j.renyi_dependence(2.0)?;
    let top = 1.05 * max_abs_gap(&j);
    let denom = points.saturating_sub(1).max(1) as f64;
    (0..points)
        .map(|k| {
            let eta = top * k as f64 / denom;
            let bound = high_prob_tail(sigma2, s.n(), eta, d2_mismatch, d2_joint)?;
            Ok(InequalityCheck::new(
                format!("empirical_tail({eta:.6}) <= high_prob_tail"),
                empirical_tail(&j, eta),
                bound + opts.shift("high_prob_tail"),
                opts.slack,
            ))
        })
        .collect()
}
