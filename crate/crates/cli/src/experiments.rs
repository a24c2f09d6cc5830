//! Experiment drivers behind the subcommands. Each returns an in-memory
//! result; writing files is left to the caller.

use genbound::bounds::{cor1_upper, misspec_eps_bounds, xu_raginsky, SmallerBound};
use genbound::learners::{
    enumerate_joint, exact_gen_error, exact_mi, max_abs_gap, per_sample_mi, sandwich_checks, tail_checks,
    v_n_exact, v_n_monte_carlo, InequalityCheck, LearnerSpec, SandwichOptions,
};
use genbound::measures::{kl_divergence, FiniteDistribution};
use genbound::rd_solver::{ConstrainedSolver, D1Solver, D2Solver, LossMatrix, Scenario};
use genbound::{bounds, Error};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::table::{Cell, Flag, SweepResult};
use crate::CliError;

pub const GAP_LABEL: &str = "generalization gap (loss units)";

/// Bound columns understood by `curve` and `constrained`.
pub const SWEEP_BOUNDS: [&str; 6] = ["xu_raginsky", "cor1_upper", "d2", "d2_max_mu", "d2_constrained", "d1"];

fn curve_cell(v: genbound::rd_solver::CurveValue) -> Cell {
    if v.converged {
        Cell::value(v.value)
    } else {
        Cell::flagged(v.value, Flag::NonConverged)
    }
}

fn d2_column(s: &Scenario, rates: &[f64], tol: f64) -> Result<Vec<Cell>, CliError> {
    let n = s.n() as f64;
    let mut solver = D2Solver::new(s).with_rate_tolerance(tol);
    rates.iter().map(|&r| Ok(curve_cell(solver.evaluate(r / n)?))).collect()
}

/// `max over p` of `D₂(r/n)` with `μ = μ′ = Bern(p)` on a uniform grid of `p`.
fn d2_max_mu_column(s: &Scenario, rates: &[f64], tol: f64, grid: usize) -> Result<Vec<Cell>, CliError> {
    if s.num_instances() != 2 {
        return Err(CliError::Config(format!(
            "d2_max_mu sweeps Bernoulli laws and needs two instances, got {}",
            s.num_instances()
        )));
    }
    if grid < 2 {
        return Err(CliError::Config("scenario.mu_sweep needs at least 2 points".into()));
    }
    let ps = genbound::numeric::linspace(0.0, 1.0, grid);
    let per_mu: Vec<Vec<Cell>> = ps
        .par_iter()
        .map(|&p| {
            let mu = FiniteDistribution::bernoulli(p)?;
            let sp = s.with_distributions(mu.clone(), mu)?;
            d2_column(&sp, rates, tol)
        })
        .collect::<Result<_, CliError>>()?;
    Ok((0..rates.len())
        .map(|k| {
            let best = per_mu.iter().map(|col| col[k].value).fold(f64::NEG_INFINITY, f64::max);
            if per_mu.iter().all(|col| col[k].flag.is_none()) {
                Cell::value(best)
            } else {
                Cell::flagged(best, Flag::NonConverged)
            }
        })
        .collect())
}

fn constrained_column(s: &Scenario, rates: &[f64], v_n: f64) -> Result<Vec<Cell>, CliError> {
    let n = s.n() as f64;
    let mut solver = ConstrainedSolver::new(s, v_n)?;
    rates
        .iter()
        .map(|&r| match solver.value_at(r / n) {
            Ok(v) if v.converged => Ok(Cell::value(v.value)),
            Ok(v) => Ok(Cell::flagged(v.value, Flag::NonConverged)),
            Err(Error::Infeasible(_)) => Ok(Cell::flagged(f64::NAN, Flag::Infeasible)),
            Err(e) => Err(e.into()),
        })
        .collect()
}

fn d1_column(s: &Scenario, rates: &[f64]) -> Result<Vec<Cell>, CliError> {
    let mut solver = match D1Solver::new(s) {
        Ok(solver) => solver,
        Err(Error::CapExceeded { .. }) => return Ok(vec![Cell::flagged(f64::NAN, Flag::Capped); rates.len()]),
        Err(e) => return Err(e.into()),
    };
    rates.iter().map(|&r| Ok(Cell::value(solver.value_at(r)?))).collect()
}

/// Auxiliary-risk threshold: the configured one, or the exact ERM value.
pub fn threshold(cfg: &ExperimentConfig, s: &Scenario) -> Result<f64, CliError> {
    match cfg.scenario.v_n {
        Some(v) => Ok(v),
        None => Ok(v_n_exact(s)?),
    }
}

/// Evaluates the configured bound columns over the rate grid. The x axis is
/// `r = I(S′; W)`; per-sample curves are read at `r/n`.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepResult, CliError> {
    let s = cfg.build_scenario()?;
    let rates = cfg.rate_grid()?;
    let tol = cfg.sweep.rate_tolerance.unwrap_or(1e-6);
    let sigma2 = cfg.sigma2(&s)?;
    let list = cfg.bounds.list.clone().unwrap_or_default();
    if list.is_empty() {
        return Err(CliError::Config("bounds.list: no bounds selected".into()));
    }
    let mut result = SweepResult::new("r", GAP_LABEL, rates.clone());
    for name in &list {
        let cells = match name.as_str() {
            "xu_raginsky" => rates
                .iter()
                .map(|&r| Ok(Cell::value(xu_raginsky(sigma2, s.n(), r)?)))
                .collect::<Result<_, CliError>>()?,
            "cor1_upper" => {
                let gamma = kl_divergence(s.train_dist(), s.test_dist())?.nats();
                rates
                    .iter()
                    .map(|&r| Ok(Cell::value(cor1_upper(sigma2, s.n(), r, gamma)?)))
                    .collect::<Result<_, CliError>>()?
            }
            "d2" => d2_column(&s, &rates, tol)?,
            "d2_max_mu" => d2_max_mu_column(&s, &rates, tol, cfg.scenario.mu_sweep.unwrap_or(crate::config::MU_SWEEP_POINTS))?,
            "d2_constrained" => {
                if s.aux_loss().is_none() {
                    return Err(CliError::Config("d2_constrained needs scenario.aux_loss".into()));
                }
                constrained_column(&s, &rates, threshold(cfg, &s)?)?
            }
            "d1" => d1_column(&s, &rates)?,
            other => {
                return Err(CliError::Config(format!(
                    "bounds.list: unknown bound {other:?}; expected one of {SWEEP_BOUNDS:?}"
                )))
            }
        };
        result.push_column(name.clone(), cells);
    }
    Ok(result)
}

pub fn run_curve(cfg: &ExperimentConfig) -> Result<SweepResult, CliError> {
    run_sweep(cfg)
}

pub fn run_constrained_curve(cfg: &ExperimentConfig) -> Result<SweepResult, CliError> {
    if cfg.scenario.aux_loss.is_none() {
        return Err(CliError::Config("scenario.aux_loss is required for constrained curves".into()));
    }
    run_sweep(cfg)
}

/// Per-sample stability coefficient of a named regime at sample size `n`.
pub fn regime_beta(regime: &str, n: usize) -> Result<f64, CliError> {
    let nf = n as f64;
    match regime {
        "zero" => Ok(0.0),
        "inv_sqrt_n" => Ok(1.0 / nf.sqrt()),
        "inv_n" => Ok(1.0 / nf),
        other => other
            .parse::<f64>()
            .ok()
            .filter(|b| b.is_finite() && *b >= 0.0)
            .ok_or_else(|| {
                CliError::Config(format!(
                    "misspec.regimes: {other:?} is not zero, inv_sqrt_n, inv_n or a nonnegative number"
                ))
            }),
    }
}

/// Both misspecified excess-risk bounds over the γ grid, one pair of columns
/// per stability regime; the smaller of each pair is flagged.
pub fn run_misspec(cfg: &ExperimentConfig) -> Result<SweepResult, CliError> {
    let m = &cfg.misspec;
    let n = m.n.unwrap_or(100);
    if n == 0 {
        return Err(CliError::Config("misspec.n must be positive".into()));
    }
    let gammas = cfg.gamma_grid()?;
    let mut result = SweepResult::new("gamma", "excess risk bound (loss units)", gammas.clone());
    for regime in m.regimes.clone().unwrap_or_default() {
        let betas = vec![regime_beta(&regime, n)?; n];
        let pairs = gammas
            .iter()
            .map(|&g| {
                misspec_eps_bounds(
                    m.eps_base.unwrap_or(0.0),
                    m.eps_base_half_delta.unwrap_or(0.0),
                    m.sigma2.unwrap_or(0.25),
                    g,
                    &betas,
                    m.delta.unwrap_or(0.1),
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mark = |v: f64, smaller: bool| if smaller { Cell::flagged(v, Flag::Smaller) } else { Cell::value(v) };
        result.push_column(
            format!("bound_a_{regime}"),
            pairs.iter().map(|p| mark(p.bound_a, p.smaller == SmallerBound::A)).collect(),
        );
        result.push_column(
            format!("bound_b_{regime}"),
            pairs.iter().map(|p| mark(p.bound_b, p.smaller == SmallerBound::B)).collect(),
        );
    }
    Ok(result)
}

/// Named scalar outputs of one learner on one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerReport {
    /// `(quantity, value, is an information quantity)`.
    pub rows: Vec<(String, f64, bool)>,
}

impl LearnerReport {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.0 == name).map(|r| r.1)
    }

    pub fn to_csv(&self, unit: crate::config::Unit, config_hash: &str) -> String {
        let mut out = String::from("quantity,value,flags,config_hash\n");
        for (name, value, info) in &self.rows {
            let (v, flag) = if *info {
                (value * unit.scale(), unit.name())
            } else {
                (*value, "")
            };
            out.push_str(&format!("{name},{},{flag},{config_hash}\n", crate::table::fmt_sig(v)));
        }
        out
    }
}

/// Exact enumeration of one learner: generalization error, dependence
/// measures, the bounds evaluated at them, and the auxiliary ERM risk both
/// exactly and by seeded Monte Carlo.
pub fn run_learner(cfg: &ExperimentConfig) -> Result<LearnerReport, CliError> {
    let s = cfg.build_scenario()?;
    let learner = cfg.learner_spec()?;
    let joint = enumerate_joint(&s, &learner)?;
    let sigma2 = cfg.sigma2(&s)?;
    let gamma = kl_divergence(s.train_dist(), s.test_dist())?.nats();
    let mi = exact_mi(&joint);
    let per_sample = (0..s.n()).map(|i| per_sample_mi(&joint, i)).collect::<Result<Vec<_>, _>>()?;
    let mut rows = vec![
        ("gen_error".to_string(), exact_gen_error(&joint), false),
        ("mutual_information".to_string(), mi, true),
    ];
    for (i, v) in per_sample.iter().enumerate() {
        rows.push((format!("per_sample_mi_{i}"), *v, true));
    }
    for (w, p) in joint.output_law().probs().iter().enumerate() {
        rows.push((format!("output_law_{w}"), *p, false));
    }
    rows.push(("max_abs_gap".into(), max_abs_gap(&joint), false));
    rows.push(("d2_at".into(), D2Solver::new(&s).value_at(mi / s.n() as f64)?, false));
    rows.push(("xu_raginsky".into(), xu_raginsky(sigma2, s.n(), mi)?, false));
    rows.push(("cor1_upper".into(), cor1_upper(sigma2, s.n(), mi, gamma)?, false));
    rows.push(("per_sample_upper".into(), bounds::per_sample_upper(sigma2, &per_sample, gamma)?, false));
    if s.aux_loss().is_some() {
        rows.push(("v_n_exact".into(), v_n_exact(&s)?, false));
        let trials = cfg.learner.trials.unwrap_or(10_000);
        let mc = v_n_monte_carlo(&s, trials, cfg.seed())?;
        rows.push(("v_n_monte_carlo".into(), mc.estimate, false));
        rows.push(("v_n_monte_carlo_std_error".into(), mc.std_error, false));
        rows.push(("v_n_monte_carlo_margin_99".into(), mc.mean_margin(0.01), false));
    }
    Ok(LearnerReport { rows })
}

/// Random tiny instances: two instances, 2 to `max_hypotheses` hypotheses,
/// `1..=max_n` samples, losses uniform on `[0, 1]`, Bernoulli test and
/// training laws with parameters uniform on `[0.05, 0.95]`.
pub fn tiny_suite(seed: u64, count: usize, max_hypotheses: usize, max_n: usize) -> Result<Vec<Scenario>, CliError> {
    if max_hypotheses < 2 || max_n < 1 {
        return Err(CliError::Config("validate: need max_hypotheses >= 2 and max_n >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let nw = rng.random_range(2..=max_hypotheses);
            let n = rng.random_range(1..=max_n);
            let loss = Array2::from_shape_fn((nw, 2), |_| rng.random::<f64>());
            let test = FiniteDistribution::bernoulli(0.05 + 0.9 * rng.random::<f64>())?;
            let train = FiniteDistribution::bernoulli(0.05 + 0.9 * rng.random::<f64>())?;
            let hyps = (0..nw).map(|w| w as f64).collect();
            Ok(Scenario::new(test, train, hyps, LossMatrix::new(loss)?, n)?)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationLine {
    pub scenario: usize,
    pub learner: String,
    pub check: InequalityCheck,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub lines: Vec<ValidationLine>,
    /// Serialized instances, indexed like `ValidationLine::scenario`.
    pub instances: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.lines.iter().all(|l| l.check.holds)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ValidationLine> {
        self.lines.iter().filter(|l| !l.check.holds)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for l in &self.lines {
            out.push_str(&format!(
                "{} scenario={} learner={} {}: lhs={} rhs={} slack={}\n",
                if l.check.holds { "PASS" } else { "FAIL" },
                l.scenario,
                l.learner,
                l.check.name,
                crate::table::fmt_sig(l.check.lhs),
                crate::table::fmt_sig(l.check.rhs),
                crate::table::fmt_sig(l.check.margin()),
            ));
        }
        let failed: Vec<usize> = {
            let mut v: Vec<usize> = self.failures().map(|l| l.scenario).collect();
            v.dedup();
            v
        };
        for k in failed {
            out.push_str(&format!("violating instance {k}: {}\n", self.instances[k]));
        }
        out.push_str(&format!(
            "{} of {} inequalities hold\n",
            self.lines.iter().filter(|l| l.check.holds).count(),
            self.lines.len()
        ));
        out
    }
}

fn learner_name(l: &LearnerSpec) -> String {
    match l.kind {
        genbound::learners::LearnerKind::Erm => "erm".into(),
        genbound::learners::LearnerKind::Gibbs { beta } => format!("gibbs(beta={beta})"),
        genbound::learners::LearnerKind::Constant { index } => format!("constant({index})"),
    }
}

pub fn describe_scenario(s: &Scenario) -> String {
    let rows: Vec<String> = s
        .loss()
        .values()
        .rows()
        .into_iter()
        .map(|r| format!("{:?}", r.to_vec()))
        .collect();
    format!(
        "n={} test={:?} train={:?} loss=[{}]",
        s.n(),
        s.test_dist().probs(),
        s.train_dist().probs(),
        rows.join(", ")
    )
}

/// Runs the sandwich and tail checks of every learner on every scenario.
/// Scenarios run in parallel; lines come out in scenario order.
pub fn validate_scenarios(
    scenarios: &[Scenario],
    learners: &[LearnerSpec],
    opts: &SandwichOptions,
    tail_points: usize,
) -> Result<ValidationReport, CliError> {
    let per: Vec<Vec<ValidationLine>> = scenarios
        .par_iter()
        .enumerate()
        .map(|(k, s)| {
            let mut lines = Vec::new();
            for l in learners {
                let name = learner_name(l);
                let mut checks = sandwich_checks(s, l, opts)?.checks;
                if tail_points > 0 {
                    checks.extend(tail_checks(s, l, tail_points, opts)?);
                }
                lines.extend(checks.into_iter().map(|check| ValidationLine {
                    scenario: k,
                    learner: name.clone(),
                    check,
                }));
            }
            Ok(lines)
        })
        .collect::<Result<_, CliError>>()?;
    Ok(ValidationReport {
        lines: per.into_iter().flatten().collect(),
        instances: scenarios.iter().map(describe_scenario).collect(),
    })
}

/// Validation on the configured scenario if one is given, otherwise on the
/// seeded random suite.
pub fn run_validate(cfg: &ExperimentConfig) -> Result<ValidationReport, CliError> {
    let v = &cfg.validate;
    let scenarios = if cfg.scenario.loss.is_some() {
        vec![cfg.build_scenario()?]
    } else {
        tiny_suite(cfg.seed(), v.scenarios.unwrap_or(20), v.max_hypotheses.unwrap_or(3), v.max_n.unwrap_or(5))?
    };
    let learners = if cfg.learner.kind.is_some() {
        vec![cfg.learner_spec()?]
    } else {
        v.betas
            .clone()
            .unwrap_or_else(|| vec![0.5, 1.0, 2.0])
            .into_iter()
            .map(LearnerSpec::gibbs)
            .collect::<Result<_, _>>()?
    };
    let corrupt = match (&v.corrupt_bound, v.corrupt_shift) {
        (Some(name), shift) => Some((name.clone(), shift.unwrap_or(1.0))),
        (None, Some(_)) => return Err(CliError::Config("validate.corrupt_shift needs corrupt_bound".into())),
        (None, None) => None,
    };
    let opts = SandwichOptions {
        slack: v.slack.unwrap_or(1e-8),
        corrupt,
    };
    validate_scenarios(&scenarios, &learners, &opts, v.tail_points.unwrap_or(50))
}
