//! Experiment configuration: a TOML file with sections `[scenario]`,
//! `[learner]`, `[sweep]`, `[bounds]`, `[misspec]`, `[validate]` and
//! `[output]`, plus an optional top-level `seed`. Every field is optional in
//! the file; [`ExperimentConfig::resolve`] fills presets and defaults, and the
//! resolved config is what gets hashed and echoed next to the outputs.

use std::fmt;
use std::path::Path;

use genbound::learners::LearnerSpec;
use genbound::measures::{hoeffding_sigma, FiniteDistribution};
use genbound::numeric::linspace;
use genbound::rd_solver::{discretize_interval_hypothesis, LossMatrix, Scenario};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    Nats,
    Bits,
}

impl Unit {
    pub fn scale(self) -> f64 {
        match self {
            Unit::Nats => 1.0,
            Unit::Bits => 1.0 / std::f64::consts::LN_2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Unit::Nats => "nats",
            Unit::Bits => "bits",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Figure {
    Fig1,
    Fig2,
    Fig3,
    Fig4,
}

impl Figure {
    pub fn name(self) -> &'static str {
        match self {
            Figure::Fig1 => "fig1",
            Figure::Fig2 => "fig2",
            Figure::Fig3 => "fig3",
            Figure::Fig4 => "fig4",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [Figure::Fig1, Figure::Fig2, Figure::Fig3, Figure::Fig4]
            .into_iter()
            .find(|f| f.name() == name)
    }

    /// Whether the figure compares the plain and the auxiliary-constrained curve.
    pub fn is_constrained(self) -> bool {
        matches!(self, Figure::Fig3 | Figure::Fig4)
    }
}

impl fmt::Display for Figure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A loss given by name (evaluated on hypothesis and instance labels) or as
/// an explicit row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LossSpec {
    Named(String),
    Matrix { rows: usize, cols: usize, values: Vec<f64> },
}

pub const NAMED_LOSSES: [&str; 5] = ["product", "abs", "squared", "zero_one", "neg_mismatch"];

impl LossSpec {
    fn build(&self, field: &str, hypotheses: &[f64], instances: &[f64]) -> Result<LossMatrix, CliError> {
        let f: fn(f64, f64) -> f64 = match self {
            LossSpec::Matrix { rows, cols, values } => {
                if rows * cols != values.len() {
                    return Err(CliError::Config(format!(
                        "scenario.{field}: {rows}x{cols} matrix needs {} values, got {}",
                        rows * cols,
                        values.len()
                    )));
                }
                let m = ndarray::Array2::from_shape_vec((*rows, *cols), values.clone())
                    .map_err(|e| CliError::Config(format!("scenario.{field}: {e}")))?;
                return LossMatrix::new(m).map_err(|e| CliError::Config(format!("scenario.{field}: {e}")));
            }
            LossSpec::Named(name) => match name.as_str() {
                "product" => |w, z| w * z,
                "abs" => |w: f64, z: f64| (w - z).abs(),
                "squared" => |w: f64, z: f64| (w - z).powi(2),
                "zero_one" => |w, z| if w != z { 1.0 } else { 0.0 },
                "neg_mismatch" => |w, z| if w != z { -1.0 } else { 0.0 },
                other => {
                    return Err(CliError::Config(format!(
                        "scenario.{field}: unknown loss {other:?}; expected one of {NAMED_LOSSES:?} or a matrix table"
                    )))
                }
            },
        };
        LossMatrix::from_fn(hypotheses, instances, f).map_err(|e| CliError::Config(format!("scenario.{field}: {e}")))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub preset: Option<String>,
    /// Hypothesis labels.
    pub hypotheses: Option<Vec<f64>>,
    /// Uniform grid of this many points on `[0, 1]`, instead of `hypotheses`.
    pub hypothesis_grid: Option<usize>,
    /// Instance labels (default `[0, 1]`).
    pub instances: Option<Vec<f64>>,
    pub loss: Option<LossSpec>,
    pub aux_loss: Option<LossSpec>,
    /// Test law `μ`.
    pub test: Option<Vec<f64>>,
    /// Training law `μ′`.
    pub train: Option<Vec<f64>>,
    pub n: Option<usize>,
    /// Sub-Gaussian variance proxy; defaults to `((max ℓ − min ℓ)/2)²`.
    pub sigma2: Option<f64>,
    /// Bernoulli grid size for bounds maximized over `μ = μ′`.
    pub mu_sweep: Option<usize>,
    /// Auxiliary-risk threshold; defaults to the exact ERM value.
    pub v_n: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerConfig {
    /// `erm`, `gibbs` or `constant`.
    pub kind: Option<String>,
    pub beta: Option<f64>,
    pub index: Option<usize>,
    /// Monte Carlo trials for the auxiliary ERM risk.
    pub trials: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Explicit rate grid in nats; otherwise `points` values on `[r_min, r_max]`.
    pub r: Option<Vec<f64>>,
    pub r_min: Option<f64>,
    pub r_max: Option<f64>,
    pub points: Option<usize>,
    /// Rate resolution of curve evaluation in nats.
    pub rate_tolerance: Option<f64>,
    /// Explicit misspecification grid; otherwise `gamma_points` values on
    /// `[gamma_min, gamma_max]`.
    pub gamma: Option<Vec<f64>>,
    pub gamma_min: Option<f64>,
    pub gamma_max: Option<f64>,
    pub gamma_points: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    pub list: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MisspecConfig {
    pub n: Option<usize>,
    pub sigma2: Option<f64>,
    pub delta: Option<f64>,
    pub eps_base: Option<f64>,
    pub eps_base_half_delta: Option<f64>,
    /// Stability regimes: `zero`, `inv_sqrt_n`, `inv_n`, or a number used for every βᵢ.
    pub regimes: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateConfig {
    pub scenarios: Option<usize>,
    pub betas: Option<Vec<f64>>,
    pub max_hypotheses: Option<usize>,
    pub max_n: Option<usize>,
    pub slack: Option<f64>,
    pub tail_points: Option<usize>,
    /// Test hook: shift the named bound by `corrupt_shift` before checking.
    pub corrupt_bound: Option<String>,
    pub corrupt_shift: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<String>,
    pub name: Option<String>,
    pub unit: Option<Unit>,
    pub svg: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    #[serde(default)]
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub learner: LearnerConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub bounds: BoundsConfig,
    #[serde(default)]
    pub misspec: MisspecConfig,
    #[serde(default)]
    pub validate: ValidateConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn fill<T: Clone>(slot: &mut Option<T>, value: T) {
    if slot.is_none() {
        *slot = Some(value);
    }
}

fn bad(field: &str, msg: impl fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {msg}"))
}

/// Rate axis shared by the figure presets.
pub const PRESET_R_MAX: f64 = 1.5;
pub const PRESET_R_POINTS: usize = 50;
pub const MU_SWEEP_POINTS: usize = 201;
pub const INTERVAL_GRID_POINTS: usize = 201;

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Built-in settings of a figure reproduction.
    pub fn preset(figure: Figure) -> Self {
        let mut c = Self::default();
        c.scenario.preset = Some(figure.name().into());
        c
    }

    fn apply_preset(&mut self) -> Result<(), CliError> {
        let Some(name) = self.scenario.preset.clone() else {
            return Ok(());
        };
        let fig = Figure::from_name(&name)
            .ok_or_else(|| bad("scenario.preset", format!("unknown preset {name:?}; expected fig1..fig4")))?;
        let sc = &mut self.scenario;
        let interval = matches!(fig, Figure::Fig2 | Figure::Fig4);
        if interval {
            if sc.hypotheses.is_none() {
                fill(&mut sc.hypothesis_grid, INTERVAL_GRID_POINTS);
            }
            fill(&mut sc.loss, LossSpec::Named("abs".into()));
        } else {
            if sc.hypothesis_grid.is_none() {
                fill(&mut sc.hypotheses, vec![0.0, 1.0]);
            }
            fill(&mut sc.loss, LossSpec::Named("product".into()));
        }
        fill(&mut sc.instances, vec![0.0, 1.0]);
        fill(&mut sc.test, vec![0.5, 0.5]);
        fill(&mut sc.train, vec![0.5, 0.5]);
        let sw = &mut self.sweep;
        fill(&mut sw.r_min, 0.0);
        fill(&mut sw.points, PRESET_R_POINTS);
        match fig {
            Figure::Fig1 | Figure::Fig2 => {
                fill(&mut sc.n, 1);
                fill(&mut sc.mu_sweep, MU_SWEEP_POINTS);
                fill(&mut sw.r_max, PRESET_R_MAX);
                fill(&mut self.bounds.list, vec!["xu_raginsky".into(), "d2_max_mu".into()]);
            }
            Figure::Fig3 | Figure::Fig4 => {
                fill(&mut sc.n, 10);
                let aux = if interval { "squared" } else { "neg_mismatch" };
                fill(&mut sc.aux_loss, LossSpec::Named(aux.into()));
                // the auxiliary constraint of the interval example only binds
                // once r/n approaches the saturation rate ln 2
                fill(&mut sw.r_max, if interval { 7.0 } else { PRESET_R_MAX });
                fill(&mut self.bounds.list, vec!["d2".into(), "d2_constrained".into()]);
            }
        }
        if fig == Figure::Fig2 {
            // 201 separate curves; the coarser resolution keeps the sweep fast
            fill(&mut sw.rate_tolerance, 1e-3);
        }
        fill(&mut self.output.name, fig.name().into());
        fill(&mut self.output.svg, true);
        Ok(())
    }

    /// Applies the preset, fills defaults and validates. Resolving a resolved
    /// config is a no-op, so the echoed config reproduces the run.
    pub fn resolve(mut self, command: &str) -> Result<Self, CliError> {
        self.apply_preset()?;
        fill(&mut self.seed, 0);
        let sc = &mut self.scenario;
        fill(&mut sc.instances, vec![0.0, 1.0]);
        fill(&mut sc.n, 1);
        if sc.hypotheses.is_some() && sc.hypothesis_grid.is_some() {
            return Err(bad("scenario", "give either hypotheses or hypothesis_grid, not both"));
        }
        let sw = &mut self.sweep;
        if sw.r.is_none() {
            fill(&mut sw.r_min, 0.0);
            fill(&mut sw.r_max, PRESET_R_MAX);
            fill(&mut sw.points, PRESET_R_POINTS);
        }
        fill(&mut sw.rate_tolerance, 1e-6);
        if command == "misspec" {
            if sw.gamma.is_none() {
                fill(&mut sw.gamma_min, 0.001);
                fill(&mut sw.gamma_max, 0.05);
                fill(&mut sw.gamma_points, 50);
            }
            let m = &mut self.misspec;
            fill(&mut m.n, 100);
            fill(&mut m.sigma2, 0.25);
            fill(&mut m.delta, 0.1);
            fill(&mut m.eps_base, 0.0);
            fill(&mut m.eps_base_half_delta, 0.0);
            fill(&mut m.regimes, vec!["zero".into(), "inv_sqrt_n".into()]);
        }
        if command == "validate" {
            let v = &mut self.validate;
            fill(&mut v.scenarios, 20);
            fill(&mut v.betas, vec![0.5, 1.0, 2.0]);
            fill(&mut v.max_hypotheses, 3);
            fill(&mut v.max_n, 5);
            fill(&mut v.slack, 1e-8);
            fill(&mut v.tail_points, 50);
        }
        if command == "learner" {
            fill(&mut self.learner.kind, "gibbs".into());
            if self.learner.kind.as_deref() == Some("gibbs") {
                fill(&mut self.learner.beta, 1.0);
            }
            fill(&mut self.learner.trials, 10_000);
        }
        let o = &mut self.output;
        fill(&mut o.dir, "out".into());
        fill(&mut o.name, command.into());
        fill(&mut o.unit, Unit::Nats);
        fill(&mut o.svg, false);
        self.check(command)?;
        Ok(self)
    }

    fn check(&self, command: &str) -> Result<(), CliError> {
        if matches!(command, "curve" | "constrained" | "learner") {
            self.build_scenario()?;
        }
        if matches!(command, "curve" | "constrained") {
            let list = self.bounds.list.as_deref().unwrap_or(&[]);
            if list.is_empty() {
                return Err(bad("bounds.list", "no bounds selected"));
            }
            let grid = self.rate_grid()?;
            if grid.is_empty() {
                return Err(bad("sweep", "rate grid is empty"));
            }
        }
        if command == "misspec" && self.gamma_grid()?.is_empty() {
            return Err(bad("sweep", "gamma grid is empty"));
        }
        if command == "learner" {
            self.learner_spec()?;
        }
        if let Some(tol) = self.sweep.rate_tolerance {
            if !(tol > 0.0 && tol.is_finite()) {
                return Err(bad("sweep.rate_tolerance", "must be positive"));
            }
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn unit(&self) -> Unit {
        self.output.unit.unwrap_or(Unit::Nats)
    }

    pub fn name(&self) -> &str {
        self.output.name.as_deref().unwrap_or("run")
    }

    pub fn hypotheses(&self) -> Result<Vec<f64>, CliError> {
        match (&self.scenario.hypotheses, self.scenario.hypothesis_grid) {
            (Some(h), None) if !h.is_empty() => Ok(h.clone()),
            (None, Some(g)) => discretize_interval_hypothesis(g).map_err(|e| bad("scenario.hypothesis_grid", e)),
            _ => Err(bad("scenario", "hypotheses or hypothesis_grid is required")),
        }
    }

    fn distribution(field: &str, v: &Option<Vec<f64>>) -> Result<FiniteDistribution, CliError> {
        let v = v.as_ref().ok_or_else(|| bad(field, "missing"))?;
        FiniteDistribution::new(v.clone()).map_err(|e| bad(field, e))
    }

    pub fn build_scenario(&self) -> Result<Scenario, CliError> {
        let sc = &self.scenario;
        let hyps = self.hypotheses()?;
        let instances = sc.instances.clone().unwrap_or_else(|| vec![0.0, 1.0]);
        let loss = sc
            .loss
            .as_ref()
            .ok_or_else(|| bad("scenario.loss", "missing"))?
            .build("loss", &hyps, &instances)?;
        let test = Self::distribution("scenario.test", &sc.test)?;
        let train = Self::distribution("scenario.train", &sc.train)?;
        let mut s = Scenario::new(test, train, hyps.clone(), loss, sc.n.unwrap_or(1)).map_err(|e| bad("scenario", e))?;
        if let Some(aux) = &sc.aux_loss {
            s = s
                .with_aux_loss(aux.build("aux_loss", &hyps, &instances)?)
                .map_err(|e| bad("scenario.aux_loss", e))?;
        }
        Ok(s)
    }

    /// Configured variance proxy, or the range-based one of the loss.
    pub fn sigma2(&self, s: &Scenario) -> Result<f64, CliError> {
        if let Some(v) = self.scenario.sigma2 {
            return Ok(v);
        }
        let (lo, hi) = s.loss().range();
        Ok(hoeffding_sigma(lo, hi)?.powi(2))
    }

    fn grid(field: &str, explicit: &Option<Vec<f64>>, lo: Option<f64>, hi: Option<f64>, points: Option<usize>) -> Result<Vec<f64>, CliError> {
        let grid = match explicit {
            Some(v) => v.clone(),
            None => {
                let (lo, hi, k) = (
                    lo.ok_or_else(|| bad(field, "missing lower end"))?,
                    hi.ok_or_else(|| bad(field, "missing upper end"))?,
                    points.ok_or_else(|| bad(field, "missing point count"))?,
                );
                if k == 0 {
                    Vec::new()
                } else if k == 1 {
                    vec![lo]
                } else {
                    linspace(lo, hi, k)
                }
            }
        };
        if grid.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(bad(field, "grid values must be finite and nonnegative"));
        }
        if grid.windows(2).any(|w| w[1] < w[0]) {
            return Err(bad(field, "grid must be sorted"));
        }
        Ok(grid)
    }

    pub fn rate_grid(&self) -> Result<Vec<f64>, CliError> {
        let s = &self.sweep;
        Self::grid("sweep.r", &s.r, s.r_min, s.r_max, s.points)
    }

    pub fn gamma_grid(&self) -> Result<Vec<f64>, CliError> {
        let s = &self.sweep;
        Self::grid("sweep.gamma", &s.gamma, s.gamma_min, s.gamma_max, s.gamma_points)
    }

    pub fn learner_spec(&self) -> Result<LearnerSpec, CliError> {
        let l = &self.learner;
        match l.kind.as_deref().unwrap_or("gibbs") {
            "erm" => Ok(LearnerSpec::erm()),
            "gibbs" => LearnerSpec::gibbs(l.beta.unwrap_or(1.0)).map_err(|e| bad("learner.beta", e)),
            "constant" => Ok(LearnerSpec::constant(
                l.index.ok_or_else(|| bad("learner.index", "required for a constant learner"))?,
            )),
            other => Err(bad("learner.kind", format!("unknown learner {other:?}; expected erm, gibbs or constant"))),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of the serialized config. The
    /// output directory is left out, so the same run written to two places
    /// produces identical files.
    pub fn hash(&self) -> String {
        let mut keyed = self.clone();
        keyed.output.dir = None;
        let digest = Sha256::digest(keyed.to_toml().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}
