//! Rate/gap trade-off curves on finite alphabets.
//!
//! `D₂(r)` is the largest expected gap `E[g(Ŵ, Z)]`, `Z ~ μ′`, over channels
//! `P(ŵ | z)` with `I(Z; Ŵ) ≤ r`. It is traced parametrically with
//! Blahut-Arimoto over a slope grid and read off the upper concave envelope.

mod blahut;
mod constrained;
mod curve;
mod oracle;
mod scenario;

use ndarray::Array2;

pub use blahut::BaOptions;
pub use constrained::{ConstrainedSolver, ConstrainedValue};
pub use curve::{CurveValue, RdCurve, RdPoint};
pub use oracle::{brute_force_d2, brute_force_d2_many, BRUTE_FORCE_CELL_CAP};
pub use scenario::{Channel, GapMatrix, LossMatrix, Scenario};

use crate::error::{Error, Result};
use crate::numeric::linspace;
use curve::CurveEngine;

/// Largest product alphabet `|𝒵|ⁿ` the exact multi-sample solver accepts.
pub const PRODUCT_ALPHABET_CAP: usize = 4096;

pub fn gap_matrix(s: &Scenario) -> GapMatrix {
    GapMatrix::new(s)
}

fn gap_engine(s: &Scenario, opts: BaOptions) -> CurveEngine {
    CurveEngine::new(
        s.train_dist().probs().to_vec(),
        GapMatrix::new(s).values().clone(),
        s.aux_loss().map(|a| a.values().clone()),
        0.0,
        opts,
    )
}

/// One Blahut-Arimoto solve of the gap curve at a fixed slope. Slope `0`
/// gives the rate-zero optimum and `+∞` the per-instance best response.
pub fn ba_fixed_slope(s: &Scenario, slope: f64, tol: f64, max_iter: usize) -> Result<RdPoint> {
    if slope.is_nan() || slope < 0.0 {
        return Err(Error::InvalidArgument(format!("slope must be nonnegative, got {slope}")));
    }
    if !(tol > 0.0) || max_iter == 0 {
        return Err(Error::InvalidArgument("tolerance and iteration cap must be positive".into()));
    }
    Ok(gap_engine(s, BaOptions { tol, max_iter }).solve_slope(slope))
}

/// Repeated evaluation of `D₂` for one scenario; the traced curve is reused
/// and refined locally around each requested rate.
#[derive(Debug, Clone)]
pub struct D2Solver {
    engine: CurveEngine,
}

impl D2Solver {
    pub fn new(s: &Scenario) -> Self {
        Self::with_options(s, BaOptions::default())
    }

    pub fn with_options(s: &Scenario, opts: BaOptions) -> Self {
        Self {
            engine: gap_engine(s, opts),
        }
    }

    /// Rate gap between bracketing vertices below which [`Self::evaluate`]
    /// interpolates instead of solving more slopes (default 1e-6 nats).
    /// Coarser values trade accuracy for speed; the result stays achievable.
    pub fn with_rate_tolerance(mut self, tol: f64) -> Self {
        self.engine = self.engine.with_rate_tol(tol);
        self
    }

    pub fn evaluate(&mut self, r: f64) -> Result<CurveValue> {
        self.engine.evaluate(r)
    }

    pub fn value_at(&mut self, r: f64) -> Result<f64> {
        Ok(self.evaluate(r)?.value)
    }

    pub fn curve(&mut self) -> &RdCurve {
        self.engine.curve()
    }

    /// Smallest rate at which the curve reaches its maximum.
    pub fn saturation_rate(&mut self) -> f64 {
        self.engine.saturation_rate()
    }
}

pub fn trace_d2_curve(s: &Scenario) -> RdCurve {
    D2Solver::new(s).curve().clone()
}

pub fn d2_at(s: &Scenario, r: f64) -> Result<f64> {
    D2Solver::new(s).value_at(r)
}

pub fn d2_constrained_at(s: &Scenario, r: f64, v_n: f64) -> Result<f64> {
    Ok(ConstrainedSolver::new(s, v_n)?.value_at(r)?.value)
}

/// Exact multi-sample curve on the product alphabet `𝒵ⁿ` with law `(μ′)^⊗n`
/// and gap `L_μ(w) - (1/n) Σᵢ ℓ(w, zᵢ)`. Only for tiny `n`.
#[derive(Debug, Clone)]
pub struct D1Solver {
    engine: CurveEngine,
}

impl D1Solver {
    pub fn new(s: &Scenario) -> Result<Self> {
        let nz = s.num_instances();
        let n = s.n();
        let size = u32::try_from(n)
            .ok()
            .and_then(|e| nz.checked_pow(e))
            .filter(|&k| k <= PRODUCT_ALPHABET_CAP)
            .ok_or(Error::CapExceeded {
                what: "product alphabet",
                size: nz.saturating_pow(n.min(64) as u32),
                cap: PRODUCT_ALPHABET_CAP,
            })?;
        let p = s.train_dist().probs();
        let loss = s.loss().values();
        let risk = s.population_risk();
        let nw = s.num_hypotheses();
        let mut source = vec![0.0; size];
        let mut gain = Array2::zeros((nw, size));
        let mut digits = vec![0usize; n];
        for (k, mass) in source.iter_mut().enumerate() {
            let mut rest = k;
            for d in digits.iter_mut() {
                *d = rest % nz;
                rest /= nz;
            }
            *mass = digits.iter().map(|&z| p[z]).product();
            for w in 0..nw {
                let empirical: f64 = digits.iter().map(|&z| loss[[w, z]]).sum::<f64>() / n as f64;
                gain[[w, k]] = risk[w] - empirical;
            }
        }
        Ok(Self {
            engine: CurveEngine::new(source, gain, None, 0.0, BaOptions::default()),
        })
    }

    pub fn value_at(&mut self, r: f64) -> Result<f64> {
        Ok(self.engine.evaluate(r)?.value)
    }
}

pub fn d1_exact_tiny(s: &Scenario, r: f64) -> Result<f64> {
    D1Solver::new(s)?.value_at(r)
}

/// Uniform grid `{0, 1/(G-1), …, 1}` standing in for the interval `[0, 1]`.
pub fn discretize_interval_hypothesis(points: usize) -> Result<Vec<f64>> {
    if points < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 grid points, got {points}")));
    }
    Ok(linspace(0.0, 1.0, points))
}
