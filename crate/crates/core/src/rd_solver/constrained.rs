//! Gap maximization under a rate budget and a lower bound on the expected
//! auxiliary loss. The auxiliary constraint is dualized with a multiplier
//! `t ≥ 0`, giving the tilt `g + t·ℓ̃`; `t` is found by bisection and the two
//! bracketing solutions are time-shared so the constraint holds with equality.

use ndarray::Array2;

use super::blahut::BaOptions;
use super::curve::{CurveEngine, CurveValue};
use super::scenario::{GapMatrix, Scenario};
use crate::error::{Error, Result};

const SLACK: f64 = 1e-12;
const RESIDUAL_TOL: f64 = 1e-8;
const MAX_BISECTIONS: usize = 200;
const MAX_MULTIPLIER: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstrainedValue {
    pub value: f64,
    /// Expected auxiliary loss of the returned (possibly mixed) channel.
    pub aux: f64,
    /// Multiplier on the auxiliary loss; `0` when the constraint is slack.
    pub multiplier: f64,
    pub active: bool,
    pub converged: bool,
}

/// Evaluates the constrained curve at many rates for one scenario and one
/// threshold.
#[derive(Debug, Clone)]
pub struct ConstrainedSolver {
    source: Vec<f64>,
    gain: Array2<f64>,
    aux: Array2<f64>,
    threshold: f64,
    opts: BaOptions,
    base: CurveEngine,
    aux_only: CurveEngine,
}

impl ConstrainedSolver {
    pub fn new(scenario: &Scenario, threshold: f64) -> Result<Self> {
        Self::with_options(scenario, threshold, BaOptions::default())
    }

    pub fn with_options(scenario: &Scenario, threshold: f64, opts: BaOptions) -> Result<Self> {
        let aux = scenario
            .aux_loss()
            .ok_or_else(|| Error::InvalidArgument("constrained solver needs an auxiliary loss".into()))?
            .values()
            .clone();
        if !threshold.is_finite() {
            return Err(Error::InvalidArgument(format!("threshold must be finite, got {threshold}")));
        }
        let source = scenario.train_dist().probs().to_vec();
        let gain = GapMatrix::new(scenario).values().clone();
        let base = CurveEngine::new(source.clone(), gain.clone(), Some(aux.clone()), 0.0, opts);
        let aux_only = CurveEngine::new(source.clone(), aux.clone(), None, 0.0, opts).sparse();
        Ok(Self {
            source,
            gain,
            aux,
            threshold,
            opts,
            base,
            aux_only,
        })
    }

    fn at_multiplier(&self, t: f64, r: f64) -> Result<CurveValue> {
        CurveEngine::new(self.source.clone(), self.gain.clone(), Some(self.aux.clone()), t, self.opts)
            .sparse()
            .evaluate(r)
    }

    pub fn value_at(&mut self, r: f64) -> Result<ConstrainedValue> {
        let free = self.base.evaluate(r)?;
        let free_aux = free.aux.expect("base engine carries the auxiliary loss");
        if free_aux >= self.threshold - SLACK {
            return Ok(ConstrainedValue {
                value: free.value,
                aux: free_aux,
                multiplier: 0.0,
                active: false,
                converged: free.converged,
            });
        }
        let best_aux = self.aux_only.evaluate(r)?.value;
        if best_aux < self.threshold - SLACK {
            return Err(Error::Infeasible(format!(
                "auxiliary threshold {} exceeds the largest expected auxiliary loss {} at rate {}",
                self.threshold, best_aux, r
            )));
        }

        let mut lo = (0.0, free);
        let mut t = 1.0;
        let mut hi = loop {
            let v = self.at_multiplier(t, r)?;
            if v.aux.unwrap() >= self.threshold {
                break (t, v);
            }
            lo = (t, v);
            t *= 2.0;
            if t > MAX_MULTIPLIER {
                // the threshold sits at the edge of the feasible set
                return Ok(ConstrainedValue {
                    value: v.value,
                    aux: v.aux.unwrap(),
                    multiplier: lo.0,
                    active: true,
                    converged: false,
                });
            }
        };
        for _ in 0..MAX_BISECTIONS {
            if hi.1.aux.unwrap() - self.threshold <= RESIDUAL_TOL || hi.0 - lo.0 <= 1e-13 * hi.0 {
                break;
            }
            let mid = 0.5 * (lo.0 + hi.0);
            let v = self.at_multiplier(mid, r)?;
            if v.aux.unwrap() >= self.threshold {
                hi = (mid, v);
            } else {
                lo = (mid, v);
            }
        }

        // time-share between the bracketing solutions so the constraint is tight
        let (a_lo, a_hi) = (lo.1.aux.unwrap(), hi.1.aux.unwrap());
        let w_lo = ((a_hi - self.threshold) / (a_hi - a_lo)).clamp(0.0, 1.0);
        Ok(ConstrainedValue {
            value: hi.1.value + w_lo * (lo.1.value - hi.1.value),
            aux: a_hi + w_lo * (a_lo - a_hi),
            multiplier: hi.0,
            active: true,
            converged: lo.1.converged && hi.1.converged,
        })
    }
}
