use ndarray::Array2;

use super::blahut::{self, BaOptions, BaOutcome};
use super::scenario::{channel_expectation, Channel};
use crate::error::{Error, Result};
use crate::numeric::geomspace;

/// Rate gap above which neighbouring traced points get a slope in between.
const REFINE_RATE_GAP: f64 = 0.05;
const REFINE_PASSES: usize = 12;
/// Evaluation stops refining once the bracketing vertices are this close in rate.
const EVAL_RATE_TOL: f64 = 1e-6;
const EVAL_MAX_STEPS: usize = 60;

/// One solved point of a rate/value trade-off.
#[derive(Debug, Clone)]
pub struct RdPoint {
    /// Lagrange slope; `0` is the rate-zero end, `+∞` the saturation end.
    pub slope: f64,
    pub rate: f64,
    /// Expected gain (the maximized quantity, without any constraint term).
    pub value: f64,
    /// Expected auxiliary loss, when one is attached.
    pub aux: Option<f64>,
    /// Expected tilt `gain + λ·aux` that the point actually maximizes.
    pub objective: f64,
    pub channel: Channel,
    pub converged: bool,
    pub iterations: usize,
    /// Certified Lagrangian suboptimality.
    pub gap: f64,
}

/// Points traced over the slope grid, kept sorted by slope.
#[derive(Debug, Clone, Default)]
pub struct RdCurve {
    points: Vec<RdPoint>,
}

impl RdCurve {
    pub fn points(&self) -> &[RdPoint] {
        &self.points
    }

    fn insert(&mut self, p: RdPoint) {
        let at = self.points.partition_point(|q| q.slope < p.slope);
        if at < self.points.len() && self.points[at].slope == p.slope {
            self.points[at] = p;
        } else {
            self.points.insert(at, p);
        }
    }

    /// Indices of the upper concave envelope of `(rate, objective)`, in
    /// increasing rate, stopping at the largest objective.
    pub fn envelope(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.points.len()).collect();
        order.sort_by(|&a, &b| {
            let (pa, pb) = (&self.points[a], &self.points[b]);
            pa.rate
                .total_cmp(&pb.rate)
                .then(pb.objective.total_cmp(&pa.objective))
        });
        let mut hull: Vec<usize> = Vec::new();
        for i in order {
            let p = &self.points[i];
            if let Some(&last) = hull.last() {
                if self.points[last].rate == p.rate {
                    continue;
                }
            }
            while hull.len() >= 2 {
                let a = &self.points[hull[hull.len() - 2]];
                let b = &self.points[hull[hull.len() - 1]];
                let cross = (b.rate - a.rate) * (p.objective - a.objective)
                    - (b.objective - a.objective) * (p.rate - a.rate);
                if cross >= 0.0 {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(i);
        }
        let best = hull
            .iter()
            .enumerate()
            .max_by(|a, b| {
                let (va, vb) = (self.points[*a.1].objective, self.points[*b.1].objective);
                // earliest (smallest rate) maximizer wins ties
                va.total_cmp(&vb).then(b.0.cmp(&a.0))
            })
            .map(|(k, _)| k)
            .unwrap_or(0);
        hull.truncate(best + 1);
        hull
    }
}

/// Value of a curve at a prescribed rate, interpolated between two envelope
/// vertices (a time-sharing mixture of their channels).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveValue {
    /// Rate actually used, `min(r, saturation rate)`.
    pub rate: f64,
    pub value: f64,
    pub aux: Option<f64>,
    pub objective: f64,
    /// Both bracketing vertices met the Blahut-Arimoto tolerance.
    pub converged: bool,
    pub slope_lo: f64,
    pub slope_hi: f64,
}

/// Rate/value trade-off of one tilted problem: source `p(z)`, a gain matrix
/// and an optional auxiliary matrix mixed in with multiplier `lambda`.
#[derive(Debug, Clone)]
pub(crate) struct CurveEngine {
    source: Vec<f64>,
    gain: Array2<f64>,
    aux: Option<Array2<f64>>,
    tilt: Array2<f64>,
    opts: BaOptions,
    curve: RdCurve,
    full_grid: bool,
    traced: bool,
    rate_tol: f64,
}

impl CurveEngine {
    pub fn new(source: Vec<f64>, gain: Array2<f64>, aux: Option<Array2<f64>>, lambda: f64, opts: BaOptions) -> Self {
        let tilt = match &aux {
            Some(a) if lambda != 0.0 => &gain + &(a * lambda),
            _ => gain.clone(),
        };
        Self {
            source,
            gain,
            aux,
            tilt,
            opts,
            curve: RdCurve::default(),
            full_grid: true,
            traced: false,
            rate_tol: EVAL_RATE_TOL,
        }
    }

    /// Skip the global slope grid and only bisect toward requested rates.
    pub fn sparse(mut self) -> Self {
        self.full_grid = false;
        self
    }

    /// Stop refining a requested rate once its bracketing vertices are this
    /// close in rate.
    pub fn with_rate_tol(mut self, tol: f64) -> Self {
        self.rate_tol = tol;
        self
    }

    pub fn curve(&mut self) -> &RdCurve {
        self.ensure_traced();
        &self.curve
    }

    fn point_from(&self, slope: f64, out: BaOutcome) -> RdPoint {
        let value = channel_expectation(&self.source, &out.cond, &self.gain);
        let aux = self
            .aux
            .as_ref()
            .map(|a| channel_expectation(&self.source, &out.cond, a));
        let objective = channel_expectation(&self.source, &out.cond, &self.tilt);
        RdPoint {
            slope,
            rate: out.rate,
            value,
            aux,
            objective,
            channel: Channel::from_raw(out.cond),
            converged: out.converged,
            iterations: out.iterations,
            gap: out.gap,
        }
    }

    pub fn solve_slope(&self, slope: f64) -> RdPoint {
        let out = if slope == 0.0 {
            blahut::independent_optimum(&self.source, &self.tilt)
        } else if slope == f64::INFINITY {
            blahut::saturation(&self.source, &self.tilt)
        } else {
            let warm = self.nearest_solved(slope).map(|p| p.channel.output_law_raw(&self.source));
            blahut::solve(&self.source, &self.tilt, slope, self.opts, warm.as_deref())
        };
        self.point_from(slope, out)
    }

    /// Solved point with finite positive slope closest to `slope` on a log scale.
    fn nearest_solved(&self, slope: f64) -> Option<&RdPoint> {
        self.curve
            .points
            .iter()
            .filter(|p| p.slope > 0.0 && p.slope.is_finite())
            .min_by(|a, b| {
                let da = (a.slope / slope).ln().abs();
                let db = (b.slope / slope).ln().abs();
                da.total_cmp(&db)
            })
    }

    fn ensure_traced(&mut self) {
        if self.traced {
            return;
        }
        self.traced = true;
        let mut slopes = vec![0.0, f64::INFINITY];
        if self.full_grid {
            slopes.extend(geomspace(1e-3, 1e3, 64));
        } else {
            slopes.push(1.0);
        }
        for s in slopes {
            let p = self.solve_slope(s);
            self.curve.insert(p);
        }
        if !self.full_grid {
            return;
        }
        for _ in 0..REFINE_PASSES {
            let mut extra = Vec::new();
            for pair in self.curve.points.windows(2) {
                let (a, b) = (&pair[0], &pair[1]);
                if b.rate - a.rate <= REFINE_RATE_GAP {
                    continue;
                }
                if let Some(mid) = mid_slope(a.slope, b.slope) {
                    extra.push(mid);
                }
            }
            if extra.is_empty() {
                break;
            }
            for s in extra {
                let p = self.solve_slope(s);
                self.curve.insert(p);
            }
        }
    }

    /// Largest rate worth paying for: the rate of the first envelope vertex
    /// attaining the maximal objective.
    pub fn saturation_rate(&mut self) -> f64 {
        self.ensure_traced();
        let hull = self.curve.envelope();
        self.curve.points[*hull.last().expect("curve has points")].rate
    }

    pub fn evaluate(&mut self, r: f64) -> Result<CurveValue> {
        if r.is_nan() || r < 0.0 {
            return Err(Error::InvalidArgument(format!("rate must be nonnegative, got {r}")));
        }
        self.ensure_traced();
        let mut slope_lo: f64 = 0.0;
        let mut slope_hi = f64::INFINITY;
        for _ in 0..=EVAL_MAX_STEPS {
            let hull = self.curve.envelope();
            let first = &self.curve.points[hull[0]];
            let last = &self.curve.points[*hull.last().unwrap()];
            if r <= first.rate {
                return Ok(vertex_value(first, r.min(first.rate)));
            }
            if r >= last.rate {
                return Ok(vertex_value(last, last.rate));
            }
            let k = hull.partition_point(|&i| self.curve.points[i].rate <= r);
            let (a, b) = (&self.curve.points[hull[k - 1]], &self.curve.points[hull[k]]);
            if b.rate - a.rate <= self.rate_tol {
                return Ok(interpolate(a, b, r));
            }
            // the slope bracket narrows monotonically even when a new point
            // lands on the current chord
            slope_lo = slope_lo.max(a.slope.min(b.slope));
            slope_hi = slope_hi.min(a.slope.max(b.slope));
            let Some(mid) = mid_slope(slope_lo, slope_hi) else {
                return Ok(interpolate(a, b, r));
            };
            let p = self.solve_slope(mid);
            if p.rate <= r {
                slope_lo = mid;
            } else {
                slope_hi = mid;
            }
            self.curve.insert(p);
        }
        let hull = self.curve.envelope();
        let k = hull.partition_point(|&i| self.curve.points[i].rate <= r);
        Ok(interpolate(
            &self.curve.points[hull[k - 1]],
            &self.curve.points[hull[k]],
            r,
        ))
    }
}

fn mid_slope(lo: f64, hi: f64) -> Option<f64> {
    let mid = if lo == 0.0 && hi == f64::INFINITY {
        1.0
    } else if lo == 0.0 {
        hi / 2.0
    } else if hi == f64::INFINITY {
        if lo > 1e15 {
            return None;
        }
        lo * 2.0
    } else {
        if hi / lo < 1.0 + 1e-12 {
            return None;
        }
        (lo * hi).sqrt()
    };
    if mid < 1e-300 {
        return None;
    }
    Some(mid)
}

fn vertex_value(p: &RdPoint, rate: f64) -> CurveValue {
    CurveValue {
        rate,
        value: p.value,
        aux: p.aux,
        objective: p.objective,
        converged: p.converged,
        slope_lo: p.slope,
        slope_hi: p.slope,
    }
}

fn interpolate(a: &RdPoint, b: &RdPoint, r: f64) -> CurveValue {
    let t = ((r - a.rate) / (b.rate - a.rate)).clamp(0.0, 1.0);
    let mix = |x: f64, y: f64| x + t * (y - x);
    CurveValue {
        rate: r,
        value: mix(a.value, b.value),
        aux: a.aux.zip(b.aux).map(|(x, y)| mix(x, y)),
        objective: mix(a.objective, b.objective),
        converged: a.converged && b.converged,
        slope_lo: a.slope,
        slope_hi: b.slope,
    }
}
