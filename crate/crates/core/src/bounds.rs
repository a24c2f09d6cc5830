//! Closed-form generalization bounds evaluated from information quantities.
//!
//! Everything is in nats. `sigma2` is a sub-Gaussian variance proxy of the
//! loss (for losses in `[a, b]`, Hoeffding gives `((b - a)/2)²`).

use std::sync::Once;

use crate::error::{Error, Result};
use crate::numeric::golden_max;

/// Default coefficient of `ln(4/δ)` inside the joint-divergence term of
/// [`erm_excess_bound`].
pub const ERM_LOG_COEFF_DEFAULT: f64 = 3.0;

/// Number of grid points for the multiplier searches in [`thm3_lower`] and
/// [`thm4_lower`].
pub const LAMBDA_GRID_POINTS: usize = 512;
pub const LAMBDA_CAP_DEFAULT: f64 = 50.0;
const LAMBDA_FLOOR: f64 = 1e-4;
/// Multiplier range for [`thm4_lower`]; wide so that tiny rates, whose
/// optimal multiplier grows like `1/√rate`, are still covered.
const THM4_LAMBDA_RANGE: (f64, f64) = (1e-6, 1e6);
const REFINE_ITERS: usize = 200;

fn check_nonneg(name: &str, v: f64) -> Result<()> {
    if v.is_nan() || v < 0.0 {
        return Err(Error::InvalidArgument(format!("{name} must be nonnegative, got {v}")));
    }
    Ok(())
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("confidence δ must lie in (0, 1), got {delta}")));
    }
    Ok(())
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be positive".into()));
    }
    Ok(())
}

/// `√(2σ² I / n)`.
pub fn xu_raginsky(sigma2: f64, n: usize, mi: f64) -> Result<f64> {
    check_nonneg("sigma2", sigma2)?;
    check_nonneg("mutual information", mi)?;
    check_n(n)?;
    Ok((2.0 * sigma2 * mi / n as f64).sqrt())
}

/// `√(2σ²γ + 2σ² I / n)` with `γ ≥ D(μ′ ‖ μ)`.
pub fn cor1_upper(sigma2: f64, n: usize, mi: f64, gamma: f64) -> Result<f64> {
    check_nonneg("sigma2", sigma2)?;
    check_nonneg("mutual information", mi)?;
    check_nonneg("gamma", gamma)?;
    check_n(n)?;
    Ok((2.0 * sigma2 * gamma + 2.0 * sigma2 * mi / n as f64).sqrt())
}

/// `(1/n) Σᵢ √(2σ² (Iᵢ + γ))` with `Iᵢ = I(Zᵢ; W)`.
pub fn per_sample_upper(sigma2: f64, per_sample_mi: &[f64], gamma: f64) -> Result<f64> {
    check_nonneg("sigma2", sigma2)?;
    check_nonneg("gamma", gamma)?;
    if per_sample_mi.is_empty() {
        return Err(Error::InvalidArgument("per-sample information vector is empty".into()));
    }
    for &i in per_sample_mi {
        check_nonneg("per-sample mutual information", i)?;
    }
    let n = per_sample_mi.len() as f64;
    Ok(per_sample_mi
        .iter()
        .map(|i| (2.0 * sigma2 * (i + gamma)).sqrt())
        .sum::<f64>()
        / n)
}

/// Log-MGF `λ ↦ λ²σ²/2` of a σ²-sub-Gaussian variable.
pub fn subgaussian_log_mgf(sigma2: f64) -> impl Fn(f64) -> f64 {
    move |lambda| 0.5 * lambda * lambda * sigma2
}

/// `x ↦ exp(x²α²/2)`, the MGF envelope of an α-sub-Gaussian loss.
pub fn subgaussian_psi(alpha: f64) -> impl Fn(f64) -> f64 {
    move |x| (0.5 * x * x * alpha * alpha).exp()
}

/// Lower bound on the smallest expected distortion at rate `rate`:
/// `sup_{λ<0} (rate + kl_shift + φ(λ)) / λ`, with `φ` the log-MGF of the
/// distortion under the product law. Searched over `λ ∈ [-lambda_cap, -1e-4]`
/// on a log grid and refined by golden section around the best grid point.
pub fn thm3_lower(rate: f64, kl_shift: f64, mgf_log: impl Fn(f64) -> f64, lambda_cap: f64) -> Result<f64> {
    check_nonneg("rate", rate)?;
    check_nonneg("kl shift", kl_shift)?;
    if !(lambda_cap > LAMBDA_FLOOR) || !lambda_cap.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "multiplier cap must exceed {LAMBDA_FLOOR}, got {lambda_cap}"
        )));
    }
    let objective = |log_t: f64| {
        let t = log_t.exp();
        let v = -(rate + kl_shift + mgf_log(-t)) / t;
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    };
    Ok(grid_then_golden(objective, LAMBDA_FLOOR.ln(), lambda_cap.ln()))
}

/// Maximizes `f` over `[lo, hi]` (log-multiplier coordinates): best of a
/// 512-point grid, then golden section between the grid neighbours.
fn grid_then_golden(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let k = LAMBDA_GRID_POINTS;
    let xs: Vec<f64> = (0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect();
    let (best_i, best) = xs
        .iter()
        .map(|&x| f(x))
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    let a = xs[best_i.saturating_sub(1)];
    let b = xs[(best_i + 1).min(k - 1)];
    let (_, refined) = golden_max(&f, a, b, REFINE_ITERS);
    best.max(refined)
}

static THM4_SIGN_NOTE: Once = Once::new();

/// `d3_zero - inf_{λ>0} [λ·rate + λ(ψ(1/(nλ))ⁿ - 1)]`, where `ψ(x) ≥ 1`
/// bounds the MGF of the centered loss. The penalty carries the sign under
/// which the infimum is finite (with the opposite sign it is `-∞`).
pub fn thm4_lower(d3_zero: f64, psi: impl Fn(f64) -> f64, n: usize, rate: f64) -> Result<f64> {
    check_nonneg("rate", rate)?;
    check_n(n)?;
    THM4_SIGN_NOTE.call_once(|| {
        log::warn!("thm4_lower: using the penalty λ·r + λ(ψⁿ - 1); the opposite sign gives an unbounded infimum");
    });
    let nf = n as f64;
    let neg_penalty = |log_l: f64| {
        let l = log_l.exp();
        let lp = psi(1.0 / (nf * l)).ln();
        let p = l * rate + l * (nf * lp).exp_m1();
        if p.is_nan() {
            f64::NEG_INFINITY
        } else {
            -p
        }
    };
    let best = grid_then_golden(neg_penalty, THM4_LAMBDA_RANGE.0.ln(), THM4_LAMBDA_RANGE.1.ln());
    Ok(d3_zero + best)
}

/// Penalty subtracted from `d3_zero` in [`cor2_lower`].
pub fn cor2_penalty(alpha_sub: f64, n: usize, rate: f64) -> Result<f64> {
    check_nonneg("alpha", alpha_sub)?;
    check_n(n)?;
    if !(rate > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "rate must be positive for the closed-form penalty, got {rate}; use thm4_lower at rate 0"
        )));
    }
    let a = alpha_sub * rate.sqrt() / 2f64.sqrt();
    let b = alpha_sub * rate.exp_m1() / (2.0 * rate).sqrt();
    Ok((a + b) / (n as f64).sqrt())
}

/// `d3_zero - (1/√n)[α√r/√2 + α(e^r - 1)/√(2r)]`.
pub fn cor2_lower(d3_zero: f64, alpha_sub: f64, n: usize, rate: f64) -> Result<f64> {
    Ok(d3_zero - cor2_penalty(alpha_sub, n, rate)?)
}

/// Tail bound `P[gen ≥ η]` for an algorithm whose output is trained on
/// `μ′`-samples, clamped to `[0, 1]`.
pub fn high_prob_tail(sigma2: f64, n: usize, eta: f64, d2_mismatch: f64, d2_joint: f64) -> Result<f64> {
    check_nonneg("sigma2", sigma2)?;
    check_nonneg("eta", eta)?;
    check_nonneg("mismatch divergence", d2_mismatch)?;
    check_nonneg("joint divergence", d2_joint)?;
    check_n(n)?;
    if sigma2 == 0.0 {
        return Ok(if eta > 0.0 { 0.0 } else { 1.0 });
    }
    let nf = n as f64;
    let exponent = (nf * (0.5 * eta * eta - sigma2 * d2_mismatch) - sigma2 * d2_joint) / (3.0 * sigma2);
    Ok((2.0 * (-exponent).exp()).clamp(0.0, 1.0))
}

/// Rényi orders `(1 + (α-1)p, 1 + (α-1)q)` used by [`lemma4_rhs`].
pub fn lemma4_orders(alpha: f64, p: f64, q: f64) -> Result<(f64, f64)> {
    check_holder(alpha, p, q)?;
    Ok((1.0 + (alpha - 1.0) * p, 1.0 + (alpha - 1.0) * q))
}

fn check_holder(alpha: f64, p: f64, q: f64) -> Result<()> {
    if !(alpha > 1.0 && p > 1.0 && q > 1.0) {
        return Err(Error::InvalidArgument(format!(
            "need α, p, q > 1, got ({alpha}, {p}, {q})"
        )));
    }
    if (1.0 / p + 1.0 / q - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!("p = {p} and q = {q} are not Hölder conjugate")));
    }
    Ok(())
}

/// Upper bound on `D_α(P_{WS′} ‖ P_W ⊗ μⁿ)` by Hölder:
/// `D_{1+(α-1)p}(P_{WS′} ‖ P_W ⊗ μ′ⁿ) + n·D_{1+(α-1)q}(μ′ ‖ μ)`. The two
/// divergences are passed in at the orders given by [`lemma4_orders`].
pub fn lemma4_rhs(alpha: f64, p: f64, q: f64, d_joint_order: f64, d_marg_order: f64, n: usize) -> Result<f64> {
    check_holder(alpha, p, q)?;
    check_n(n)?;
    Ok(d_joint_order + n as f64 * d_marg_order)
}

/// High-probability excess risk of empirical risk minimization trained on
/// `μ′` and evaluated on `μ`; `coeff` multiplies `ln(4/δ)` in the second term
/// (see [`ERM_LOG_COEFF_DEFAULT`]).
pub fn erm_excess_bound(
    sigma2: f64,
    n: usize,
    delta: f64,
    d2_mismatch: f64,
    d2_joint: f64,
    coeff: f64,
) -> Result<f64> {
    check_nonneg("sigma2", sigma2)?;
    check_nonneg("mismatch divergence", d2_mismatch)?;
    check_nonneg("joint divergence", d2_joint)?;
    check_nonneg("coefficient", coeff)?;
    check_delta(delta)?;
    check_n(n)?;
    let nf = n as f64;
    let log_term = (4.0 / delta).ln();
    let floor = 2.0 * sigma2 * d2_mismatch;
    Ok((floor + 2.0 * sigma2 * log_term / nf).sqrt()
        + (floor + 2.0 * sigma2 * (d2_joint + coeff * log_term) / nf).sqrt())
}

/// `g(δ) = √(2(ln(1/δ) + γ)/σ²)`.
pub fn misspec_g(sigma2: f64, delta: f64, gamma: f64) -> Result<f64> {
    check_nonneg("sigma2", sigma2)?;
    check_nonneg("gamma", gamma)?;
    check_delta(delta)?;
    Ok((2.0 * ((1.0 / delta).ln() + gamma) / sigma2).sqrt())
}

/// `ln(1 + ½(eˣ - 1)c)` without overflow for large `x`.
fn log_stability_term(x: f64, c: f64) -> f64 {
    if x > 30.0 {
        x + (0.5 * c + (1.0 - 0.5 * c) * (-x).exp()).ln()
    } else {
        (0.5 * x.exp_m1() * c).ln_1p()
    }
}

/// `√(2σ²γ) + √(2σ²[ln(2/δ) + γ]) + (1/g(δ/2)) Σᵢ ln(1 + ½(e^{g(δ/2)βᵢ} - 1)√γ)`.
pub fn misspec_f(sigma2: f64, delta: f64, gamma: f64, betas: &[f64]) -> Result<f64> {
    for &b in betas {
        check_nonneg("stability coefficient", b)?;
    }
    let g = misspec_g(sigma2, delta / 2.0, gamma)?;
    let root_gamma = gamma.sqrt();
    let stability: f64 = if root_gamma == 0.0 {
        0.0
    } else if g.is_infinite() {
        // limit of (1/g) ln(½ e^{gβ} √γ) as g → ∞
        betas.iter().sum()
    } else {
        betas.iter().map(|&b| log_stability_term(g * b, root_gamma)).sum::<f64>() / g
    };
    Ok((2.0 * sigma2 * gamma).sqrt() + (2.0 * sigma2 * ((2.0 / delta).ln() + gamma)).sqrt() + stability)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmallerBound {
    A,
    B,
    Tie,
}

/// The two excess-risk bounds for a stable algorithm under misspecification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MisspecComparison {
    /// `ε(δ) + Σβᵢ + 2√(2σ²γ)`.
    pub bound_a: f64,
    /// `ε(δ/2) + misspec_f(σ², δ, γ, β)`.
    pub bound_b: f64,
    pub smaller: SmallerBound,
}

pub fn misspec_eps_bounds(
    eps_base: f64,
    eps_base_half_delta: f64,
    sigma2: f64,
    gamma: f64,
    betas: &[f64],
    delta: f64,
) -> Result<MisspecComparison> {
    for &b in betas {
        check_nonneg("stability coefficient", b)?;
    }
    check_nonneg("gamma", gamma)?;
    check_nonneg("sigma2", sigma2)?;
    let bound_a = eps_base + betas.iter().sum::<f64>() + 2.0 * (2.0 * sigma2 * gamma).sqrt();
    let bound_b = eps_base_half_delta + misspec_f(sigma2, delta, gamma, betas)?;
    let smaller = if bound_a < bound_b {
        SmallerBound::A
    } else if bound_b < bound_a {
        SmallerBound::B
    } else {
        SmallerBound::Tie
    };
    Ok(MisspecComparison {
        bound_a,
        bound_b,
        smaller,
    })
}

/// Measured quantities a bound may depend on.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BoundInputs {
    pub sigma2: f64,
    pub n: usize,
    /// `I(S′; W)` in nats.
    pub mi: f64,
    /// Upper bound on `D(μ′ ‖ μ)`.
    pub gamma: f64,
    pub per_sample_mi: Option<Vec<f64>>,
    pub d2_mismatch: Option<f64>,
    pub d2_joint: Option<f64>,
    pub eta: Option<f64>,
    pub delta: Option<f64>,
    pub alpha_sub: Option<f64>,
    pub betas: Option<Vec<f64>>,
    pub eps_base: Option<f64>,
    /// `E[L_μ(W)] - E[L_μ′(W)]` for the output law.
    pub d3_zero: Option<f64>,
}

/// Closed-form bounds selectable by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    XuRaginsky,
    Cor1Upper,
    PerSampleUpper,
    Cor2Lower,
    HighProbTail,
    ErmExcess,
}

impl BoundKind {
    pub const ALL: [BoundKind; 6] = [
        BoundKind::XuRaginsky,
        BoundKind::Cor1Upper,
        BoundKind::PerSampleUpper,
        BoundKind::Cor2Lower,
        BoundKind::HighProbTail,
        BoundKind::ErmExcess,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BoundKind::XuRaginsky => "xu_raginsky",
            BoundKind::Cor1Upper => "cor1_upper",
            BoundKind::PerSampleUpper => "per_sample_upper",
            BoundKind::Cor2Lower => "cor2_lower",
            BoundKind::HighProbTail => "high_prob_tail",
            BoundKind::ErmExcess => "erm_excess",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub name: &'static str,
    pub value: f64,
    /// Infinite, or a probability bound of one.
    pub vacuous: bool,
    pub assumptions: Vec<&'static str>,
    pub inputs: BoundInputs,
}

fn need<T: Clone>(v: &Option<T>, what: &str, bound: &str) -> Result<T> {
    v.clone()
        .ok_or_else(|| Error::InvalidArgument(format!("{bound} needs {what}")))
}

/// Evaluates one named bound on `inputs`.
pub fn report(kind: BoundKind, inputs: &BoundInputs) -> Result<BoundReport> {
    let name = kind.name();
    let (value, assumptions): (f64, Vec<&'static str>) = match kind {
        BoundKind::XuRaginsky => (
            xu_raginsky(inputs.sigma2, inputs.n, inputs.mi)?,
            vec!["loss sub-Gaussian under the test law", "no train/test mismatch"],
        ),
        BoundKind::Cor1Upper => (
            cor1_upper(inputs.sigma2, inputs.n, inputs.mi, inputs.gamma)?,
            vec!["loss sub-Gaussian under the test law", "gamma ≥ D(train ‖ test)"],
        ),
        BoundKind::PerSampleUpper => (
            per_sample_upper(
                inputs.sigma2,
                &need(&inputs.per_sample_mi, "per-sample mutual information", name)?,
                inputs.gamma,
            )?,
            vec!["loss sub-Gaussian under the test law", "gamma ≥ D(train ‖ test)"],
        ),
        BoundKind::Cor2Lower => (
            cor2_lower(
                need(&inputs.d3_zero, "the rate-zero gap", name)?,
                need(&inputs.alpha_sub, "alpha", name)?,
                inputs.n,
                inputs.mi / inputs.n as f64,
            )?,
            vec!["loss α-sub-Gaussian under the training law", "rate taken as I/n"],
        ),
        BoundKind::HighProbTail => (
            high_prob_tail(
                inputs.sigma2,
                inputs.n,
                need(&inputs.eta, "eta", name)?,
                need(&inputs.d2_mismatch, "the order-2 mismatch divergence", name)?,
                need(&inputs.d2_joint, "the order-2 joint divergence", name)?,
            )?,
            vec!["loss sub-Gaussian under the test law"],
        ),
        BoundKind::ErmExcess => (
            erm_excess_bound(
                inputs.sigma2,
                inputs.n,
                need(&inputs.delta, "delta", name)?,
                need(&inputs.d2_mismatch, "the order-2 mismatch divergence", name)?,
                need(&inputs.d2_joint, "the order-2 joint divergence", name)?,
                ERM_LOG_COEFF_DEFAULT,
            )?,
            vec!["algorithm is empirical risk minimization", "loss sub-Gaussian"],
        ),
    };
    let vacuous = !value.is_finite() || (kind == BoundKind::HighProbTail && value >= 1.0);
    Ok(BoundReport {
        name,
        value,
        vacuous,
        assumptions,
        inputs: inputs.clone(),
    })
}
