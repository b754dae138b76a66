//! Closed-form kernel shared by every other module: the beta surrogate
//! likelihood ratio `h(p) = (1 - k) p^(-k)`, the rejection weight, its
//! p-value cutoff form, the monotone ψ-transform and winsorization.
//!
//! Two tie conventions are fixed here and honored downstream: the rejection
//! side uses `h(p) >= w(t)` (equivalently `ψ(p) <= t`), the mirror side uses
//! the strict `h(1 - p) > w(t)` (equivalently `ψ(1 - p) < t`).

use crate::error::{CamtError, Result};

/// Smallest p-value kept after clamping; the largest is `1 - P_MIN`.
pub const P_MIN: f64 = 1e-15;

/// Default lower winsorization bound for the null probability.
pub const DEFAULT_EPS1: f64 = 0.1;
/// Default upper winsorization gap, so that `pi <= 1 - DEFAULT_EPS2`.
pub const DEFAULT_EPS2: f64 = 1e-5;

/// Bound keeping a fitted `k` strictly inside (0, 1) once the logistic link
/// saturates in double precision.
pub const K_MARGIN: f64 = 1e-12;

/// A p-value clamped to `[P_MIN, 1 - P_MIN]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct PValue(f64);

impl PValue {
    /// Validates `p ∈ [0, 1]` and clamps it away from the endpoints.
    pub fn new(p: f64) -> Result<Self> {
        if !p.is_finite() || !(0.0..=1.0).contains(&p) {
            return Err(CamtError::Domain(format!("p-value {p} outside [0, 1]")));
        }
        Ok(PValue(clamp_p(p)))
    }

    /// Like [`PValue::new`], also reporting whether clamping changed the value.
    pub fn new_flagged(p: f64) -> Result<(Self, bool)> {
        let v = Self::new(p)?;
        Ok((v, v.0 != p))
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }

    /// The reflected p-value `1 - p`, still inside the clamped range.
    #[inline]
    pub fn mirror(self) -> PValue {
        PValue(clamp_p(1.0 - self.0))
    }
}

#[inline]
pub(crate) fn clamp_p(p: f64) -> f64 {
    p.clamp(P_MIN, 1.0 - P_MIN)
}

/// Shape parameter `k` of the beta(1 - k, 1) surrogate, strictly inside (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct BetaParam(f64);

impl BetaParam {
    pub fn new(k: f64) -> Result<Self> {
        if !(k > 0.0 && k < 1.0) {
            return Err(CamtError::Domain(format!("beta parameter {k} outside (0, 1)")));
        }
        Ok(BetaParam(k))
    }

    /// `k = 1 / (1 + exp(-eta))`, kept at least `K_MARGIN` away from 0 and 1.
    pub fn from_logit(eta: f64) -> Self {
        BetaParam(logistic(eta).clamp(K_MARGIN, 1.0 - K_MARGIN))
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

/// Null probability after winsorization into `[eps1, 1 - eps2]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct NullProb(f64);

impl NullProb {
    /// Accepts any value strictly inside (0, 1); use [`NullProb::winsorized`]
    /// for raw model output.
    pub fn new(pi: f64) -> Result<Self> {
        if !(pi > 0.0 && pi < 1.0) {
            return Err(CamtError::Domain(format!("null probability {pi} outside (0, 1)")));
        }
        Ok(NullProb(pi))
    }

    pub fn winsorized(pi: f64, eps1: f64, eps2: f64) -> Result<Self> {
        Ok(NullProb(winsorize(pi, eps1, eps2)?))
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

#[inline]
pub(crate) fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(x))` without overflow.
#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Beta(1 - k, 1) density `(1 - k) p^(-k)`.
///
/// The argument is not clamped; callers holding a [`PValue`] pass
/// `p.get()`. Fails for `p <= 0`, `p > 1` or non-finite input.
pub fn surrogate_density(p: f64, k: BetaParam) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(CamtError::Domain(format!("surrogate density needs p in (0, 1], got {p}")));
    }
    Ok(density_unchecked(p, k.0))
}

#[inline]
pub(crate) fn density_unchecked(p: f64, k: f64) -> f64 {
    (1.0 - k) * (-k * p.ln()).exp()
}

/// Rejection weight `w(t) = (1 - t) pi / (t (1 - pi))`.
pub fn weight(t: f64, pi: NullProb) -> Result<f64> {
    check_open_unit("t", t)?;
    Ok(weight_unchecked(t, pi.0))
}

#[inline]
pub(crate) fn weight_unchecked(t: f64, pi: f64) -> f64 {
    (1.0 - t) * pi / (t * (1.0 - pi))
}

/// Largest p-value rejected at level `t`:
/// `min(1, {t (1 - k)(1 - pi) / ((1 - t) pi)}^(1/k))`.
///
/// `p <= cutoff(t, pi, k)` holds exactly when `surrogate_density(p, k) >= weight(t, pi)`.
pub fn cutoff(t: f64, pi: NullProb, k: BetaParam) -> Result<f64> {
    check_open_unit("t", t)?;
    Ok(cutoff_unchecked(t, pi.0, k.0))
}

#[inline]
pub(crate) fn cutoff_unchecked(t: f64, pi: f64, k: f64) -> f64 {
    let ratio = t * (1.0 - k) * (1.0 - pi) / ((1.0 - t) * pi);
    if ratio >= 1.0 {
        1.0
    } else {
        ratio.powf(1.0 / k)
    }
}

/// `ψ(p) = pi / (pi + (1 - pi) h(p))`, strictly increasing in `p`.
///
/// `ψ(p) <= t` is the rejection rule in statistic form; it is one minus
/// the posterior probability of the alternative under the surrogate model.
pub fn psi(p: PValue, pi: NullProb, k: BetaParam) -> f64 {
    psi_unchecked(p.0, pi.0, k.0)
}

#[inline]
pub(crate) fn psi_unchecked(p: f64, pi: f64, k: f64) -> f64 {
    pi / (pi + (1.0 - pi) * density_unchecked(p, k))
}

/// Clamp `x` into `[eps1, 1 - eps2]`.
pub fn winsorize(x: f64, eps1: f64, eps2: f64) -> Result<f64> {
    check_eps(eps1, eps2)?;
    if x.is_nan() {
        return Err(CamtError::Domain("cannot winsorize NaN".into()));
    }
    Ok(x.clamp(eps1, 1.0 - eps2))
}

pub(crate) fn check_eps(eps1: f64, eps2: f64) -> Result<()> {
    if !(eps1 > 0.0 && eps2 > 0.0 && eps1 < 1.0 - eps2) {
        return Err(CamtError::Config(format!(
            "winsorization bounds need 0 < eps1 < 1 - eps2 < 1, got eps1={eps1}, eps2={eps2}"
        )));
    }
    Ok(())
}

fn check_open_unit(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v < 1.0) {
        return Err(CamtError::Domain(format!("{name}={v} outside (0, 1)")));
    }
    Ok(())
}
