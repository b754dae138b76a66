//! Mirror (BC-type) FDP estimation and threshold selection.
//!
//! With `s_i = ψ_i(p_i)` and `r_i = ψ_i(1 - p_i)`, the estimate at level `t` is
//!
//! ```text
//! FDP_up(t) = (ξ + #{i : r_i < t}) / max(1, #{i : s_i <= t})
//! ```
//!
//! and the selected threshold is the largest `t` in `{0} ∪ {s_i}` (capped
//! at `t_up = min_i ψ_i(0.5)` unless disabled) whose estimate is at most α.
//! Between consecutive `s` values the denominator is constant and the
//! numerator can only grow, so restricting the search to `s` values loses
//! nothing.

use crate::em::FittedHypotheses;
use crate::error::{CamtError, Result};
use crate::surrogate::{cutoff_unchecked, psi_unchecked, PValue};

#[derive(Debug, Clone, PartialEq)]
pub struct MirrorStatistics {
    /// `ψ_i(p_i)`; hypothesis `i` is rejected at `t` when `s_i <= t`.
    pub s: Vec<f64>,
    /// `ψ_i(1 - p_i)`; counted as a false-rejection proxy when `r_i < t`.
    pub r: Vec<f64>,
    /// `min_i ψ_i(0.5)`.
    pub t_up: f64,
}

impl MirrorStatistics {
    pub fn compute(pvals: &[PValue], fitted: &FittedHypotheses) -> Result<Self> {
        if pvals.len() != fitted.len() {
            return Err(CamtError::Dimension(format!(
                "{} p-values for {} fitted hypotheses",
                pvals.len(),
                fitted.len()
            )));
        }
        if pvals.is_empty() {
            return Err(CamtError::InsufficientData("no hypotheses".into()));
        }
        let mut s = Vec::with_capacity(pvals.len());
        let mut r = Vec::with_capacity(pvals.len());
        let mut t_up = f64::INFINITY;
        for ((p, pi), k) in pvals.iter().zip(&fitted.pi_hat).zip(&fitted.k_hat) {
            let (pi, k) = (pi.get(), k.get());
            s.push(psi_unchecked(p.get(), pi, k));
            r.push(psi_unchecked(p.mirror().get(), pi, k));
            t_up = t_up.min(psi_unchecked(0.5, pi, k));
        }
        Ok(MirrorStatistics { s, r, t_up })
    }

    /// Build from precomputed statistics.
    pub fn from_parts(s: Vec<f64>, r: Vec<f64>, t_up: f64) -> Result<Self> {
        if s.len() != r.len() {
            return Err(CamtError::Dimension(format!(
                "{} rejection-side and {} mirror-side statistics",
                s.len(),
                r.len()
            )));
        }
        if s.iter().chain(&r).chain(std::iter::once(&t_up)).any(|v| !v.is_finite()) {
            return Err(CamtError::Domain("non-finite mirror statistic".into()));
        }
        Ok(MirrorStatistics { s, r, t_up })
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }
}

/// Options for [`select_threshold`].
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdOptions {
    /// Numerator offset ξ.
    pub xi: f64,
    /// Restrict candidates to `t <= t_up`.
    pub cap_at_t_up: bool,
    /// Replace the mirror count by [`mixed_false_rejection_estimate`].
    pub mixed: bool,
}

impl Default for ThresholdOptions {
    fn default() -> Self {
        ThresholdOptions { xi: 1.0, cap_at_t_up: true, mixed: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RejectionResult {
    pub t_hat: f64,
    pub rejected: Vec<bool>,
    /// FDP estimate evaluated at `t_hat`.
    pub fdp_hat_at_t: f64,
    pub n_rejections: usize,
}

/// `(1 + #{r_i < t}) / max(1, #{s_i <= t})`.
pub fn fdp_up(t: f64, stats: &MirrorStatistics) -> f64 {
    fdp_up_with_offset(t, stats, 1.0)
}

pub fn fdp_up_with_offset(t: f64, stats: &MirrorStatistics, xi: f64) -> f64 {
    let mirror = stats.r.iter().filter(|&&r| r < t).count();
    let rejected = stats.s.iter().filter(|&&s| s <= t).count();
    (xi + mirror as f64) / rejected.max(1) as f64
}

/// `max{Σ_i π̂_i c(t, π̂_i, k̂_i), #{r_i < t}}`.
pub fn mixed_false_rejection_estimate(
    t: f64,
    stats: &MirrorStatistics,
    fitted: &FittedHypotheses,
) -> Result<f64> {
    if !(t > 0.0 && t < 1.0) {
        return Err(CamtError::Domain(format!("t={t} outside (0, 1)")));
    }
    if fitted.len() != stats.len() {
        return Err(CamtError::Dimension(format!(
            "{} fitted hypotheses for {} statistics",
            fitted.len(),
            stats.len()
        )));
    }
    let expected = expected_null_rejections(t, fitted);
    let mirror = stats.r.iter().filter(|&&r| r < t).count() as f64;
    Ok(expected.max(mirror))
}

fn expected_null_rejections(t: f64, fitted: &FittedHypotheses) -> f64 {
    fitted
        .pi_hat
        .iter()
        .zip(&fitted.k_hat)
        .map(|(pi, k)| pi.get() * cutoff_unchecked(t, pi.get(), k.get()))
        .sum()
}

/// Largest admissible candidate threshold, or 0 when none qualifies.
///
/// `fitted` is only read in mixed mode, where it is required.
pub fn select_threshold(
    stats: &MirrorStatistics,
    alpha: f64,
    options: &ThresholdOptions,
    fitted: Option<&FittedHypotheses>,
) -> Result<f64> {
    Ok(sweep(stats, alpha, options, fitted)?.0)
}

/// Returns `(t_hat, estimate at t_hat)`.
fn sweep(
    stats: &MirrorStatistics,
    alpha: f64,
    options: &ThresholdOptions,
    fitted: Option<&FittedHypotheses>,
) -> Result<(f64, f64)> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(CamtError::Domain(format!("alpha={alpha} outside (0, 1]")));
    }
    if !(options.xi >= 0.0) {
        return Err(CamtError::Config(format!("xi={} must be nonnegative", options.xi)));
    }
    let fitted = if options.mixed {
        let f = fitted.ok_or_else(|| {
            CamtError::Config("mixed strategy needs the fitted hypotheses".into())
        })?;
        if f.len() != stats.len() {
            return Err(CamtError::Dimension("fitted hypotheses do not match statistics".into()));
        }
        Some(f)
    } else {
        None
    };

    let cap = if options.cap_at_t_up { stats.t_up } else { f64::INFINITY };
    let mut s = stats.s.clone();
    let mut r = stats.r.clone();
    s.sort_by(f64::total_cmp);
    r.sort_by(f64::total_cmp);

    let mut best = (0.0, if options.mixed { 0.0 } else { options.xi });
    let mut mirror_below = 0usize;
    let mut i = 0;
    while i < s.len() {
        let t = s[i];
        if t > cap {
            break;
        }
        // all s equal to t are rejected together
        let mut j = i + 1;
        while j < s.len() && s[j] == t {
            j += 1;
        }
        while mirror_below < r.len() && r[mirror_below] < t {
            mirror_below += 1;
        }
        let numerator = match fitted {
            Some(f) if t < 1.0 => expected_null_rejections(t, f).max(mirror_below as f64),
            Some(f) => f.pi_hat.iter().map(|p| p.get()).sum::<f64>().max(mirror_below as f64),
            None => options.xi + mirror_below as f64,
        };
        let estimate = numerator / j as f64;
        if estimate <= alpha {
            best = (t, estimate);
        }
        i = j;
    }
    Ok(best)
}

/// Reject every hypothesis with `s_i <= t_hat`.
pub fn reject(stats: &MirrorStatistics, t_hat: f64, xi: f64) -> RejectionResult {
    let rejected: Vec<bool> = stats.s.iter().map(|&s| t_hat > 0.0 && s <= t_hat).collect();
    let n_rejections = rejected.iter().filter(|&&b| b).count();
    RejectionResult {
        t_hat,
        fdp_hat_at_t: fdp_up_with_offset(t_hat, stats, xi),
        rejected,
        n_rejections,
    }
}

/// Threshold selection followed by rejection, reporting the estimate that
/// drove the choice (mirror or mixed).
pub fn select_and_reject(
    stats: &MirrorStatistics,
    alpha: f64,
    options: &ThresholdOptions,
    fitted: Option<&FittedHypotheses>,
) -> Result<RejectionResult> {
    let (t_hat, estimate) = sweep(stats, alpha, options, fitted)?;
    let mut result = reject(stats, t_hat, options.xi);
    if t_hat > 0.0 {
        result.fdp_hat_at_t = estimate;
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surrogate::{BetaParam, NullProb};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn worked_example() -> MirrorStatistics {
        MirrorStatistics::from_parts(
            vec![0.01, 0.02, 0.6, 0.7],
            vec![0.65, 0.8, 0.03, 0.9],
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn fdp_up_examples() {
        let st = worked_example();
        assert_eq!(fdp_up(0.005, &st), 1.0);
        assert_eq!(fdp_up(0.05, &st), 1.0);
        assert_eq!(fdp_up(1.0, &st), 5.0 / 4.0);
    }

    #[test]
    fn worked_example_against_grid() {
        let st = worked_example();
        let alpha = 0.5;
        let t_hat = select_threshold(&st, alpha, &ThresholdOptions::default(), None).unwrap();
        // grid oracle: largest admissible grid point, then the largest s below it
        let n = 100_000;
        let t_grid = (0..=n)
            .map(|j| j as f64 / n as f64)
            .filter(|&t| fdp_up(t, &st) <= alpha)
            .fold(0.0, f64::max);
        let expected = st.s.iter().copied().filter(|&s| s <= t_grid).fold(0.0, f64::max);
        assert_eq!(t_hat, expected);
        assert_eq!(t_hat, 0.02);

        let res = reject(&st, t_hat, 1.0);
        assert_eq!(res.rejected, vec![true, true, false, false]);
        assert_eq!(res.n_rejections, 2);
        assert!(res.fdp_hat_at_t <= alpha);
    }

    #[test]
    fn all_mirror_mass_rejects_nothing() {
        let p: Vec<PValue> = vec![PValue::new(0.99).unwrap(); 30];
        let fitted = FittedHypotheses {
            pi_hat: vec![NullProb::new(0.5).unwrap(); 30],
            k_hat: vec![BetaParam::new(0.5).unwrap(); 30],
        };
        let st = MirrorStatistics::compute(&p, &fitted).unwrap();
        let t = select_threshold(&st, 0.1, &ThresholdOptions::default(), None).unwrap();
        assert_eq!(t, 0.0);
        assert_eq!(reject(&st, t, 1.0).n_rejections, 0);
    }

    #[test]
    fn vacuous_alpha_takes_largest_candidate() {
        let st = MirrorStatistics::from_parts(
            vec![0.05, 0.1, 0.2, 0.3, 0.45],
            vec![0.9, 0.8, 0.7, 0.6, 0.5],
            0.4,
        )
        .unwrap();
        let t = select_threshold(&st, 1.0, &ThresholdOptions::default(), None).unwrap();
        assert_eq!(t, 0.3);
        let uncapped = ThresholdOptions { cap_at_t_up: false, ..ThresholdOptions::default() };
        assert_eq!(select_threshold(&st, 1.0, &uncapped, None).unwrap(), 0.45);
    }

    #[test]
    fn nested_rejections() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s: Vec<f64> = (0..100).map(|_| rng.random()).collect();
        let r: Vec<f64> = (0..100).map(|_| rng.random()).collect();
        let st = MirrorStatistics::from_parts(s, r, 1.0).unwrap();
        assert_eq!(reject(&st, 0.0, 1.0).n_rejections, 0);
        let a = reject(&st, 0.3, 1.0);
        let b = reject(&st, 0.6, 1.0);
        assert!(a.rejected.iter().zip(&b.rejected).all(|(x, y)| !x || *y));
    }

    #[test]
    fn half_p_value_counts_on_rejection_side_only() {
        let fitted = FittedHypotheses {
            pi_hat: vec![NullProb::new(0.8).unwrap()],
            k_hat: vec![BetaParam::new(0.3).unwrap()],
        };
        let st = MirrorStatistics::compute(&[PValue::new(0.5).unwrap()], &fitted).unwrap();
        assert_eq!(st.s[0], st.r[0]);
        let t = st.s[0];
        assert_eq!(fdp_up_with_offset(t, &st, 0.0), 0.0);
        assert_eq!(reject(&st, t, 1.0).n_rejections, 1);
    }

    #[test]
    fn mixed_estimate_is_max_of_both_terms() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let m = 200;
        let p: Vec<PValue> = (0..m).map(|_| PValue::new(rng.random()).unwrap()).collect();
        let fitted = FittedHypotheses {
            pi_hat: (0..m).map(|_| NullProb::new(rng.random_range(0.1..0.99)).unwrap()).collect(),
            k_hat: (0..m).map(|_| BetaParam::new(rng.random_range(0.05..0.95)).unwrap()).collect(),
        };
        let st = MirrorStatistics::compute(&p, &fitted).unwrap();
        for t in [0.01, 0.1, 0.3, 0.7] {
            let mut bh = 0.0;
            for i in 0..m {
                let (pi, k) = (fitted.pi_hat[i].get(), fitted.k_hat[i].get());
                let c = (t * (1.0 - k) * (1.0 - pi) / ((1.0 - t) * pi)).powf(1.0 / k).min(1.0);
                bh += pi * c;
            }
            let bc = (0..m).filter(|&i| st.r[i] < t).count() as f64;
            let got = mixed_false_rejection_estimate(t, &st, &fitted).unwrap();
            assert!((got - bh.max(bc)).abs() < 1e-9);
        }
        let tiny = mixed_false_rejection_estimate(1e-300, &st, &fitted).unwrap();
        assert!(tiny < 1e-10);
    }

    #[test]
    fn all_null_mixed_reduces_to_cutoff_sum() {
        let m = 50;
        let fitted = FittedHypotheses {
            pi_hat: vec![NullProb::new(1.0 - 1e-5).unwrap(); m],
            k_hat: vec![BetaParam::new(0.4).unwrap(); m],
        };
        let p: Vec<PValue> = (0..m).map(|i| PValue::new((i as f64 + 0.5) / m as f64).unwrap()).collect();
        let st = MirrorStatistics::compute(&p, &fitted).unwrap();
        let t = 0.999;
        let sum: f64 = (0..m)
            .map(|_| cutoff_unchecked(t, 1.0 - 1e-5, 0.4))
            .sum();
        let got = mixed_false_rejection_estimate(t, &st, &fitted).unwrap();
        assert!(got >= sum * (1.0 - 1e-5) - 1e-12);
    }

    #[test]
    fn mirror_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = 60;
        let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.001..0.999)).collect();
        let fitted = FittedHypotheses {
            pi_hat: (0..m).map(|_| NullProb::new(rng.random_range(0.1..0.99)).unwrap()).collect(),
            k_hat: (0..m).map(|_| BetaParam::new(rng.random_range(0.05..0.95)).unwrap()).collect(),
        };
        let p: Vec<PValue> = raw.iter().map(|&v| PValue::new(v).unwrap()).collect();
        let q: Vec<PValue> = p.iter().map(|v| v.mirror()).collect();
        let a = MirrorStatistics::compute(&p, &fitted).unwrap();
        let b = MirrorStatistics::compute(&q, &fitted).unwrap();
        for i in 0..m {
            assert!((a.s[i] - b.r[i]).abs() < 1e-12);
            assert!((a.r[i] - b.s[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn alpha_validation() {
        let st = worked_example();
        assert!(select_threshold(&st, 0.0, &ThresholdOptions::default(), None).is_err());
        let mixed = ThresholdOptions { mixed: true, ..ThresholdOptions::default() };
        assert!(select_threshold(&st, 0.1, &mixed, None).is_err());
    }
}
