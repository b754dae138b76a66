//! Reference procedures: Benjamini–Hochberg, Storey's adaptive BH and the
//! oracle local-FDR rule used as a power ceiling in simulations.

use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{CamtError, Result};

/// Default λ for Storey's null-proportion estimate.
pub const DEFAULT_STOREY_LAMBDA: f64 = 0.5;

/// Step-up BH: reject the `i` smallest p-values for the largest `i` with
/// `p_(i) <= i α / m`.
pub fn bh(pvals: &[f64], alpha: f64) -> Result<Vec<bool>> {
    check_pvals(pvals)?;
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(CamtError::Domain(format!("alpha={alpha} outside (0, 1]")));
    }
    Ok(step_up(pvals, alpha))
}

fn step_up(pvals: &[f64], level: f64) -> Vec<bool> {
    let m = pvals.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvals[a].total_cmp(&pvals[b]));
    let mut n_reject = 0;
    for (rank, &i) in order.iter().enumerate() {
        if pvals[i] <= (rank + 1) as f64 * level / m as f64 {
            n_reject = rank + 1;
        }
    }
    let mut mask = vec![false; m];
    for &i in &order[..n_reject] {
        mask[i] = true;
    }
    mask
}

/// `π̂0 = min(1, #{p_i > λ} / ((1 - λ) m))`.
pub fn storey_pi0(pvals: &[f64], lambda: f64) -> Result<f64> {
    check_pvals(pvals)?;
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(CamtError::Domain(format!("lambda={lambda} outside (0, 1)")));
    }
    if pvals.is_empty() {
        return Ok(1.0);
    }
    let above = pvals.iter().filter(|&&p| p > lambda).count() as f64;
    Ok((above / ((1.0 - lambda) * pvals.len() as f64)).min(1.0))
}

/// BH at level `α / π̂0`.
pub fn storey(pvals: &[f64], alpha: f64, lambda: f64) -> Result<Vec<bool>> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(CamtError::Domain(format!("alpha={alpha} outside (0, 1]")));
    }
    let pi0 = storey_pi0(pvals, lambda)?;
    if pi0 == 0.0 {
        return Ok(vec![true; pvals.len()]);
    }
    Ok(step_up(pvals, alpha / pi0))
}

/// Distribution of a z-score `z` with p-value `1 - Φ(z)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ZDensity {
    /// `N(mean, 1)`.
    Normal { mean: f64 },
    /// Poisson(λ) mixture of Gamma(shape + N, scale), supported on z > 0.
    NoncentralGamma { shape: f64, scale: f64, noncentrality: f64 },
}

impl ZDensity {
    pub fn ln_pdf(&self, z: f64) -> f64 {
        match *self {
            ZDensity::Normal { mean } => {
                -0.5 * (z - mean).powi(2) - 0.5 * (2.0 * std::f64::consts::PI).ln()
            }
            ZDensity::NoncentralGamma { shape, scale, noncentrality } => {
                noncentral_gamma_ln_pdf(z, shape, scale, noncentrality)
            }
        }
    }
}

fn noncentral_gamma_ln_pdf(z: f64, shape: f64, scale: f64, lambda: f64) -> f64 {
    if z <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let upper = (lambda + 12.0 * lambda.sqrt() + 30.0).ceil() as usize;
    let mut terms = Vec::with_capacity(upper + 1);
    for n in 0..=upper {
        let nf = n as f64;
        let a = shape + nf;
        let ln_pois = -lambda + nf * lambda.max(f64::MIN_POSITIVE).ln() - ln_gamma(nf + 1.0);
        let ln_gam = (a - 1.0) * z.ln() - z / scale - a * scale.ln() - ln_gamma(a);
        terms.push(ln_pois + ln_gam);
    }
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

/// What the oracle knows about each simulated hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleTruth {
    /// True prior null probabilities, each in (0, 1].
    pub pi0: Vec<f64>,
    /// Per-hypothesis alternative z-score density.
    pub alt: Vec<ZDensity>,
    /// Null z-score density shared by all hypotheses.
    pub null: ZDensity,
}

impl OracleTruth {
    /// `LFDR_i = π0 f0 / (π0 f0 + (1 - π0) f1)` evaluated on the z scale,
    /// where the common Jacobian cancels.
    pub fn lfdr(&self, pvals: &[f64]) -> Result<Vec<f64>> {
        check_pvals(pvals)?;
        if self.pi0.len() != pvals.len() || self.alt.len() != pvals.len() {
            return Err(CamtError::Dimension(format!(
                "oracle truth covers {} hypotheses, got {} p-values",
                self.pi0.len(),
                pvals.len()
            )));
        }
        let std = Normal::standard();
        Ok(pvals
            .iter()
            .zip(&self.pi0)
            .zip(&self.alt)
            .map(|((&p, &pi0), alt)| {
                if pi0 >= 1.0 {
                    return 1.0;
                }
                let z = -std.inverse_cdf(p.clamp(1e-300, 1.0 - 1e-16));
                let log_ratio = alt.ln_pdf(z) - self.null.ln_pdf(z);
                // π0 / (π0 + (1 - π0) e^{log_ratio})
                let odds = ((1.0 - pi0) / pi0).ln() + log_ratio;
                if odds > 700.0 {
                    0.0
                } else {
                    1.0 / (1.0 + odds.exp())
                }
            })
            .collect())
    }
}

/// Sort LFDR ascending and reject the longest prefix whose running mean is
/// at most α.
pub fn oracle_lfdr(pvals: &[f64], truth: Option<&OracleTruth>, alpha: f64) -> Result<Vec<bool>> {
    let truth = truth.ok_or(CamtError::MissingTruth)?;
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(CamtError::Domain(format!("alpha={alpha} outside (0, 1]")));
    }
    let lfdr = truth.lfdr(pvals)?;
    Ok(lfdr_step_up(&lfdr, alpha))
}

pub(crate) fn lfdr_step_up(lfdr: &[f64], alpha: f64) -> Vec<bool> {
    let mut order: Vec<usize> = (0..lfdr.len()).collect();
    order.sort_by(|&a, &b| lfdr[a].total_cmp(&lfdr[b]));
    let mut running = 0.0;
    let mut n_reject = 0;
    for (rank, &i) in order.iter().enumerate() {
        running += lfdr[i];
        if running / (rank + 1) as f64 <= alpha {
            n_reject = rank + 1;
        }
    }
    let mut mask = vec![false; lfdr.len()];
    for &i in &order[..n_reject] {
        mask[i] = true;
    }
    mask
}

/// Density of `1 - Φ(Z)` at `p` for `Z` with the given z density.
pub fn p_density(density: &ZDensity, p: f64) -> f64 {
    let std = Normal::standard();
    let z = -std.inverse_cdf(p);
    (density.ln_pdf(z)).exp() / std.pdf(z)
}

fn check_pvals(pvals: &[f64]) -> Result<()> {
    if let Some(i) = pvals.iter().position(|p| !(0.0..=1.0).contains(p)) {
        return Err(CamtError::Domain(format!("p-value {} at index {i} outside [0, 1]", pvals[i])));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bh_hand_example() {
        let mask = bh(&[0.001, 0.8, 0.9, 0.95], 0.05).unwrap();
        assert_eq!(mask, vec![true, false, false, false]);
        assert!(bh(&[1.0; 10], 0.05).unwrap().iter().all(|&b| !b));
    }

    #[test]
    fn bh_alpha_one_matches_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let p: Vec<f64> = (0..30).map(|_| rng.random::<f64>().powi(2)).collect();
            let mask = bh(&p, 1.0).unwrap();
            let mut sorted = p.clone();
            sorted.sort_by(f64::total_cmp);
            let m = p.len() as f64;
            let largest = (1..=p.len()).filter(|&i| sorted[i - 1] <= i as f64 / m).max().unwrap_or(0);
            assert_eq!(mask.iter().filter(|&&b| b).count(), largest);
            if largest > 0 {
                let cut = sorted[largest - 1];
                for (i, &pi) in p.iter().enumerate() {
                    assert_eq!(mask[i], pi <= cut);
                }
            }
        }
    }

    #[test]
    fn storey_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let null: Vec<f64> = (0..20_000).map(|_| rng.random()).collect();
        let pi0 = storey_pi0(&null, 0.5).unwrap();
        assert!((pi0 - 1.0).abs() < 0.03, "{pi0}");
        assert!(pi0 <= 1.0);

        let mut half: Vec<f64> = (0..1000).map(|i| 1e-6 * (i + 1) as f64).collect();
        half.extend((0..1000).map(|i| (i as f64 + 0.5) / 1000.0));
        let pi0 = storey_pi0(&half, 0.5).unwrap();
        // 500 of the 2000 p-values exceed 0.5
        assert_eq!(pi0, 500.0 / (0.5 * 2000.0));
        let relaxed = storey(&half, 0.05, 0.5).unwrap();
        let strict = step_up(&half, 0.1);
        assert_eq!(relaxed, strict);
        assert!(storey_pi0(&[0.9; 5], 0.1).unwrap() <= 1.0);
    }

    #[test]
    fn bh_subset_of_storey_and_order_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..30 {
            let mut p: Vec<f64> = (0..200)
                .map(|i| if i < 40 { rng.random::<f64>() * 1e-3 } else { rng.random() })
                .collect();
            let b = bh(&p, 0.1).unwrap();
            let s = storey(&p, 0.1, 0.5).unwrap();
            assert!(b.iter().zip(&s).all(|(x, y)| !x || *y));

            let mut perm: Vec<usize> = (0..p.len()).collect();
            perm.shuffle(&mut rng);
            let permuted: Vec<f64> = perm.iter().map(|&i| p[i]).collect();
            let bp = bh(&permuted, 0.1).unwrap();
            let sp = storey(&permuted, 0.1, 0.5).unwrap();
            for (j, &i) in perm.iter().enumerate() {
                assert_eq!(bp[j], b[i]);
                assert_eq!(sp[j], s[i]);
            }
            p.clear();
        }
    }

    fn normal_truth(pi0: Vec<f64>, mean: f64) -> OracleTruth {
        let n = pi0.len();
        OracleTruth { pi0, alt: vec![ZDensity::Normal { mean }; n], null: ZDensity::Normal { mean: 0.0 } }
    }

    #[test]
    fn oracle_degenerate_cases() {
        let p = [0.001, 0.2, 0.5, 0.9];
        assert!(matches!(oracle_lfdr(&p, None, 0.1), Err(CamtError::MissingTruth)));
        let all_null = normal_truth(vec![1.0; 4], 2.0);
        assert!(oracle_lfdr(&p, Some(&all_null), 0.1).unwrap().iter().all(|&b| !b));

        let flat = normal_truth(vec![0.3, 0.6, 0.8, 0.95], 0.0);
        let lfdr = flat.lfdr(&p).unwrap();
        for (l, want) in lfdr.iter().zip([0.3, 0.6, 0.8, 0.95]) {
            assert!((l - want).abs() < 1e-12);
        }
    }

    #[test]
    fn oracle_matches_prefix_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let p: Vec<f64> = (0..6).map(|_| rng.random::<f64>().powi(3)).collect();
            let pi0: Vec<f64> = (0..6).map(|_| rng.random_range(0.5..0.99)).collect();
            let truth = normal_truth(pi0, 2.5);
            let alpha = rng.random_range(0.02..0.5);
            let mask = oracle_lfdr(&p, Some(&truth), alpha).unwrap();

            // enumerate every subset; the rule picks the largest subset formed by the
            // smallest LFDRs whose mean is within alpha
            let lfdr = truth.lfdr(&p).unwrap();
            let mut best = 0usize;
            for bits in 0u32..64 {
                let idx: Vec<usize> = (0..6).filter(|i| bits >> i & 1 == 1).collect();
                if idx.is_empty() {
                    continue;
                }
                let is_prefix = idx.iter().all(|&i| {
                    (0..6).filter(|j| !idx.contains(j)).all(|j| lfdr[i] <= lfdr[j])
                });
                let mean = idx.iter().map(|&i| lfdr[i]).sum::<f64>() / idx.len() as f64;
                if is_prefix && mean <= alpha {
                    best = best.max(idx.len());
                }
            }
            assert_eq!(mask.iter().filter(|&&b| b).count(), best);
        }
    }

    #[test]
    fn noncentral_gamma_density_integrates() {
        let d = ZDensity::NoncentralGamma { shape: 2.0, scale: 0.23, noncentrality: 8.4 };
        let h = 1e-3;
        let total: f64 = (1..20_000).map(|i| d.ln_pdf(i as f64 * h).exp() * h).sum();
        assert!((total - 1.0).abs() < 1e-6, "{total}");
    }

    #[test]
    fn p_density_of_null_is_uniform() {
        let d = ZDensity::Normal { mean: 0.0 };
        for p in [0.01, 0.3, 0.77] {
            assert!((p_density(&d, p) - 1.0).abs() < 1e-12);
        }
    }
}
