//! Pre-flight checks on the p-value distribution.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{CamtError, Result};

pub const DEFAULT_GIF_THRESHOLD: f64 = 1.05;
pub const MIN_GIF_PVALUES: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct GifReport {
    pub gif: f64,
    pub n_pvalues_used: usize,
    pub warn: bool,
    pub threshold: f64,
}

/// Upper `p` quantile of the 1-df chi-square, `Q(1 - p) = Φ⁻¹(1 - p/2)²`.
pub fn chisq1_upper_quantile(p: f64) -> f64 {
    let z = -Normal::standard().inverse_cdf(p / 2.0);
    z * z
}

/// Genomic inflation factor restricted to p-values in `[0.5, 1]`.
///
/// Each retained p-value is mapped to its 1-df chi-square statistic and the
/// median is divided by the statistic at p = 0.75, the median of a
/// Uniform(0.5, 1) sample.
pub fn gif(pvals: &[f64]) -> Result<GifReport> {
    gif_with_threshold(pvals, DEFAULT_GIF_THRESHOLD)
}

pub fn gif_with_threshold(pvals: &[f64], threshold: f64) -> Result<GifReport> {
    if let Some(p) = pvals.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(CamtError::Domain(format!("p-value {p} outside [0, 1]")));
    }
    let mut q: Vec<f64> = pvals
        .iter()
        .filter(|&&p| p >= 0.5)
        .map(|&p| chisq1_upper_quantile(p))
        .collect();
    if q.len() < MIN_GIF_PVALUES {
        return Err(CamtError::InsufficientData(format!(
            "{} p-values in [0.5, 1]; at least {MIN_GIF_PVALUES} are needed",
            q.len()
        )));
    }
    q.sort_by(f64::total_cmp);
    let n = q.len();
    let median = if n % 2 == 1 { q[n / 2] } else { 0.5 * (q[n / 2 - 1] + q[n / 2]) };
    let gif = median / chisq1_upper_quantile(0.75);
    Ok(GifReport { gif, n_pvalues_used: n, warn: gif > threshold, threshold })
}

/// Counts of p-values in `n_bins` equal-width bins over [0, 1]; p = 1 falls
/// in the last bin.
pub fn null_histogram_summary(pvals: &[f64], n_bins: usize) -> Result<Vec<usize>> {
    if n_bins < 2 {
        return Err(CamtError::Config(format!("need at least 2 bins, got {n_bins}")));
    }
    let mut counts = vec![0usize; n_bins];
    for &p in pvals {
        if !(0.0..=1.0).contains(&p) {
            return Err(CamtError::Domain(format!("p-value {p} outside [0, 1]")));
        }
        let b = ((p * n_bins as f64) as usize).min(n_bins - 1);
        counts[b] += 1;
    }
    Ok(counts)
}
