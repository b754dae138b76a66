//! Natural cubic spline expansion of a scalar covariate.
//!
//! Knots sit at equally spaced empirical quantiles `j / (n + 1)`,
//! `j = 1..=n`, and the basis is the cardinal (Lagrange) one: column `j`
//! is the natural cubic spline interpolating the `j`-th unit vector at the
//! knots. Columns therefore sum to one, and `Σ_j f(ξ_j) N_j(x)` is the
//! natural spline interpolant of `f`. Every column is linear outside the
//! boundary knots.

use crate::error::{CamtError, Result};

/// Knot locations together with the expanded columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineBasis {
    pub knots: Vec<f64>,
    /// One vector per knot, each of the covariate's length.
    pub columns: Vec<Vec<f64>>,
}

/// Type-7 (linear interpolation) sample quantile of already sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    if lo + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
}

/// `n_knots` knots at the empirical `j / (n_knots + 1)` quantiles of `x`.
pub fn equiquantile_knots(x: &[f64], n_knots: usize) -> Result<Vec<f64>> {
    if n_knots < 2 {
        return Err(CamtError::Config(format!("need at least 2 knots, got {n_knots}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(CamtError::Domain("non-finite covariate value".into()));
    }
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() < n_knots {
        return Err(CamtError::DegenerateCovariate(format!(
            "{} distinct values cannot support {n_knots} knots",
            distinct.len()
        )));
    }
    let knots: Vec<f64> = (1..=n_knots)
        .map(|j| quantile_sorted(&sorted, j as f64 / (n_knots + 1) as f64))
        .collect();
    if knots.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CamtError::DegenerateCovariate(format!(
            "equiquantile knots collide: {knots:?}"
        )));
    }
    Ok(knots)
}

/// Natural cubic spline basis of `x` with `n_knots` equiquantile knots.
pub fn spline_basis(x: &[f64], n_knots: usize) -> Result<SplineBasis> {
    let knots = equiquantile_knots(x, n_knots)?;
    let columns = cardinal_columns(&knots, x);
    Ok(SplineBasis { knots, columns })
}

/// Evaluate the cardinal natural spline basis for fixed `knots` at `x`.
pub fn cardinal_columns(knots: &[f64], x: &[f64]) -> Vec<Vec<f64>> {
    (0..knots.len())
        .map(|j| {
            let mut y = vec![0.0; knots.len()];
            y[j] = 1.0;
            let spline = NaturalSpline::interpolate(knots, &y);
            x.iter().map(|&v| spline.eval(v)).collect()
        })
        .collect()
}

/// Natural cubic interpolant stored by knot values and second derivatives.
#[derive(Debug, Clone)]
pub struct NaturalSpline {
    knots: Vec<f64>,
    values: Vec<f64>,
    second: Vec<f64>,
}

impl NaturalSpline {
    /// `knots` must be strictly increasing with at least two entries.
    pub fn interpolate(knots: &[f64], values: &[f64]) -> Self {
        assert!(knots.len() >= 2 && knots.len() == values.len());
        let n = knots.len();
        let mut second = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm on the interior equations; end second derivatives are 0.
            let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
            let inner = n - 2;
            let mut diag = vec![0.0; inner];
            let mut upper = vec![0.0; inner];
            let mut rhs = vec![0.0; inner];
            for r in 0..inner {
                let i = r + 1;
                diag[r] = 2.0 * (h[i - 1] + h[i]);
                upper[r] = h[i];
                rhs[r] = 6.0
                    * ((values[i + 1] - values[i]) / h[i] - (values[i] - values[i - 1]) / h[i - 1]);
            }
            for r in 1..inner {
                let lower = h[r];
                let f = lower / diag[r - 1];
                diag[r] -= f * upper[r - 1];
                rhs[r] -= f * rhs[r - 1];
            }
            for r in (0..inner).rev() {
                let next = if r + 1 < inner { second[r + 2] } else { 0.0 };
                second[r + 1] = (rhs[r] - upper[r] * next) / diag[r];
            }
        }
        NaturalSpline { knots: knots.to_vec(), values: values.to_vec(), second }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let k = &self.knots;
        let y = &self.values;
        let m = &self.second;
        let n = k.len();
        if x <= k[0] {
            let h = k[1] - k[0];
            let slope = (y[1] - y[0]) / h - h * (2.0 * m[0] + m[1]) / 6.0;
            return y[0] + slope * (x - k[0]);
        }
        if x >= k[n - 1] {
            let h = k[n - 1] - k[n - 2];
            let slope = (y[n - 1] - y[n - 2]) / h + h * (m[n - 2] + 2.0 * m[n - 1]) / 6.0;
            return y[n - 1] + slope * (x - k[n - 1]);
        }
        let i = k.partition_point(|&v| v <= x).saturating_sub(1).min(n - 2);
        let h = k[i + 1] - k[i];
        let a = k[i + 1] - x;
        let b = x - k[i];
        m[i] * a.powi(3) / (6.0 * h)
            + m[i + 1] * b.powi(3) / (6.0 * h)
            + (y[i] - m[i] * h * h / 6.0) * a / h
            + (y[i + 1] - m[i + 1] * h * h / 6.0) * b / h
    }
}
