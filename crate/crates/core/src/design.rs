use crate::error::{CamtError, Result};
use crate::spline;

/// Row-major `m × (q + 1)` matrix whose first column is the intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
}

impl DesignMatrix {
    /// Intercept-only design for `m` hypotheses.
    pub fn intercept_only(m: usize) -> Self {
        DesignMatrix { nrows: m, ncols: 1, data: vec![1.0; m] }
    }

    /// Intercept followed by the given covariate columns, unchanged.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let m = columns.first().map(Vec::len).ok_or_else(|| {
            CamtError::Dimension("at least one covariate column is required".into())
        })?;
        if let Some(c) = columns.iter().position(|c| c.len() != m) {
            return Err(CamtError::Dimension(format!(
                "covariate column {c} has {} rows, expected {m}",
                columns[c].len()
            )));
        }
        let ncols = columns.len() + 1;
        if m < ncols {
            return Err(CamtError::Dimension(format!(
                "{m} rows cannot identify {ncols} coefficients"
            )));
        }
        let mut data = Vec::with_capacity(m * ncols);
        for i in 0..m {
            data.push(1.0);
            for (c, col) in columns.iter().enumerate() {
                let v = col[i];
                if !v.is_finite() {
                    return Err(CamtError::Domain(format!(
                        "non-finite covariate at row {i}, column {c}"
                    )));
                }
                data.push(v);
            }
        }
        Ok(DesignMatrix { nrows: m, ncols, data })
    }

    /// Intercept plus centred and scaled covariates. Constant columns are
    /// only centred.
    pub fn standardized(columns: &[Vec<f64>]) -> Result<Self> {
        let scaled: Vec<Vec<f64>> = columns.iter().map(|c| standardize(c)).collect();
        Self::from_columns(&scaled)
    }

    /// Intercept plus a natural spline expansion of each covariate.
    ///
    /// The cardinal basis sums to one, so its last column is dropped to
    /// keep the design full rank alongside the intercept.
    pub fn with_splines(columns: &[Vec<f64>], n_knots: usize) -> Result<Self> {
        let mut expanded = Vec::new();
        for col in columns {
            let basis = spline::spline_basis(col, n_knots)?;
            let keep = basis.columns.len() - 1;
            expanded.extend(basis.columns.into_iter().take(keep));
        }
        Self::from_columns(&expanded)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    /// Number of coefficients, intercept included.
    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    #[inline]
    pub(crate) fn dot(&self, i: usize, coef: &[f64]) -> f64 {
        self.row(i).iter().zip(coef).map(|(a, b)| a * b).sum()
    }
}

fn standardize(col: &[f64]) -> Vec<f64> {
    let n = col.len() as f64;
    let mean = col.iter().sum::<f64>() / n;
    let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let sd = var.sqrt();
    if sd > 0.0 && sd.is_finite() {
        col.iter().map(|v| (v - mean) / sd).collect()
    } else {
        col.iter().map(|v| v - mean).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_and_validation() {
        let d = DesignMatrix::from_columns(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        assert_eq!(d.ncols(), 3);
        assert_eq!(d.row(1), &[1.0, 2.0, 5.0]);
        assert!(DesignMatrix::from_columns(&[vec![1.0, 2.0], vec![1.0]]).is_err());
        assert!(DesignMatrix::from_columns(&[vec![1.0, f64::NAN, 3.0]]).is_err());
        assert!(DesignMatrix::from_columns(&[vec![1.0]]).is_err());
    }

    #[test]
    fn standardized_columns() {
        let d = DesignMatrix::standardized(&[vec![10.0, 20.0, 30.0], vec![5.0; 3]]).unwrap();
        let col: Vec<f64> = (0..3).map(|i| d.row(i)[1]).collect();
        assert!((col.iter().sum::<f64>()).abs() < 1e-12);
        assert!((col[2] - 1.0).abs() < 1e-12);
        assert!((0..3).all(|i| d.row(i)[2] == 0.0));
    }

    #[test]
    fn spline_design_drops_redundant_column() {
        let x: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let d = DesignMatrix::with_splines(&[x], 6).unwrap();
        assert_eq!(d.ncols(), 6);
    }
}
