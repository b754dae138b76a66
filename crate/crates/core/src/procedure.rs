//! End-to-end covariate adaptive procedure: design construction, EM fit,
//! mirror statistics and threshold selection.

use crate::design::DesignMatrix;
use crate::em::{self, EmConfig, ModelFit};
use crate::error::{CamtError, Result};
use crate::surrogate::PValue;
use crate::threshold::{select_and_reject, MirrorStatistics, RejectionResult, ThresholdOptions};

/// Upper bound on spline knots accepted by the front ends.
pub const MAX_SPLINE_KNOTS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct CamtConfig {
    pub alpha: f64,
    pub em: EmConfig,
    pub threshold: ThresholdOptions,
    /// 0 keeps the covariates as given; otherwise each one is expanded
    /// into a natural spline with this many equiquantile knots.
    pub spline_knots: usize,
    /// Centre and scale raw covariates before fitting.
    pub standardize: bool,
}

impl Default for CamtConfig {
    fn default() -> Self {
        CamtConfig {
            alpha: 0.05,
            em: EmConfig::default(),
            threshold: ThresholdOptions::default(),
            spline_knots: 0,
            standardize: true,
        }
    }
}

impl CamtConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(CamtError::Config(format!("alpha={} outside (0, 1)", self.alpha)));
        }
        if self.spline_knots == 1 || self.spline_knots > MAX_SPLINE_KNOTS {
            return Err(CamtError::Config(format!(
                "spline knots must be 0 or within [2, {MAX_SPLINE_KNOTS}], got {}",
                self.spline_knots
            )));
        }
        Ok(())
    }
}

/// Build the design used by the procedure from raw covariate columns.
pub fn build_design(m: usize, covariates: &[Vec<f64>], config: &CamtConfig) -> Result<DesignMatrix> {
    if covariates.is_empty() {
        return Ok(DesignMatrix::intercept_only(m));
    }
    if covariates.iter().any(|c| c.len() != m) {
        return Err(CamtError::Dimension(format!("covariate columns must have {m} rows")));
    }
    if config.spline_knots > 0 {
        DesignMatrix::with_splines(covariates, config.spline_knots)
    } else if config.standardize {
        DesignMatrix::standardized(covariates)
    } else {
        DesignMatrix::from_columns(covariates)
    }
}

/// A fitted model with its mirror statistics; thresholds at any α can be
/// drawn from it without refitting.
#[derive(Debug, Clone, PartialEq)]
pub struct CamtFit {
    pub model: ModelFit,
    pub stats: MirrorStatistics,
}

impl CamtFit {
    pub fn reject(&self, alpha: f64, options: &ThresholdOptions) -> Result<RejectionResult> {
        select_and_reject(&self.stats, alpha, options, Some(&self.model.fitted))
    }
}

pub fn fit_camt(pvals: &[PValue], covariates: &[Vec<f64>], config: &CamtConfig) -> Result<CamtFit> {
    config.validate()?;
    let design = build_design(pvals.len(), covariates, config)?;
    let model = em::fit(&design, pvals, &config.em)?;
    let stats = MirrorStatistics::compute(pvals, &model.fitted)?;
    Ok(CamtFit { model, stats })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CamtResult {
    pub fit: CamtFit,
    pub rejection: RejectionResult,
}

/// Fit and reject at `config.alpha`.
pub fn run(pvals: &[PValue], covariates: &[Vec<f64>], config: &CamtConfig) -> Result<CamtResult> {
    let fit = fit_camt(pvals, covariates, config)?;
    let rejection = fit.reject(config.alpha, &config.threshold)?;
    Ok(CamtResult { fit, rejection })
}
