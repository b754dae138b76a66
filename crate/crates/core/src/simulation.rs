//! Simulation designs S0–S5 plus the complete null, replicate sweeps and
//! FDP/TPR metrics.
//!
//! Every replicate draws from `ChaCha8Rng::seed_from_u64(seed)` with its
//! stream set to the replicate index, so replicates are independent and a
//! (config, seed) pair fixes every dataset bit for bit on any platform.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal, StudentT};
use rayon::prelude::*;

use crate::baselines::{self, OracleTruth, ZDensity, DEFAULT_STOREY_LAMBDA};
use crate::error::{CamtError, Result};
use crate::procedure::{fit_camt, CamtConfig};
use crate::surrogate::{logistic, PValue};
use crate::threshold::ThresholdOptions;

/// Name of the random generator, recorded in output metadata.
pub const GENERATOR: &str = "ChaCha8Rng(rand_chacha 0.9), seed_from_u64(seed), stream=replicate";

/// Intercepts giving sparse, medium and dense signal.
pub const GRID_ETA0: [f64; 3] = [3.5, 2.5, 1.5];
/// Covariate informativeness, from none to strong.
pub const GRID_KD: [f64; 3] = [0.0, 1.0, 1.5];
/// Effect-size modulation by the second covariate in S2.
pub const GRID_KF: [f64; 3] = [0.0, 0.25, 0.5];

/// Six signal strengths equally spaced on [2, 2.8].
pub fn grid_ks() -> [f64; 6] {
    std::array::from_fn(|i| 2.0 + 0.8 * i as f64 / 5.0)
}

/// Hypotheses per correlated block in S3.1/S3.2.
pub const BLOCK_SIZE: usize = 20;
const BLOCK_RHO: f64 = 0.5;
const AR_RHO: f64 = 0.75;
const NULL_SHIFT: f64 = 0.15;
/// Shape of the non-central gamma alternative in S1.
const GAMMA_SHAPE: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Setup {
    S0,
    S1,
    S2,
    S3_1,
    S3_2,
    S3_3,
    S3_4,
    S4,
    S5_1,
    S5_2,
    CompleteNull,
}

impl Setup {
    pub const ALL: [Setup; 11] = [
        Setup::S0,
        Setup::S1,
        Setup::S2,
        Setup::S3_1,
        Setup::S3_2,
        Setup::S3_3,
        Setup::S3_4,
        Setup::S4,
        Setup::S5_1,
        Setup::S5_2,
        Setup::CompleteNull,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Setup::S0 => "S0",
            Setup::S1 => "S1",
            Setup::S2 => "S2",
            Setup::S3_1 => "S3.1",
            Setup::S3_2 => "S3.2",
            Setup::S3_3 => "S3.3",
            Setup::S3_4 => "S3.4",
            Setup::S4 => "S4",
            Setup::S5_1 => "S5.1",
            Setup::S5_2 => "S5.2",
            Setup::CompleteNull => "null",
        }
    }

    /// Mean of the null z-score.
    fn null_mean(self) -> f64 {
        match self {
            Setup::S5_1 => -NULL_SHIFT,
            Setup::S5_2 => NULL_SHIFT,
            _ => 0.0,
        }
    }
}

impl fmt::Display for Setup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Setup {
    type Err = CamtError;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace('_', ".");
        Setup::ALL
            .into_iter()
            .find(|setup| setup.id().to_ascii_uppercase() == norm)
            .or(match norm.as_str() {
                "COMPLETE.NULL" | "COMPLETENULL" | "COMPLETE-NULL" => Some(Setup::CompleteNull),
                _ => None,
            })
            .ok_or_else(|| CamtError::Config(format!("unknown setup id '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub setup: Setup,
    pub m: usize,
    pub eta0: f64,
    pub k_d: f64,
    pub k_s: f64,
    /// Only read by S2.
    pub k_f: f64,
    pub alpha_grid: Vec<f64>,
    pub n_replicates: usize,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            setup: Setup::S0,
            m: 10_000,
            eta0: 2.5,
            k_d: 1.0,
            k_s: 2.4,
            k_f: 0.0,
            alpha_grid: vec![0.05],
            n_replicates: 100,
            seed: 1,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(CamtError::Config(format!("m={} is too small", self.m)));
        }
        if self.n_replicates == 0 {
            return Err(CamtError::Config("at least one replicate is required".into()));
        }
        if self.alpha_grid.is_empty() || self.alpha_grid.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return Err(CamtError::Config(format!(
                "alpha grid must be non-empty with entries in (0, 1): {:?}",
                self.alpha_grid
            )));
        }
        for (name, v) in [("eta0", self.eta0), ("k_d", self.k_d), ("k_s", self.k_s), ("k_f", self.k_f)]
        {
            if !v.is_finite() {
                return Err(CamtError::Config(format!("{name} must be finite")));
            }
        }
        if self.setup == Setup::S1 && self.k_s <= 2f64.sqrt() {
            return Err(CamtError::Config(format!(
                "S1 needs k_s > sqrt(2) to match mean k_s and unit variance, got {}",
                self.k_s
            )));
        }
        Ok(())
    }
}

/// Scale and non-centrality of a shape-2 non-central gamma with mean `k_s`
/// and variance 1.
///
/// With `X | N ~ Gamma(2 + N, θ)` and `N ~ Poisson(λ)`:
/// mean `θ(2 + λ) = k_s`, variance `θ²(2 + 2λ) = 1`. Eliminating λ gives
/// `2θ² - 2 k_s θ + 1 = 0`; the root `θ = (k_s - sqrt(k_s² - 2)) / 2` keeps
/// `λ = k_s / θ - 2` nonnegative.
pub fn noncentral_gamma_params(k_s: f64) -> (f64, f64) {
    let scale = (k_s - (k_s * k_s - 2.0).sqrt()) / 2.0;
    let noncentrality = k_s / scale - GAMMA_SHAPE;
    (scale, noncentrality)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedDataset {
    /// `1 - Φ(z_i)`.
    pub pvals: Vec<f64>,
    /// One column, or two in S2 (the second drives the effect size).
    pub covariates: Vec<Vec<f64>>,
    /// `true` for alternatives.
    pub truth: Vec<bool>,
    pub z: Vec<f64>,
    pub oracle: OracleTruth,
}

/// Upper-tail normal probability computed without cancellation.
pub fn upper_tail_p(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(z / std::f64::consts::SQRT_2)
}

fn replicate_rng(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

/// Dataset for replicate 0.
pub fn generate(config: &SimulationConfig) -> Result<SimulatedDataset> {
    generate_replicate(config, 0)
}

pub fn generate_replicate(config: &SimulationConfig, replicate: u64) -> Result<SimulatedDataset> {
    config.validate()?;
    let mut rng = replicate_rng(config.seed, replicate);
    let m = config.m;
    let setup = config.setup;

    let x: Vec<f64> = if setup == Setup::S4 {
        let t5 = StudentT::new(5.0).expect("valid degrees of freedom");
        (0..m).map(|_| t5.sample(&mut rng)).collect()
    } else {
        (0..m).map(|_| rng.sample(StandardNormal)).collect()
    };
    let x2: Option<Vec<f64>> =
        (setup == Setup::S2).then(|| (0..m).map(|_| rng.sample(StandardNormal)).collect());

    let pi0: Vec<f64> = if setup == Setup::CompleteNull {
        vec![1.0; m]
    } else {
        x.iter().map(|&xi| logistic(config.eta0 + config.k_d * xi)).collect()
    };
    let truth: Vec<bool> = pi0.iter().map(|&p| rng.random::<f64>() >= p).collect();

    let effect: Vec<f64> = match &x2 {
        Some(x2) => x2.iter().map(|&v| config.k_s * 2.0 * logistic(config.k_f * v)).collect(),
        None => vec![config.k_s; m],
    };

    let noise = correlated_noise(setup, m, &mut rng);
    let null_mean = setup.null_mean();
    let (scale, noncentrality) = noncentral_gamma_params(config.k_s);
    let mut z = Vec::with_capacity(m);
    for i in 0..m {
        let zi = if !truth[i] {
            null_mean + noise[i]
        } else if setup == Setup::S1 {
            let n = Poisson::new(noncentrality).expect("positive rate").sample(&mut rng);
            Gamma::new(GAMMA_SHAPE + n, scale).expect("valid gamma").sample(&mut rng)
        } else {
            effect[i] + noise[i]
        };
        z.push(zi);
    }
    let pvals: Vec<f64> = z.iter().map(|&v| upper_tail_p(v)).collect();

    let alt: Vec<ZDensity> = if setup == Setup::S1 {
        vec![ZDensity::NoncentralGamma { shape: GAMMA_SHAPE, scale, noncentrality }; m]
    } else {
        effect.iter().map(|&mean| ZDensity::Normal { mean }).collect()
    };
    let oracle = OracleTruth { pi0, alt, null: ZDensity::Normal { mean: null_mean } };

    let mut covariates = vec![x];
    covariates.extend(x2);
    Ok(SimulatedDataset { pvals, covariates, truth, z, oracle })
}

/// Unit-variance noise with the setup's correlation structure.
fn correlated_noise(setup: Setup, m: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let iid: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
    match setup {
        Setup::S3_1 | Setup::S3_2 => {
            let chol = block_cholesky(setup == Setup::S3_2);
            let mut out = vec![0.0; m];
            for start in (0..m).step_by(BLOCK_SIZE) {
                // leading principal blocks of L factor the leading covariance blocks
                let b = BLOCK_SIZE.min(m - start);
                for r in 0..b {
                    out[start + r] = (0..=r).map(|c| chol[(r, c)] * iid[start + c]).sum();
                }
            }
            out
        }
        Setup::S3_3 | Setup::S3_4 => {
            let rho = if setup == Setup::S3_3 { AR_RHO } else { -AR_RHO };
            let innov = (1.0 - rho * rho).sqrt();
            let mut out = Vec::with_capacity(m);
            let mut prev = iid[0];
            out.push(prev);
            for &e in &iid[1..] {
                prev = rho * prev + innov * e;
                out.push(prev);
            }
            out
        }
        _ => iid,
    }
}

/// Target correlation between positions `a` and `b` within one block.
pub fn block_correlation(signed: bool, a: usize, b: usize) -> f64 {
    if a == b {
        1.0
    } else if signed && (a < BLOCK_SIZE / 2) != (b < BLOCK_SIZE / 2) {
        -BLOCK_RHO
    } else {
        BLOCK_RHO
    }
}

fn block_cholesky(signed: bool) -> DMatrix<f64> {
    let cov = DMatrix::from_fn(BLOCK_SIZE, BLOCK_SIZE, |a, b| block_correlation(signed, a, b));
    cov.cholesky().expect("block covariance is positive definite").l()
}

/// False discovery proportion and true positive rate of one rejection set.
pub fn metrics(rejections: &[bool], truth: &[bool]) -> Result<(f64, f64)> {
    if rejections.len() != truth.len() {
        return Err(CamtError::Dimension(format!(
            "{} rejection flags for {} truth labels",
            rejections.len(),
            truth.len()
        )));
    }
    let mut false_rej = 0usize;
    let mut true_rej = 0usize;
    for (&r, &h) in rejections.iter().zip(truth) {
        if r {
            if h {
                true_rej += 1;
            } else {
                false_rej += 1;
            }
        }
    }
    let n_alt = truth.iter().filter(|&&h| h).count();
    let n_rej = false_rej + true_rej;
    Ok((false_rej as f64 / n_rej.max(1) as f64, true_rej as f64 / n_alt.max(1) as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Procedure {
    Camt,
    CamtMixed,
    Bh,
    Storey,
    OracleLfdr,
}

impl Procedure {
    pub const ALL: [Procedure; 5] =
        [Procedure::Camt, Procedure::CamtMixed, Procedure::Bh, Procedure::Storey, Procedure::OracleLfdr];

    pub fn name(self) -> &'static str {
        match self {
            Procedure::Camt => "camt",
            Procedure::CamtMixed => "camt_mixed",
            Procedure::Bh => "bh",
            Procedure::Storey => "storey",
            Procedure::OracleLfdr => "oracle",
        }
    }
}

impl fmt::Display for Procedure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Procedure {
    type Err = CamtError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        Procedure::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .or(match s.as_str() {
                "st" => Some(Procedure::Storey),
                "lfdr" | "oracle_lfdr" => Some(Procedure::OracleLfdr),
                _ => None,
            })
            .ok_or_else(|| CamtError::Config(format!("unknown procedure '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    /// Settings for the CAMT procedures; `alpha` and `threshold.mixed` are
    /// overridden per row.
    pub camt: CamtConfig,
    pub storey_lambda: f64,
    /// When false every `runtime_ms` is written as 0 so reports are
    /// byte-reproducible.
    pub record_timing: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            camt: CamtConfig::default(),
            storey_lambda: DEFAULT_STOREY_LAMBDA,
            record_timing: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub setup: Setup,
    pub procedure: Procedure,
    pub alpha: f64,
    pub replicate: usize,
    pub fdp: f64,
    pub tpr: f64,
    pub n_rejections: usize,
    pub runtime_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub procedure: Procedure,
    pub alpha: f64,
    pub n: usize,
    pub mean_fdp: f64,
    /// Standard error of the mean FDP across replicates.
    pub se_fdp: f64,
    /// 95% confidence half-width, `1.96 · se`.
    pub ci_fdp: f64,
    pub mean_tpr: f64,
    pub se_tpr: f64,
    pub ci_tpr: f64,
    pub mean_rejections: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub config: SimulationConfig,
    pub rows: Vec<MetricRow>,
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

impl MetricsReport {
    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut keys: Vec<(Procedure, f64)> = Vec::new();
        for r in &self.rows {
            if !keys.iter().any(|&(p, a)| p == r.procedure && a == r.alpha) {
                keys.push((r.procedure, r.alpha));
            }
        }
        keys.into_iter()
            .map(|(procedure, alpha)| {
                let sel: Vec<&MetricRow> = self
                    .rows
                    .iter()
                    .filter(|r| r.procedure == procedure && r.alpha == alpha)
                    .collect();
                let fdp: Vec<f64> = sel.iter().map(|r| r.fdp).collect();
                let tpr: Vec<f64> = sel.iter().map(|r| r.tpr).collect();
                let (mean_fdp, se_fdp) = mean_se(&fdp);
                let (mean_tpr, se_tpr) = mean_se(&tpr);
                SummaryRow {
                    procedure,
                    alpha,
                    n: sel.len(),
                    mean_fdp,
                    se_fdp,
                    ci_fdp: 1.96 * se_fdp,
                    mean_tpr,
                    se_tpr,
                    ci_tpr: 1.96 * se_tpr,
                    mean_rejections: sel.iter().map(|r| r.n_rejections as f64).sum::<f64>()
                        / sel.len() as f64,
                }
            })
            .collect()
    }

    pub fn summary_for(&self, procedure: Procedure, alpha: f64) -> Option<SummaryRow> {
        self.summary().into_iter().find(|s| s.procedure == procedure && s.alpha == alpha)
    }

    /// Tidy CSV preceded by `#` metadata lines.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let c = &self.config;
        writeln!(out, "# camt simulate")?;
        writeln!(out, "# version={}", env!("CARGO_PKG_VERSION"))?;
        writeln!(out, "# generator={GENERATOR}")?;
        writeln!(out, "# setup={}", c.setup)?;
        writeln!(out, "# m={}", c.m)?;
        writeln!(out, "# eta0={}", c.eta0)?;
        writeln!(out, "# kd={}", c.k_d)?;
        writeln!(out, "# ks={}", c.k_s)?;
        writeln!(out, "# kf={}", c.k_f)?;
        writeln!(out, "# reps={}", c.n_replicates)?;
        writeln!(out, "# seed={}", c.seed)?;
        writeln!(out, "setup,procedure,alpha,replicate,fdp,tpr,n_rejections,runtime_ms")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.setup, r.procedure, r.alpha, r.replicate, r.fdp, r.tpr, r.n_rejections, r.runtime_ms
            )?;
        }
        Ok(())
    }
}

/// Run every procedure on every replicate and α. Replicates run on the
/// rayon pool; rows are ordered by replicate, then procedure, then α.
pub fn run_sweep(
    config: &SimulationConfig,
    procedures: &[Procedure],
    options: &SweepOptions,
) -> Result<MetricsReport> {
    config.validate()?;
    if procedures.is_empty() {
        return Err(CamtError::Config("no procedures requested".into()));
    }
    let per_rep: Vec<Result<Vec<MetricRow>>> = (0..config.n_replicates)
        .into_par_iter()
        .map(|rep| run_replicate(config, procedures, options, rep))
        .collect();
    let mut rows = Vec::new();
    for r in per_rep {
        rows.extend(r?);
    }
    Ok(MetricsReport { config: config.clone(), rows })
}

fn elapsed_ms(start: Instant, record: bool) -> f64 {
    if record {
        start.elapsed().as_secs_f64() * 1e3
    } else {
        0.0
    }
}

fn run_replicate(
    config: &SimulationConfig,
    procedures: &[Procedure],
    options: &SweepOptions,
    rep: usize,
) -> Result<Vec<MetricRow>> {
    let data = generate_replicate(config, rep as u64)?;
    let timing = options.record_timing;
    let mut rows = Vec::new();
    let mut push = |procedure, alpha, mask: &[bool], runtime_ms| -> Result<()> {
        let (fdp, tpr) = metrics(mask, &data.truth)?;
        rows.push(MetricRow {
            setup: config.setup,
            procedure,
            alpha,
            replicate: rep,
            fdp,
            tpr,
            n_rejections: mask.iter().filter(|&&b| b).count(),
            runtime_ms,
        });
        Ok(())
    };

    let mut camt_fit = None;
    for &procedure in procedures {
        match procedure {
            Procedure::Camt | Procedure::CamtMixed => {
                let start = Instant::now();
                if camt_fit.is_none() {
                    let pv: Vec<PValue> =
                        data.pvals.iter().map(|&p| PValue::new(p)).collect::<Result<_>>()?;
                    camt_fit = Some((fit_camt(&pv, &data.covariates, &options.camt)?, elapsed_ms(start, timing)));
                }
                let (fit, fit_ms) = camt_fit.as_ref().expect("fitted above");
                let opts = ThresholdOptions {
                    mixed: procedure == Procedure::CamtMixed,
                    ..options.camt.threshold.clone()
                };
                for &alpha in &config.alpha_grid {
                    let start = Instant::now();
                    let res = fit.reject(alpha, &opts)?;
                    push(procedure, alpha, &res.rejected, fit_ms + elapsed_ms(start, timing))?;
                }
            }
            Procedure::Bh => {
                for &alpha in &config.alpha_grid {
                    let start = Instant::now();
                    let mask = baselines::bh(&data.pvals, alpha)?;
                    push(procedure, alpha, &mask, elapsed_ms(start, timing))?;
                }
            }
            Procedure::Storey => {
                for &alpha in &config.alpha_grid {
                    let start = Instant::now();
                    let mask = baselines::storey(&data.pvals, alpha, options.storey_lambda)?;
                    push(procedure, alpha, &mask, elapsed_ms(start, timing))?;
                }
            }
            Procedure::OracleLfdr => {
                let start = Instant::now();
                let lfdr = data.oracle.lfdr(&data.pvals)?;
                let lfdr_ms = elapsed_ms(start, timing);
                for &alpha in &config.alpha_grid {
                    let start = Instant::now();
                    let mask = baselines::lfdr_step_up(&lfdr, alpha);
                    push(procedure, alpha, &mask, lfdr_ms + elapsed_ms(start, timing))?;
                }
            }
        }
    }
    Ok(rows)
}
