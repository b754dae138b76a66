//! Command-line front end: `camt fit`, `camt simulate` and `camt diagnose`.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::diagnostics::{gif, null_histogram_summary};
use crate::error::{CamtError, Result};
use crate::procedure::{fit_camt, CamtConfig};
use crate::simulation::{run_sweep, Procedure, Setup, SimulationConfig, SweepOptions};
use crate::surrogate::psi;
use crate::table::{parse_table, FitOutput};
use crate::threshold::ThresholdOptions;

/// Environment variable overriding the worker count.
pub const THREADS_ENV: &str = "CAMT_THREADS";
/// Smallest table `camt fit` accepts.
pub const MIN_FIT_HYPOTHESES: usize = 200;
/// Below this many hypotheses `camt fit` warns.
pub const SMALL_FIT_HYPOTHESES: usize = 1000;

#[derive(Debug, Parser)]
#[command(name = "camt", version, about = "Covariate adaptive multiple testing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the model to a p-value table and write per-hypothesis results.
    Fit(FitArgs),
    /// Run a simulation sweep and write per-replicate metrics.
    Simulate(SimulateArgs),
    /// Report the genomic inflation factor and a p-value histogram.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Comma- or tab-delimited table with a `pvalue` column.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Expand each covariate into a natural spline with N equiquantile knots.
    #[arg(long, default_value_t = 0)]
    pub spline_knots: usize,
    /// Use the mixed false-rejection estimate.
    #[arg(long)]
    pub mixed: bool,
    /// Search thresholds over [0, 1] instead of stopping at t_up.
    #[arg(long)]
    pub no_tup_cap: bool,
    /// Recorded in the output header.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// S0, S1, S2, S3.1-S3.4, S4, S5.1, S5.2 or null.
    #[arg(long)]
    pub setup: String,
    #[arg(long, default_value_t = 10_000)]
    pub m: usize,
    #[arg(long, default_value_t = 2.5, allow_negative_numbers = true)]
    pub eta0: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub kd: f64,
    #[arg(long, default_value_t = 2.4, allow_negative_numbers = true)]
    pub ks: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub kf: f64,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Comma-separated target levels.
    #[arg(long, value_delimiter = ',', default_value = "0.05")]
    pub alpha_grid: Vec<f64>,
    /// Comma-separated subset of camt, camt_mixed, bh, storey, oracle.
    #[arg(long, value_delimiter = ',', default_value = "camt,bh,storey,oracle")]
    pub procedures: Vec<String>,
    /// Worker threads; defaults to $CAMT_THREADS, then the core count.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Write 0 for every runtime so identical seeds give identical files.
    #[arg(long)]
    pub no_timing: bool,
    #[arg(long)]
    pub spline_knots: Option<usize>,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| CamtError::Config(format!("{THREADS_ENV}='{v}' is not a positive integer"))),
        Err(_) => Ok(None),
    }
}

fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        b = b.num_threads(n);
    }
    b.build().map_err(|e| CamtError::Numerical(format!("thread pool: {e}")))
}

pub fn cmd_fit(args: &FitArgs, log: &mut dyn Write) -> Result<()> {
    let config = CamtConfig {
        alpha: args.alpha,
        spline_knots: args.spline_knots,
        threshold: ThresholdOptions {
            mixed: args.mixed,
            cap_at_t_up: !args.no_tup_cap,
            ..ThresholdOptions::default()
        },
        ..CamtConfig::default()
    };
    config.validate()?;
    let table = parse_table(&args.input)?;
    let m = table.len();
    if m < MIN_FIT_HYPOTHESES {
        return Err(CamtError::InsufficientData(format!(
            "{m} hypotheses; at least {MIN_FIT_HYPOTHESES} are required"
        )));
    }
    if m < SMALL_FIT_HYPOTHESES {
        writeln!(log, "warning: only {m} hypotheses; estimates may be unstable below {SMALL_FIT_HYPOTHESES}")?;
    }
    if table.clamp_count > 0 {
        writeln!(log, "warning: {} p-values clamped away from 0 or 1", table.clamp_count)?;
    }

    let (fit, rejection) = pool(Some(1))?.install(|| -> Result<_> {
        let fit = fit_camt(&table.pvalues, &table.covariates, &config)?;
        let rejection = fit.reject(config.alpha, &config.threshold)?;
        Ok((fit, rejection))
    })?;
    let trace = &fit.model.trace;
    for w in &fit.model.warnings {
        writeln!(log, "warning: {w}")?;
    }
    if !trace.converged {
        let last = trace.loglik.last().copied().unwrap_or(f64::NAN);
        writeln!(
            log,
            "warning: EM stopped after {} iterations without converging (loglik {last})",
            trace.iterations
        )?;
    }
    let gif_report = gif(&table.raw_pvalues).ok();
    if gif_report.as_ref().is_some_and(|g| g.warn) {
        writeln!(
            log,
            "warning: genomic inflation factor {} exceeds {}; the null distribution may be misspecified",
            gif_report.as_ref().unwrap().gif,
            gif_report.as_ref().unwrap().threshold
        )?;
    }

    let fitted = &fit.model.fitted;
    let metadata: Vec<(String, String)> = vec![
        ("camt_version", env!("CARGO_PKG_VERSION").to_owned()),
        ("alpha", config.alpha.to_string()),
        ("t_hat", rejection.t_hat.to_string()),
        ("n_rejections", rejection.n_rejections.to_string()),
        ("fdp_hat", rejection.fdp_hat_at_t.to_string()),
        ("em_iterations", trace.iterations.to_string()),
        ("em_converged", trace.converged.to_string()),
        ("loglik", trace.loglik.last().copied().unwrap_or(f64::NAN).to_string()),
        ("gif", gif_report.as_ref().map_or("NA".to_owned(), |g| g.gif.to_string())),
        ("gif_warn", gif_report.as_ref().map_or("NA".to_owned(), |g| g.warn.to_string())),
        ("seed", args.seed.to_string()),
        ("spline_knots", config.spline_knots.to_string()),
        ("mixed", args.mixed.to_string()),
        ("t_up_cap", (!args.no_tup_cap).to_string()),
        ("clamped_pvalues", table.clamp_count.to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_owned(), v))
    .collect();

    let out = FitOutput {
        metadata,
        covariate_names: table.covariate_names.clone(),
        pvalue: table.raw_pvalues.clone(),
        covariates: table.covariates.clone(),
        pi0_hat: fitted.pi_hat.iter().map(|p| p.get()).collect(),
        k_hat: fitted.k_hat.iter().map(|k| k.get()).collect(),
        psi_stat: (0..m).map(|i| psi(table.pvalues[i], fitted.pi_hat[i], fitted.k_hat[i])).collect(),
        rejected: rejection.rejected,
    };
    let mut w = create(&args.output)?;
    out.write(&mut w)?;
    w.flush()?;
    writeln!(log, "{} of {m} hypotheses rejected at alpha={}", rejection.n_rejections, config.alpha)?;
    Ok(())
}

pub fn cmd_simulate(args: &SimulateArgs, log: &mut dyn Write) -> Result<()> {
    let setup: Setup = args.setup.parse()?;
    let config = SimulationConfig {
        setup,
        m: args.m,
        eta0: args.eta0,
        k_d: args.kd,
        k_s: args.ks,
        k_f: args.kf,
        alpha_grid: args.alpha_grid.clone(),
        n_replicates: args.reps,
        seed: args.seed,
    };
    config.validate()?;
    let procedures: Vec<Procedure> =
        args.procedures.iter().map(|s| s.parse()).collect::<Result<_>>()?;
    let mut options = SweepOptions { record_timing: !args.no_timing, ..SweepOptions::default() };
    if let Some(k) = args.spline_knots {
        options.camt.spline_knots = k;
    }
    options.camt.validate()?;
    let threads = match args.threads {
        Some(0) => return Err(CamtError::Config("--threads must be positive".into())),
        Some(n) => Some(n),
        None => threads_from_env()?,
    };
    let report = pool(threads)?.install(|| run_sweep(&config, &procedures, &options))?;
    let mut w = create(&args.output)?;
    report.write_csv(&mut w)?;
    w.flush()?;
    for s in report.summary() {
        writeln!(
            log,
            "{:<11} alpha={:<5} FDR={:.4} (±{:.4}) power={:.4} (±{:.4})",
            s.procedure.name(),
            s.alpha,
            s.mean_fdp,
            s.ci_fdp,
            s.mean_tpr,
            s.ci_tpr
        )?;
    }
    Ok(())
}

pub fn cmd_diagnose(args: &DiagnoseArgs, out: &mut dyn Write) -> Result<()> {
    let table = parse_table(&args.input)?;
    let report = gif(&table.raw_pvalues)?;
    let counts = null_histogram_summary(&table.raw_pvalues, args.bins)?;
    writeln!(out, "# m={}", table.len())?;
    writeln!(out, "# gif={}", report.gif)?;
    writeln!(out, "# gif_pvalues_used={}", report.n_pvalues_used)?;
    writeln!(out, "# gif_threshold={}", report.threshold)?;
    writeln!(out, "# gif_warn={}", report.warn)?;
    writeln!(out, "bin_lower,bin_upper,count")?;
    let n = args.bins as f64;
    for (b, c) in counts.iter().enumerate() {
        writeln!(out, "{},{},{}", b as f64 / n, (b + 1) as f64 / n, c)?;
    }
    Ok(())
}

/// Run the CLI on `args` (including the program name) and return the
/// process exit code: 0 on success, 1 for invalid input, 2 for runtime
/// failures.
pub fn run_cli<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(stdout, "{text}") } else { write!(stderr, "{text}") };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Fit(a) => cmd_fit(a, stderr),
        Command::Simulate(a) => cmd_simulate(a, stderr),
        Command::Diagnose(a) => cmd_diagnose(a, stdout),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}

pub fn main() -> i32 {
    run_cli(std::env::args_os(), &mut std::io::stdout(), &mut std::io::stderr())
}
