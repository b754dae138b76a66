//! Fit CAMT to one simulated dataset and compare with BH and Storey.
//!
//!     cargo run --release --example fit_camt

use camt::simulation::{generate_replicate, metrics, Setup, SimulationConfig};
use camt::{bh, run, storey, CamtConfig, PValue};

fn main() -> camt::Result<()> {
    let sim = SimulationConfig { setup: Setup::S0, k_d: 1.5, ..SimulationConfig::default() };
    let data = generate_replicate(&sim, 0)?;
    let pvals: Vec<PValue> = data.pvals.iter().map(|&p| PValue::new(p)).collect::<camt::Result<_>>()?;

    let result = run(&pvals, &data.covariates, &CamtConfig::default())?;
    let trace = &result.fit.model.trace;
    println!(
        "EM: {} iterations, converged={}, loglik {:.3}",
        trace.iterations,
        trace.converged,
        trace.loglik.last().unwrap()
    );
    println!("coefficients: theta={:?} beta={:?}", result.fit.model.coef.theta, result.fit.model.coef.beta);
    println!("t_hat = {:.5}, estimated FDP {:.4}", result.rejection.t_hat, result.rejection.fdp_hat_at_t);

    let report = |name: &str, mask: &[bool]| -> camt::Result<()> {
        let (fdp, tpr) = metrics(mask, &data.truth)?;
        let n = mask.iter().filter(|&&r| r).count();
        println!("{name:<7} rejections {n:>5}  FDP {fdp:.4}  TPR {tpr:.4}");
        Ok(())
    };
    report("camt", &result.rejection.rejected)?;
    report("bh", &bh(&data.pvals, 0.05)?)?;
    report("storey", &storey(&data.pvals, 0.05, 0.5)?)?;
    Ok(())
}
