//! Mirror versus mixed false-rejection estimates on sparse and dense signal.
//!
//!     cargo run --release --example mixed_strategy

use camt::simulation::{generate_replicate, metrics, Setup, SimulationConfig};
use camt::{fit_camt, CamtConfig, PValue, ThresholdOptions};

fn main() -> camt::Result<()> {
    for eta0 in [3.5, 2.5, 1.5] {
        let sim = SimulationConfig { setup: Setup::S0, eta0, ..SimulationConfig::default() };
        let data = generate_replicate(&sim, 0)?;
        let pvals: Vec<PValue> = data.pvals.iter().map(|&p| PValue::new(p)).collect::<camt::Result<_>>()?;
        let fit = fit_camt(&pvals, &data.covariates, &CamtConfig::default())?;
        for mixed in [false, true] {
            let options = ThresholdOptions { mixed, ..ThresholdOptions::default() };
            let res = fit.reject(0.05, &options)?;
            let (fdp, tpr) = metrics(&res.rejected, &data.truth)?;
            println!(
                "eta0={eta0} mixed={mixed:<5} t_hat {:.5}  rejections {:>4}  FDP {fdp:.4}  TPR {tpr:.4}",
                res.t_hat, res.n_rejections
            );
        }
    }
    Ok(())
}
