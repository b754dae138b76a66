//! A small replicate sweep over several procedures and target levels,
//! written as tidy CSV to stdout with a summary on stderr.
//!
//!     cargo run --release --example simulation_sweep -- S3.3 > sweep.csv

use camt::simulation::{run_sweep, Procedure, SimulationConfig, SweepOptions};

fn main() -> camt::Result<()> {
    let setup = std::env::args().nth(1).unwrap_or_else(|| "S0".into()).parse()?;
    let config = SimulationConfig {
        setup,
        m: 5000,
        n_replicates: 20,
        alpha_grid: vec![0.05, 0.1, 0.2],
        seed: 2024,
        ..SimulationConfig::default()
    };
    let options = SweepOptions { record_timing: false, ..SweepOptions::default() };
    let report = run_sweep(&config, &Procedure::ALL, &options)?;
    report.write_csv(std::io::stdout().lock())?;
    for s in report.summary() {
        eprintln!(
            "{setup} {:<11} alpha={:<4} FDR {:.4} ± {:.4}  power {:.4} ± {:.4}",
            s.procedure.name(),
            s.alpha,
            s.mean_fdp,
            s.ci_fdp,
            s.mean_tpr,
            s.ci_tpr
        );
    }
    Ok(())
}
