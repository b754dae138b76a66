//! The genomic inflation factor on a well-specified null and on a shifted
//! null where the uniform assumption fails.
//!
//!     cargo run --release --example gif_diagnostic

use camt::diagnostics::null_histogram_summary;
use camt::gif;
use camt::simulation::{generate_replicate, Setup, SimulationConfig};

fn main() -> camt::Result<()> {
    for setup in [Setup::S0, Setup::S5_1, Setup::S5_2] {
        let data = generate_replicate(&SimulationConfig { setup, ..SimulationConfig::default() }, 0)?;
        let report = gif(&data.pvals)?;
        let hist = null_histogram_summary(&data.pvals, 10)?;
        println!(
            "{setup:<5} gif {:.3} from {} p-values, warn={}  histogram {hist:?}",
            report.gif, report.n_pvalues_used, report.warn
        );
    }
    Ok(())
}
