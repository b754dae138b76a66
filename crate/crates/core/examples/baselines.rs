//! The comparison procedures on a single dataset: BH, Storey and the
//! oracle local FDR rule that knows the generating model.
//!
//!     cargo run --release --example baselines

use camt::baselines::storey_pi0;
use camt::simulation::{generate_replicate, metrics, Setup, SimulationConfig};
use camt::{bh, oracle_lfdr, storey};

fn main() -> camt::Result<()> {
    let sim = SimulationConfig { setup: Setup::S1, eta0: 1.5, ..SimulationConfig::default() };
    let data = generate_replicate(&sim, 0)?;
    println!("Storey null proportion estimate: {:.4}", storey_pi0(&data.pvals, 0.5)?);
    for alpha in [0.01, 0.05, 0.1] {
        for (name, mask) in [
            ("bh", bh(&data.pvals, alpha)?),
            ("storey", storey(&data.pvals, alpha, 0.5)?),
            ("oracle", oracle_lfdr(&data.pvals, Some(&data.oracle), alpha)?),
        ] {
            let (fdp, tpr) = metrics(&mask, &data.truth)?;
            println!("alpha={alpha:<5} {name:<7} FDP {fdp:.4}  TPR {tpr:.4}");
        }
    }
    Ok(())
}
