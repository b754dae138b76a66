//! Covariate adaptive multiple testing.
//!
//! Per-hypothesis null probabilities `π_i` and surrogate alternative shapes
//! `k_i` are fitted by EM from p-values and covariates; a mirror estimate of
//! the false discovery proportion then picks the rejection threshold.
//!
//! ```
//! use camt::{run, CamtConfig, PValue};
//!
//! let p: Vec<PValue> = (0..500)
//!     .map(|i| PValue::new(if i % 10 == 0 { 1e-6 } else { (i as f64 + 0.5) / 500.0 }).unwrap())
//!     .collect();
//! let x: Vec<f64> = (0..500).map(|i| (i % 10) as f64).collect();
//! let result = run(&p, &[x], &CamtConfig::default()).unwrap();
//! assert!(result.rejection.n_rejections > 0);
//! ```

pub mod baselines;
pub mod cli;
pub mod design;
pub mod diagnostics;
pub mod em;
pub mod error;
pub mod procedure;
pub mod simulation;
pub mod spline;
pub mod surrogate;
pub mod table;
pub mod threshold;

pub use baselines::{bh, oracle_lfdr, storey, OracleTruth, ZDensity};
pub use design::DesignMatrix;
pub use diagnostics::{gif, GifReport};
pub use em::{CoefVector, EmConfig, FittedHypotheses, ModelFit};
pub use error::{CamtError, Result};
pub use procedure::{fit_camt, run, CamtConfig, CamtFit, CamtResult};
pub use simulation::{Procedure, Setup, SimulationConfig};
pub use surrogate::{BetaParam, NullProb, PValue};
pub use table::{parse_table, HypothesisTable};
pub use threshold::{MirrorStatistics, RejectionResult, ThresholdOptions};
