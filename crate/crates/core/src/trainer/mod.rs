//! Two-phase training: generator compression, then joint teacher/student
//! training with the selective-activation discriminator.

pub mod config;
pub mod curves;
pub mod data;
pub mod optim;
pub mod phase1;
pub mod phase2;
pub mod record;
pub mod steps;

pub use config::{ExperimentConfig, Task, VariantFlags};
pub use curves::equilibrium_curves;
pub use phase1::{run_phase1, Phase1Output};
pub use phase2::{run_phase2, Phase2Trainer};
pub use record::{FinalMetrics, IterationLog, RunRecord};

use std::path::Path;

use crate::error::Result;

/// Phase 1 followed by Phase 2 on the pruned generator.
pub fn run_experiment(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<(Phase1Output, RunRecord)> {
    let p1 = run_phase1(cfg, out)?;
    let record = run_phase2(cfg, &p1.student_spec, out)?;
    Ok((p1, record))
}
