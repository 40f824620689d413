//! Run records, CSV logs and checkpoints.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{read_to_string, write_string, GccError, Result};
use crate::model_zoo::network::ParamData;
use crate::model_zoo::NetworkSpec;
use crate::pruning::PruningPlan;
use crate::selective_activation::EquilibriumState;
use crate::trainer::config::ExperimentConfig;
use crate::trainer::data::RngState;

pub const RECORD_VERSION: u32 = 1;
pub const CHECKPOINT_VERSION: u32 = 1;

pub const RECORD_FILE: &str = "record.json";
pub const STEPS_CSV: &str = "steps.csv";
pub const EPOCHS_CSV: &str = "epochs.csv";
pub const PLAN_FILE: &str = "pruning_plan.json";
pub const CONFIG_FILE: &str = "config.toml";

/// Losses of one Phase-2 iteration.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct IterationLog {
    pub epoch: usize,
    pub step: usize,
    pub g_t: f64,
    pub d_t_real: f64,
    pub d_t_fake: f64,
    pub gap_t: f64,
    pub g_s: f64,
    pub d_s_real: f64,
    pub d_s_fake: f64,
    pub gap_s: f64,
    pub distill: f64,
    pub distill_gen: f64,
    pub distill_disc: f64,
    pub l_local: f64,
    pub l_global: f64,
    pub l_arch: f64,
    pub l_target: f64,
}

impl IterationLog {
    pub const CSV_HEADER: &'static str = "epoch,step,g_t,d_t_real,d_t_fake,gap_t,g_s,d_s_real,d_s_fake,gap_s,distill,distill_gen,distill_disc,l_local,l_global,l_arch,l_target";

    pub fn values(&self) -> [f64; 15] {
        [
            self.g_t,
            self.d_t_real,
            self.d_t_fake,
            self.gap_t,
            self.g_s,
            self.d_s_real,
            self.d_s_fake,
            self.gap_s,
            self.distill,
            self.distill_gen,
            self.distill_disc,
            self.l_local,
            self.l_global,
            self.l_arch,
            self.l_target,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }

    pub fn csv_row(&self) -> String {
        let mut row = format!("{},{}", self.epoch, self.step);
        for v in self.values() {
            row.push_str(&format!(",{v:.9e}"));
        }
        row
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    pub g_s: f64,
    pub d_s_fake: f64,
    pub gap_t: f64,
    pub l_target: f64,
    pub l_local: f64,
    pub l_global: f64,
    pub g_t: f64,
    pub d_t: f64,
    pub d_s: f64,
    pub distill: f64,
    pub active_channels: Vec<usize>,
    pub active_macs: u64,
    pub lr_g: f64,
    pub lr_alpha: f64,
}

impl EpochLog {
    pub fn csv_header(gated_layers: usize) -> String {
        let mut h = String::from("epoch,g_s,d_s_fake,gap_t,l_target,l_local,l_global,g_t,d_t,d_s,distill");
        for i in 0..gated_layers {
            h.push_str(&format!(",active_{i}"));
        }
        h.push_str(",active_macs,lr_g,lr_alpha");
        h
    }

    pub fn csv_row(&self) -> String {
        let mut row = format!(
            "{},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e}",
            self.epoch,
            self.g_s,
            self.d_s_fake,
            self.gap_t,
            self.l_target,
            self.l_local,
            self.l_global,
            self.g_t,
            self.d_t,
            self.d_s,
            self.distill
        );
        for a in &self.active_channels {
            row.push_str(&format!(",{a}"));
        }
        row.push_str(&format!(",{},{:.9e},{:.9e}", self.active_macs, self.lr_g, self.lr_alpha));
        row
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FinalMetrics {
    pub teacher_macs: u64,
    pub student_macs: u64,
    pub compression_ratio: f64,
    pub d_full_macs: u64,
    pub d_active_macs: u64,
    /// Ring task only.
    pub covered_modes: Option<usize>,
    pub high_quality: Option<f64>,
    pub mmd: Option<f64>,
    pub teacher_covered_modes: Option<usize>,
    /// Mean `|gap_S − gap_T|` over all iterations.
    pub mean_gap_difference: f64,
}

impl FinalMetrics {
    /// Covered modes plus the high-quality fraction; higher is better.
    pub fn toy_score(&self) -> Option<f64> {
        Some(self.covered_modes? as f64 + self.high_quality?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub record_version: u32,
    pub config: ExperimentConfig,
    pub teacher_spec: NetworkSpec,
    pub student_spec: NetworkSpec,
    pub discriminator_spec: NetworkSpec,
    pub iterations: Vec<IterationLog>,
    pub epochs: Vec<EpochLog>,
    /// α per gated layer at the end of each epoch.
    pub alpha_snapshots: Vec<Vec<Vec<f64>>>,
    pub equilibrium: EquilibriumState,
    pub checkpoints: Vec<PathBuf>,
    pub final_metrics: Option<FinalMetrics>,
    pub aborted: Option<String>,
}

impl RunRecord {
    pub fn new(
        config: &ExperimentConfig,
        teacher_spec: NetworkSpec,
        student_spec: NetworkSpec,
        discriminator_spec: NetworkSpec,
    ) -> Result<Self> {
        Ok(RunRecord {
            record_version: RECORD_VERSION,
            config: config.clone(),
            teacher_spec,
            student_spec,
            discriminator_spec,
            iterations: Vec::new(),
            epochs: Vec::new(),
            alpha_snapshots: Vec::new(),
            equilibrium: EquilibriumState::new(config.epochs())?,
            checkpoints: Vec::new(),
            final_metrics: None,
            aborted: None,
        })
    }

    pub fn gated_layers(&self) -> usize {
        crate::model_zoo::network::gate_points(&self.discriminator_spec).len()
    }

    pub fn steps_csv(&self) -> String {
        let mut out = String::from(IterationLog::CSV_HEADER);
        out.push('\n');
        for it in &self.iterations {
            out.push_str(&it.csv_row());
            out.push('\n');
        }
        out
    }

    pub fn epochs_csv(&self) -> String {
        let mut out = EpochLog::csv_header(self.gated_layers());
        out.push('\n');
        for e in &self.epochs {
            out.push_str(&e.csv_row());
            out.push('\n');
        }
        out
    }

    /// Mean `|gap_S − gap_T|` over the logged iterations.
    pub fn mean_gap_difference(&self) -> f64 {
        if self.iterations.is_empty() {
            return f64::NAN;
        }
        self.iterations
            .iter()
            .map(|i| (i.gap_s - i.gap_t).abs())
            .sum::<f64>()
            / self.iterations.len() as f64
    }

    /// Writes the record and both CSV logs into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        write_string(&dir.join(RECORD_FILE), &serde_json::to_string(self)?)?;
        write_string(&dir.join(STEPS_CSV), &self.steps_csv())?;
        write_string(&dir.join(EPOCHS_CSV), &self.epochs_csv())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(RECORD_FILE);
        let rec: RunRecord = serde_json::from_str(&read_to_string(&path)?)
            .map_err(|e| GccError::Record(format!("{}: {e}", path.display())))?;
        rec.check()?;
        Ok(rec)
    }

    /// Structural consistency of a loaded record.
    pub fn check(&self) -> Result<()> {
        if self.record_version != RECORD_VERSION {
            return Err(GccError::Record(format!(
                "unsupported record_version {}",
                self.record_version
            )));
        }
        let gated = self.gated_layers();
        for (k, e) in self.epochs.iter().enumerate() {
            if e.epoch != k + 1 {
                return Err(GccError::Record(format!("epoch {} out of sequence", e.epoch)));
            }
            if e.active_channels.len() != gated {
                return Err(GccError::Record(format!(
                    "epoch {} lists {} gated layers, discriminator has {gated}",
                    e.epoch,
                    e.active_channels.len()
                )));
            }
        }
        if self.alpha_snapshots.len() != self.epochs.len() {
            return Err(GccError::Record("α snapshots and epochs differ in count".into()));
        }
        Ok(())
    }
}

/// Everything needed to rebuild the Phase-2 state at an epoch boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub checkpoint_version: u32,
    pub epoch: usize,
    pub teacher_spec: NetworkSpec,
    pub student_spec: NetworkSpec,
    pub discriminator_spec: NetworkSpec,
    pub teacher_g: Vec<ParamData>,
    pub teacher_d: Vec<ParamData>,
    pub student_g: Vec<ParamData>,
    pub student_d: Vec<ParamData>,
    pub transforms: Vec<Vec<f64>>,
    pub alpha: Vec<Vec<f64>>,
    pub equilibrium_target: f64,
    pub rng: RngState,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        write_string(path, &serde_json::to_string(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(&read_to_string(path)?)?;
        if c.checkpoint_version != CHECKPOINT_VERSION {
            return Err(GccError::Record(format!(
                "unsupported checkpoint_version {}",
                c.checkpoint_version
            )));
        }
        Ok(c)
    }
}

pub fn save_plan(dir: &Path, plan: &PruningPlan) -> Result<PathBuf> {
    let path = dir.join(PLAN_FILE);
    plan.save(&path)?;
    Ok(path)
}
