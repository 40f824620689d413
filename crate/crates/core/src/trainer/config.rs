//! Experiment configuration.
//!
//! A config file names a task and overrides any subset of that task's
//! defaults. Keys the task defaults do not define are rejected.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::distillation::DistillLayerMap;
use crate::error::{GccError, Result};
use crate::model_zoo::{zoo, GanLossKind, NetworkSpec};
use crate::pruning::PruneMethod;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    /// Eight Gaussians on a ring, MLP networks.
    Ring8,
    /// Synthetic blob images, DCGAN-style networks.
    Blobs,
    /// Blob images with the SAGAN hyperparameters.
    Sagan,
    /// Blob images with the CycleGAN hyperparameters.
    Cyclegan,
    /// Blob images with the Pix2Pix hyperparameters.
    Pix2pix,
    /// Blob images with the SRGAN hyperparameters.
    Srgan,
}

impl Task {
    pub const ALL: [Task; 6] = [
        Task::Ring8,
        Task::Blobs,
        Task::Sagan,
        Task::Cyclegan,
        Task::Pix2pix,
        Task::Srgan,
    ];

    pub fn is_toy(self) -> bool {
        self == Task::Ring8
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Ring8 => "ring8",
            Task::Blobs => "blobs",
            Task::Sagan => "sagan",
            Task::Cyclegan => "cyclegan",
            Task::Pix2pix => "pix2pix",
            Task::Srgan => "srgan",
        })
    }
}

impl FromStr for Task {
    type Err = GccError;
    fn from_str(s: &str) -> Result<Self> {
        Task::ALL
            .into_iter()
            .find(|t| t.to_string() == s)
            .ok_or_else(|| GccError::Config(format!("unknown task `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PruneSelect {
    /// Slimming if the generator has batch norm, L1-norm otherwise.
    Auto,
    Slimming,
    L1norm,
}

impl PruneSelect {
    pub fn resolve(self, spec: &NetworkSpec) -> PruneMethod {
        match self {
            PruneSelect::Auto => crate::pruning::default_method(spec),
            PruneSelect::Slimming => PruneMethod::Slimming,
            PruneSelect::L1norm => PruneMethod::L1norm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub modes: usize,
    pub radius: f64,
    pub std: f64,
    pub z_dim: usize,
    pub image_size: usize,
    pub channels: usize,
    /// Generator samples drawn for the final metrics.
    pub eval_samples: usize,
    /// A sample counts toward a mode when within this distance of its center.
    pub coverage_radius: f64,
    /// Samples a mode needs to count as covered.
    pub coverage_min_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistillConfig {
    /// `[student tap, teacher tap]` pairs.
    pub gen_taps: Vec<[String; 2]>,
    pub disc_taps: Vec<String>,
    pub online: bool,
}

/// Switches for the ablation variants; all on for the full method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantFlags {
    pub selective: bool,
    pub global_constraint: bool,
    pub distillation: bool,
    /// The student generator's adversarial term against the student
    /// discriminator.
    pub student_adversarial: bool,
}

impl VariantFlags {
    pub fn full() -> Self {
        VariantFlags {
            selective: true,
            global_constraint: true,
            distillation: true,
            student_adversarial: true,
        }
    }

    /// Plain student training against the full-width discriminator.
    pub fn prune_baseline() -> Self {
        VariantFlags {
            selective: false,
            global_constraint: false,
            distillation: false,
            student_adversarial: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Epochs at the initial learning rate.
    pub epochs_const: usize,
    /// Epochs of linear decay to zero.
    pub epochs_decay: usize,
    pub steps_per_epoch: usize,
    pub batch_size: usize,
    pub loss: GanLossKind,
    pub teacher_ngf: usize,
    /// Width whose generator MACs set the pruning budget.
    pub student_ngf: usize,
    pub ndf: usize,
    pub tau: f64,
    pub gamma_m: f64,
    pub gamma_t: f64,
    /// Discriminator weight updates per α update.
    pub inner_steps: usize,
    pub lr_g: f64,
    pub lr_d: f64,
    pub lr_alpha: f64,
    pub alpha_decay_every: usize,
    pub alpha_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub l1_coeff: f64,
    pub prune_method: PruneSelect,
    /// Checkpoint every this many epochs; 0 disables periodic checkpoints.
    pub checkpoint_every: usize,
    pub data: DataConfig,
    pub distill: DistillConfig,
    pub variant: VariantFlags,
}

struct Preset {
    epochs: (usize, usize),
    batch: usize,
    gammas: (f64, f64),
    loss: GanLossKind,
    ngf: (usize, usize),
    ndf: usize,
    tau: f64,
}

fn image_preset(task: Task) -> Preset {
    match task {
        Task::Sagan => Preset {
            epochs: (100, 0),
            batch: 64,
            gammas: (1.0, 100.0),
            loss: GanLossKind::Hinge,
            ngf: (64, 48),
            ndf: 64,
            tau: 0.1,
        },
        Task::Cyclegan => Preset {
            epochs: (100, 100),
            batch: 1,
            gammas: (0.01, 1e3),
            loss: GanLossKind::LeastSquares,
            ngf: (64, 24),
            ndf: 64,
            tau: 0.1,
        },
        Task::Pix2pix => Preset {
            epochs: (100, 150),
            batch: 1,
            gammas: (50.0, 1e4),
            loss: GanLossKind::Hinge,
            ngf: (64, 32),
            ndf: 128,
            tau: 0.5,
        },
        Task::Srgan => Preset {
            epochs: (15, 15),
            batch: 16,
            gammas: (0.1, 0.1),
            loss: GanLossKind::Vanilla,
            ngf: (64, 24),
            ndf: 64,
            tau: 0.1,
        },
        _ => Preset {
            epochs: (10, 10),
            batch: 16,
            gammas: (1.0, 1.0),
            loss: GanLossKind::Hinge,
            ngf: (16, 8),
            ndf: 16,
            tau: 0.1,
        },
    }
}

impl ExperimentConfig {
    /// Fully defaulted config for a task.
    pub fn defaults(task: Task) -> Self {
        if task == Task::Ring8 {
            return ExperimentConfig {
                task,
                seed: 0,
                output_dir: PathBuf::from("runs/ring8"),
                epochs_const: 100,
                epochs_decay: 100,
                steps_per_epoch: 10,
                batch_size: 128,
                loss: GanLossKind::Vanilla,
                teacher_ngf: 64,
                student_ngf: 16,
                ndf: 64,
                tau: 0.1,
                gamma_m: 1.0,
                gamma_t: 1.0,
                inner_steps: 3,
                lr_g: 1e-3,
                lr_d: 1e-3,
                lr_alpha: 1e-2,
                alpha_decay_every: 100,
                alpha_decay: 0.1,
                beta1: 0.5,
                beta2: 0.999,
                l1_coeff: 1e-4,
                prune_method: PruneSelect::Auto,
                checkpoint_every: 50,
                data: DataConfig {
                    modes: 8,
                    radius: 2.0,
                    std: 0.02,
                    z_dim: 16,
                    image_size: 0,
                    channels: 0,
                    eval_samples: 2000,
                    coverage_radius: 0.25,
                    coverage_min_count: 20,
                },
                distill: DistillConfig {
                    gen_taps: zoo::RING_G_TAPS
                        .iter()
                        .map(|t| [t.to_string(), t.to_string()])
                        .collect(),
                    disc_taps: zoo::RING_D_TAPS.iter().map(|t| t.to_string()).collect(),
                    online: true,
                },
                variant: VariantFlags::full(),
            };
        }
        let p = image_preset(task);
        ExperimentConfig {
            task,
            seed: 0,
            output_dir: PathBuf::from(format!("runs/{task}")),
            epochs_const: p.epochs.0,
            epochs_decay: p.epochs.1,
            steps_per_epoch: 10,
            batch_size: p.batch,
            loss: p.loss,
            teacher_ngf: p.ngf.0,
            student_ngf: p.ngf.1,
            ndf: p.ndf,
            tau: p.tau,
            gamma_m: p.gammas.0,
            gamma_t: p.gammas.1,
            inner_steps: 1,
            lr_g: 2e-4,
            lr_d: 2e-4,
            lr_alpha: 1e-4,
            alpha_decay_every: 100,
            alpha_decay: 0.1,
            beta1: 0.5,
            beta2: 0.999,
            l1_coeff: 1e-4,
            prune_method: PruneSelect::Auto,
            checkpoint_every: 10,
            data: DataConfig {
                modes: 0,
                radius: 0.0,
                std: 0.0,
                z_dim: 32,
                image_size: 16,
                channels: 1,
                eval_samples: 64,
                coverage_radius: 0.0,
                coverage_min_count: 0,
            },
            distill: DistillConfig {
                gen_taps: vec![["g_act2".into(), "g_act2".into()]],
                disc_taps: vec!["d_act1".into()],
                online: true,
            },
            variant: VariantFlags::full(),
        }
    }

    pub fn epochs(&self) -> usize {
        self.epochs_const + self.epochs_decay
    }

    /// Sparsity pre-training length: a tenth of the schedule, rounded up.
    pub fn phase1_epochs(&self) -> usize {
        self.epochs().div_ceil(10)
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.epochs() < 10 {
            problems.push(format!("epochs_const + epochs_decay = {} < 10", self.epochs()));
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("steps_per_epoch", self.steps_per_epoch),
            ("teacher_ngf", self.teacher_ngf),
            ("student_ngf", self.student_ngf),
            ("ndf", self.ndf),
            ("inner_steps", self.inner_steps),
            ("data.z_dim", self.data.z_dim),
        ] {
            if v == 0 {
                problems.push(format!("{name} must be ≥ 1"));
            }
        }
        if self.student_ngf > self.teacher_ngf {
            problems.push("student_ngf exceeds teacher_ngf".into());
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            problems.push(format!("tau = {} outside (0, 1)", self.tau));
        }
        for (name, v) in [
            ("gamma_m", self.gamma_m),
            ("gamma_t", self.gamma_t),
            ("l1_coeff", self.l1_coeff),
            ("lr_g", self.lr_g),
            ("lr_d", self.lr_d),
            ("lr_alpha", self.lr_alpha),
            ("alpha_decay", self.alpha_decay),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                problems.push(format!("{name} must be finite and ≥ 0"));
            }
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                problems.push(format!("{name} must lie in [0, 1)"));
            }
        }
        if self.task.is_toy() {
            if self.data.modes == 0 || !(self.data.radius > 0.0) || !(self.data.std >= 0.0) {
                problems.push("data.modes, data.radius and data.std must be positive".into());
            }
        } else if self.data.image_size < 16 || !self.data.image_size.is_power_of_two() || self.data.channels == 0 {
            problems.push("data.image_size must be a power of two ≥ 16 and data.channels ≥ 1".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(GccError::Config(problems.join("; ")))
        }
    }

    /// Parses a possibly partial config: `task` is required and every other
    /// key overrides that task's defaults.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let user: toml::Table = text.parse()?;
        let task: Task = match user.get("task") {
            Some(toml::Value::String(s)) => s.parse()?,
            Some(_) => return Err(GccError::Config("`task` must be a string".into())),
            None => return Err(GccError::Config("missing required key `task`".into())),
        };
        let mut base = toml::Table::try_from(ExperimentConfig::defaults(task))?;
        let mut unknown = Vec::new();
        unknown_keys(&base, &user, "", &mut unknown);
        if !unknown.is_empty() {
            return Err(GccError::UnknownKeys(unknown));
        }
        merge(&mut base, user);
        let cfg: ExperimentConfig = toml::Value::Table(base)
            .try_into()
            .map_err(|e: toml::de::Error| GccError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn teacher_generator(&self) -> NetworkSpec {
        self.generator(self.teacher_ngf)
    }

    pub fn generator(&self, ngf: usize) -> NetworkSpec {
        if self.task.is_toy() {
            zoo::ring_generator(self.data.z_dim, ngf)
        } else {
            zoo::dcgan_generator(self.data.image_size, self.data.z_dim, ngf, self.data.channels)
        }
    }

    pub fn discriminator(&self) -> NetworkSpec {
        if self.task.is_toy() {
            zoo::ring_discriminator(self.ndf)
        } else {
            zoo::dcgan_discriminator(self.data.image_size, self.ndf, self.data.channels)
        }
    }

    pub fn distill_map(&self) -> DistillLayerMap {
        DistillLayerMap {
            gen_pairs: self
                .distill
                .gen_taps
                .iter()
                .map(|[s, t]| crate::distillation::GenPair {
                    student: s.clone(),
                    teacher: t.clone(),
                })
                .collect(),
            disc_taps: self.distill.disc_taps.clone(),
            gamma_m: self.gamma_m,
            gamma_t: self.gamma_t,
            online: self.distill.online,
        }
    }
}

fn unknown_keys(base: &toml::Table, user: &toml::Table, prefix: &str, out: &mut Vec<String>) {
    for (k, v) in user {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match (base.get(k), v) {
            (None, _) => out.push(path),
            (Some(toml::Value::Table(b)), toml::Value::Table(u)) => unknown_keys(b, u, &path, out),
            _ => {}
        }
    }
}

fn merge(base: &mut toml::Table, user: toml::Table) {
    for (k, v) in user {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(u)) => merge(b, u),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
