//! Joint training of the teacher pair, the pruned student generator and the
//! selective-activation student discriminator.
//!
//! One iteration:
//!
//! 1. draw `z1, x1`; update `G^T` then `D^T` and measure the teacher gap;
//! 2. update `G^S` on its adversarial loss against the frozen `D^S` (gated by
//!    the mask from the start of the iteration) plus the distillation loss;
//! 3. update the `D^S` weights `inner_steps` times with α frozen;
//! 4. fold the teacher gap into `L_target`;
//! 5. draw `z2, x2`; update α on `L_arch` with the `D^S` weights frozen.

use std::path::{Path, PathBuf};

use candle_core::Tensor;

use crate::distillation::{distill_loss_from, DistillLayerMap, DistillTransforms};
use crate::error::{GccError, Result};
use crate::metrics::macs::{compression_ratio_of, spec_macs};
use crate::metrics::toy::{mmd_rbf, mode_coverage};
use crate::model_zoo::network::flatten_logits;
use crate::model_zoo::{build_network, generator_loss, ForwardOptions, Network, NetworkSpec};
use crate::selective_activation::{
    active_macs, ArchStepLosses, GateMask, SelectiveDiscriminator, SelectiveOptions, StepRecord,
    WeightStepLosses,
};
use crate::trainer::config::ExperimentConfig;
use crate::trainer::data::{rows, DataSource, RingMixture};
use crate::trainer::optim::{lr_at, step_decay, Adam, AdamConfig};
use crate::trainer::phase1::{make_data, streams};
use crate::trainer::record::{
    Checkpoint, EpochLog, FinalMetrics, IterationLog, RunRecord, CHECKPOINT_VERSION, CONFIG_FILE,
};
use crate::trainer::steps::{adversarial_losses, adversarial_step, no_penalty, AdversarialLosses};

/// RBF bandwidth of the toy discrepancy.
pub const MMD_BANDWIDTH: f64 = 0.5;
/// Samples per side of the toy discrepancy.
pub const MMD_SAMPLES: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StudentGeneratorLosses {
    pub adversarial: f64,
    pub distill: f64,
    pub distill_gen: f64,
    pub distill_disc: f64,
}

pub struct Phase2Trainer {
    pub cfg: ExperimentConfig,
    pub teacher_g: Network,
    pub teacher_d: Network,
    pub student_g: Network,
    pub student_d: SelectiveDiscriminator,
    pub transforms: DistillTransforms,
    pub map: DistillLayerMap,
    pub record: RunRecord,
    teacher_g_opt: Adam,
    teacher_d_opt: Adam,
    student_g_opt: Adam,
    data: Box<dyn DataSource>,
    /// Teacher updates disabled (offline distillation after pre-training).
    teacher_frozen: bool,
}

fn adam(cfg: &ExperimentConfig, lr: f64) -> AdamConfig {
    AdamConfig {
        lr,
        beta1: cfg.beta1,
        beta2: cfg.beta2,
        eps: 1e-8,
    }
}

impl Phase2Trainer {
    /// Fresh networks for every role; nothing is inherited from Phase 1.
    pub fn new(cfg: &ExperimentConfig, student_spec: &NetworkSpec) -> Result<Self> {
        cfg.validate()?;
        student_spec.validate()?;
        let seed = |s| streams::seed(cfg.seed, s);
        let teacher_spec = cfg.teacher_generator();
        let d_spec = cfg.discriminator();
        let map = cfg.distill_map();
        if cfg.variant.distillation {
            map.validate(student_spec, &teacher_spec, &d_spec)?;
        }
        let teacher_g = build_network(&teacher_spec, seed(streams::TEACHER_G))?;
        let teacher_d = build_network(&d_spec, seed(streams::TEACHER_D))?;
        let student_g = build_network(student_spec, seed(streams::STUDENT_G))?;
        let transforms = if cfg.variant.distillation {
            DistillTransforms::new(&map, student_spec, &teacher_spec, seed(streams::TRANSFORMS))?
        } else {
            DistillTransforms::default()
        };
        let student_d = SelectiveDiscriminator::new(
            build_network(&d_spec, seed(streams::STUDENT_D))?,
            cfg.tau,
            cfg.loss,
            SelectiveOptions {
                selective: cfg.variant.selective,
                global_constraint: cfg.variant.global_constraint,
            },
            adam(cfg, cfg.lr_d),
            adam(cfg, cfg.lr_alpha),
        )?;
        let mut g_vars = student_g.vars();
        g_vars.extend(transforms.vars());
        Ok(Phase2Trainer {
            teacher_g_opt: Adam::new(teacher_g.vars(), adam(cfg, cfg.lr_g)),
            teacher_d_opt: Adam::new(teacher_d.vars(), adam(cfg, cfg.lr_d)),
            student_g_opt: Adam::new(g_vars, adam(cfg, cfg.lr_g)),
            data: make_data(cfg, seed(streams::DATA))?,
            record: RunRecord::new(cfg, teacher_spec, student_spec.clone(), d_spec)?,
            cfg: cfg.clone(),
            teacher_g,
            teacher_d,
            student_g,
            student_d,
            transforms,
            map,
            teacher_frozen: false,
        })
    }

    pub fn teacher_frozen(&self) -> bool {
        self.teacher_frozen
    }

    fn set_epoch_rates(&mut self, epoch: usize) {
        let c = &self.cfg;
        let lr_g = lr_at(c.lr_g, epoch, c.epochs_const, c.epochs_decay);
        let lr_d = lr_at(c.lr_d, epoch, c.epochs_const, c.epochs_decay);
        let lr_a = step_decay(c.lr_alpha, epoch, c.alpha_decay_every, c.alpha_decay);
        self.teacher_g_opt.set_lr(lr_g);
        self.student_g_opt.set_lr(lr_g);
        self.teacher_d_opt.set_lr(lr_d);
        self.student_d.weight_optimizer().set_lr(lr_d);
        self.student_d.alpha_optimizer().set_lr(lr_a);
    }

    /// Trains the teacher pair alone for the whole schedule and freezes it
    /// (offline distillation).
    pub fn pretrain_teacher(&mut self) -> Result<Vec<AdversarialLosses>> {
        let mut data = make_data(&self.cfg, streams::seed(self.cfg.seed, streams::OFFLINE_DATA))?;
        let mut history = Vec::new();
        for epoch in 0..self.cfg.epochs() {
            self.set_epoch_rates(epoch);
            for _ in 0..self.cfg.steps_per_epoch {
                let z = data.noise(self.cfg.batch_size)?;
                let x = data.real(self.cfg.batch_size)?;
                history.push(self.teacher_step(&z, &x)?);
            }
        }
        self.teacher_frozen = true;
        Ok(history)
    }

    /// Teacher update on `(z, x)`, or only its losses once frozen.
    pub fn teacher_step(&mut self, z: &Tensor, x: &Tensor) -> Result<AdversarialLosses> {
        if self.teacher_frozen {
            return adversarial_losses(&self.teacher_g, &self.teacher_d, z, x, self.cfg.loss);
        }
        adversarial_step(
            &self.teacher_g,
            &self.teacher_d,
            &mut self.teacher_g_opt,
            &mut self.teacher_d_opt,
            z,
            x,
            self.cfg.loss,
            &no_penalty,
        )
    }

    /// Student generator update; returns the detached fakes for the
    /// discriminator step.
    pub fn student_generator_step(&mut self, z: &Tensor, mask: &GateMask) -> Result<(Tensor, StudentGeneratorLosses)> {
        let out = self.student_g.forward_taps(z)?;
        let mut losses = StudentGeneratorLosses::default();
        let mut terms = Vec::new();
        let logits = self.student_d.logits(&out.output, mask, true)?;
        let adv = generator_loss(&logits, self.cfg.loss)?;
        losses.adversarial = adv.to_scalar()?;
        if self.cfg.variant.student_adversarial {
            terms.push(adv);
        }
        if self.cfg.variant.distillation {
            let d = distill_loss_from(&out, &self.teacher_g, &self.teacher_d, &self.map, &self.transforms, z)?;
            losses.distill = d.value()?;
            losses.distill_gen = d.gen_terms.iter().sum();
            losses.distill_disc = d.disc_terms.iter().sum();
            terms.push(d.total);
        }
        if !terms.is_empty() {
            let total = Tensor::stack(&terms, 0)?.sum_all()?;
            self.student_g_opt.step(&total.backward()?)?;
        }
        Ok((out.output.detach(), losses))
    }

    /// `inner_steps` weight updates of the student discriminator.
    pub fn discriminator_weight_steps(&mut self, x: &Tensor, fake: &Tensor, mask: &GateMask) -> Result<WeightStepLosses> {
        let mut last = WeightStepLosses::default();
        for _ in 0..self.cfg.inner_steps {
            last = self.student_d.weight_step(x, fake, mask)?;
        }
        Ok(last)
    }

    /// α update on a fresh batch.
    pub fn alpha_step(&mut self, z2: &Tensor, x2: &Tensor) -> Result<ArchStepLosses> {
        let fake = self.student_g.forward(z2)?.detach();
        let target = self.record.equilibrium.l_target;
        self.student_d.alpha_step(x2, &fake, target)
    }

    pub fn iteration(&mut self, epoch: usize, step: usize) -> Result<IterationLog> {
        let b = self.cfg.batch_size;
        let mask = self.student_d.current_mask()?;
        let z1 = self.data.noise(b)?;
        let x1 = self.data.real(b)?;
        let t = self.teacher_step(&z1, &x1)?;
        let (fake, g) = self.student_generator_step(&z1, &mask)?;
        let d = self.discriminator_weight_steps(&x1, &fake, &mask)?;
        let gap_t = t.gap();
        let l_target = self.record.equilibrium.ema_update(gap_t)?;
        let z2 = self.data.noise(b)?;
        let x2 = self.data.real(b)?;
        let a = self.alpha_step(&z2, &x2)?;
        let log = IterationLog {
            epoch,
            step,
            g_t: t.g,
            d_t_real: t.d_real,
            d_t_fake: t.d_fake,
            gap_t,
            g_s: g.adversarial,
            d_s_real: d.real,
            d_s_fake: d.fake,
            gap_s: (g.adversarial - d.fake).abs(),
            distill: g.distill,
            distill_gen: g.distill_gen,
            distill_disc: g.distill_disc,
            l_local: a.l_local,
            l_global: a.l_global,
            l_arch: a.l_arch,
            l_target,
        };
        self.record.equilibrium.record(StepRecord {
            l_g_s: g.adversarial,
            l_dfake_s: d.fake,
            l_g_t: t.g,
            l_dfake_t: t.d_fake,
            l_local: a.l_local,
            l_global: a.l_global,
            l_target,
        });
        Ok(log)
    }

    /// Loads parameters, retention factors, the equilibrium target and the
    /// data stream position from a checkpoint of the same configuration.
    pub fn restore(&mut self, c: &Checkpoint) -> Result<()> {
        if c.student_spec != self.record.student_spec || c.discriminator_spec != self.record.discriminator_spec {
            return Err(GccError::Record("checkpoint specs do not match the trainer".into()));
        }
        if c.transforms.len() != self.transforms.transforms.len() {
            return Err(GccError::Record("checkpoint transform count mismatch".into()));
        }
        self.teacher_g.import_params(&c.teacher_g)?;
        self.teacher_d.import_params(&c.teacher_d)?;
        self.student_g.import_params(&c.student_g)?;
        self.student_d.net.import_params(&c.student_d)?;
        for (t, w) in self.transforms.transforms.iter().zip(&c.transforms) {
            let shape = t.weight.as_tensor().shape().clone();
            t.weight.set(&Tensor::from_vec(w.clone(), shape, &t.weight.device().clone())?)?;
        }
        self.student_d.alpha.set_values(&c.alpha)?;
        self.record.equilibrium.l_target = c.equilibrium_target;
        self.data.set_rng_state(&c.rng);
        Ok(())
    }

    fn checkpoint(&self, epoch: usize) -> Result<Checkpoint> {
        Ok(Checkpoint {
            checkpoint_version: CHECKPOINT_VERSION,
            epoch,
            teacher_spec: self.record.teacher_spec.clone(),
            student_spec: self.record.student_spec.clone(),
            discriminator_spec: self.record.discriminator_spec.clone(),
            teacher_g: self.teacher_g.export_params()?,
            teacher_d: self.teacher_d.export_params()?,
            student_g: self.student_g.export_params()?,
            student_d: self.student_d.net.export_params()?,
            transforms: self
                .transforms
                .transforms
                .iter()
                .map(|t| Ok(t.weight.as_tensor().flatten_all()?.to_vec1()?))
                .collect::<Result<_>>()?,
            alpha: self.student_d.alpha.values()?,
            equilibrium_target: self.record.equilibrium.l_target,
            rng: self.data.rng_state(),
        })
    }

    /// Runs every epoch. With `out`, the record, logs, config and periodic
    /// checkpoints are written there. A non-finite loss stops the run, saves
    /// the last good state and returns [`GccError::NonFinite`].
    pub fn run(mut self, out: Option<&Path>) -> Result<RunRecord> {
        if let Some(dir) = out {
            crate::error::write_string(&dir.join(CONFIG_FILE), &self.cfg.to_toml_string()?)?;
        }
        if !self.map.online && self.cfg.variant.distillation {
            self.pretrain_teacher()?;
        }
        let mut last_good = self.checkpoint(0)?;
        for epoch in 0..self.cfg.epochs() {
            self.record.equilibrium.set_epoch(epoch)?;
            self.set_epoch_rates(epoch);
            let start = self.record.iterations.len();
            for step in 0..self.cfg.steps_per_epoch {
                let outcome = self.iteration(epoch + 1, step);
                let reason = match &outcome {
                    Ok(log) if log.is_finite() => None,
                    Ok(_) => Some("non-finite loss".to_string()),
                    Err(e) => Some(e.to_string()),
                };
                if let Some(reason) = reason {
                    return Err(self.abort(out, &last_good, epoch + 1, step, reason, outcome.err()));
                }
                self.record.iterations.push(outcome.expect("checked"));
            }
            let log = self.epoch_log(epoch + 1, start)?;
            self.record.epochs.push(log);
            self.record.alpha_snapshots.push(self.student_d.alpha.values()?);
            last_good = self.checkpoint(epoch + 1)?;
            if let Some(dir) = out {
                let every = self.cfg.checkpoint_every;
                if every > 0 && (epoch + 1) % every == 0 {
                    let path = checkpoint_path(dir, epoch + 1);
                    last_good.save(&path)?;
                    self.record.checkpoints.push(path);
                }
            }
        }
        self.record.final_metrics = Some(self.evaluate()?);
        if let Some(dir) = out {
            last_good.save(&final_checkpoint_path(dir))?;
            self.record.save(dir)?;
        }
        Ok(self.record)
    }

    fn abort(
        &mut self,
        out: Option<&Path>,
        last_good: &Checkpoint,
        epoch: usize,
        step: usize,
        reason: String,
        err: Option<GccError>,
    ) -> GccError {
        log::error!("aborting at epoch {epoch}, step {step}: {reason}");
        self.record.aborted = Some(format!("epoch {epoch}, step {step}: {reason}"));
        let mut saved = None;
        if let Some(dir) = out {
            let path = checkpoint_path(dir, last_good.epoch);
            if last_good.save(&path).is_ok() {
                self.record.checkpoints.push(path.clone());
                saved = Some(path);
            }
            if let Err(e) = self.record.save(dir) {
                log::error!("could not save the run record: {e}");
            }
        }
        match err {
            Some(e) if !reason.contains("finite") => e,
            _ => GccError::NonFinite {
                what: reason,
                epoch,
                step,
                checkpoint: saved,
            },
        }
    }

    fn epoch_log(&mut self, epoch: usize, start: usize) -> Result<EpochLog> {
        let its = &self.record.iterations[start..];
        let n = its.len().max(1) as f64;
        let mean = |f: &dyn Fn(&IterationLog) -> f64| its.iter().map(f).sum::<f64>() / n;
        let mask = self.student_d.current_mask()?;
        Ok(EpochLog {
            epoch,
            g_s: mean(&|i| i.g_s),
            d_s_fake: mean(&|i| i.d_s_fake),
            gap_t: mean(&|i| i.gap_t),
            l_target: self.record.equilibrium.l_target,
            l_local: mean(&|i| i.l_local),
            l_global: mean(&|i| i.l_global),
            g_t: mean(&|i| i.g_t),
            d_t: mean(&|i| i.d_t_real + i.d_t_fake),
            d_s: mean(&|i| i.d_s_real + i.d_s_fake),
            distill: mean(&|i| i.distill),
            active_channels: mask.active_counts(),
            active_macs: active_macs(&self.record.discriminator_spec, &mask)?,
            lr_g: self.student_g_opt.lr(),
            lr_alpha: self.student_d.alpha_optimizer().lr(),
        })
    }

    /// Compression figures, and mode coverage plus discrepancy on the ring
    /// task.
    pub fn evaluate(&mut self) -> Result<FinalMetrics> {
        let teacher_macs = spec_macs(&self.record.teacher_spec)?;
        let student_macs = spec_macs(&self.record.student_spec)?;
        let mask = self.student_d.current_mask()?;
        let mut m = FinalMetrics {
            teacher_macs,
            student_macs,
            compression_ratio: compression_ratio_of(teacher_macs as f64, student_macs as f64)?,
            d_full_macs: spec_macs(&self.record.discriminator_spec)?,
            d_active_macs: active_macs(&self.record.discriminator_spec, &mask)?,
            mean_gap_difference: self.record.mean_gap_difference(),
            ..FinalMetrics::default()
        };
        if self.cfg.task.is_toy() {
            let d = &self.cfg.data;
            let mut eval = RingMixture::new(
                d.modes,
                d.radius,
                d.std,
                d.z_dim,
                streams::seed(self.cfg.seed, streams::EVAL),
            )?;
            let z = eval.noise(d.eval_samples)?;
            let samples = rows(&self.student_g.forward_with(&z, ForwardOptions::frozen())?.output)?;
            let teacher = rows(&self.teacher_g.forward_with(&z, ForwardOptions::frozen())?.output)?;
            let cov = mode_coverage(&samples, &eval.centers, d.coverage_radius, d.coverage_min_count)?;
            let t_cov = mode_coverage(&teacher, &eval.centers, d.coverage_radius, d.coverage_min_count)?;
            let real = eval.sample_points(MMD_SAMPLES);
            let k = MMD_SAMPLES.min(samples.len());
            m.covered_modes = Some(cov.covered);
            m.high_quality = Some(cov.high_quality);
            m.teacher_covered_modes = Some(t_cov.covered);
            m.mmd = Some(mmd_rbf(&samples[..k], &real, MMD_BANDWIDTH)?);
        }
        Ok(m)
    }

    /// Student discriminator logits on `x` with its current mask.
    pub fn student_logits(&self, x: &Tensor) -> Result<Tensor> {
        let mask = self.student_d.current_mask()?;
        flatten_logits(&self.student_d.logits(x, &mask, true)?)
    }
}

pub fn checkpoint_path(dir: &Path, epoch: usize) -> PathBuf {
    dir.join("checkpoints").join(format!("epoch_{epoch:04}.json"))
}

pub fn final_checkpoint_path(dir: &Path) -> PathBuf {
    dir.join("checkpoints").join("final.json")
}

/// Phase 2 from scratch on `student_spec`.
pub fn run_phase2(cfg: &ExperimentConfig, student_spec: &NetworkSpec, out: Option<&Path>) -> Result<RunRecord> {
    Phase2Trainer::new(cfg, student_spec)?.run(out)
}
