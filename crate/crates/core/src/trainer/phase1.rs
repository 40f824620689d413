//! Generator compression: sparsity pre-training, scoring, one-shot pruning.

use std::path::Path;

use crate::error::Result;
use crate::metrics::macs::spec_macs;
use crate::model_zoo::{build_network, NetworkSpec};
use crate::pruning::{
    apply_plan, prune_to_budget, score_importance, sparsity_regularized_train, ImportanceScores,
    PruneMethod, PruningPlan, SparsityOptions,
};
use crate::trainer::config::ExperimentConfig;
use crate::trainer::data::{BlobImages, DataSource, RingMixture};
use crate::trainer::optim::AdamConfig;
use crate::trainer::record::save_plan;
use crate::trainer::steps::AdversarialLosses;

/// Seed offsets of the independent random streams of a run.
pub mod streams {
    pub const PHASE1_DATA: u64 = 1;
    pub const PHASE1_G: u64 = 2;
    pub const PHASE1_D: u64 = 3;
    pub const TEACHER_G: u64 = 10;
    pub const TEACHER_D: u64 = 11;
    pub const STUDENT_G: u64 = 12;
    pub const STUDENT_D: u64 = 13;
    pub const TRANSFORMS: u64 = 14;
    pub const DATA: u64 = 15;
    pub const OFFLINE_DATA: u64 = 16;
    pub const EVAL: u64 = 17;

    pub fn seed(base: u64, stream: u64) -> u64 {
        base.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(stream)
    }
}

pub fn make_data(cfg: &ExperimentConfig, seed: u64) -> Result<Box<dyn DataSource>> {
    Ok(if cfg.task.is_toy() {
        Box::new(RingMixture::new(
            cfg.data.modes,
            cfg.data.radius,
            cfg.data.std,
            cfg.data.z_dim,
            seed,
        )?)
    } else {
        Box::new(BlobImages::new(
            cfg.data.image_size,
            cfg.data.channels,
            cfg.data.z_dim,
            seed,
        ))
    })
}

#[derive(Debug, Clone)]
pub struct Phase1Output {
    pub teacher_spec: NetworkSpec,
    pub student_spec: NetworkSpec,
    pub method: PruneMethod,
    pub scores: ImportanceScores,
    pub plan: PruningPlan,
    pub history: Vec<AdversarialLosses>,
}

/// Budget: MACs of the task generator at `student_ngf`.
pub fn budget_macs(cfg: &ExperimentConfig) -> Result<u64> {
    spec_macs(&cfg.generator(cfg.student_ngf))
}

/// Sparsity pre-training for a tenth of the schedule, importance scoring and
/// pruning to the budget. The returned student spec is meant to be trained
/// from scratch. The plan is written to `out` when given.
pub fn run_phase1(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<Phase1Output> {
    cfg.validate()?;
    let teacher_spec = cfg.teacher_generator();
    let seed = |s| streams::seed(cfg.seed, s);
    let g = build_network(&teacher_spec, seed(streams::PHASE1_G))?;
    let d = build_network(&cfg.discriminator(), seed(streams::PHASE1_D))?;
    let mut data = make_data(cfg, seed(streams::PHASE1_DATA))?;
    let method = cfg.prune_method.resolve(&teacher_spec);
    let opts = SparsityOptions {
        epochs: cfg.phase1_epochs(),
        steps_per_epoch: cfg.steps_per_epoch,
        batch_size: cfg.batch_size,
        l1_coeff: cfg.l1_coeff,
        method,
        loss: cfg.loss,
        g_opt: AdamConfig {
            lr: cfg.lr_g,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: 1e-8,
        },
        d_opt: AdamConfig {
            lr: cfg.lr_d,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: 1e-8,
        },
    };
    let history = sparsity_regularized_train(&g, &d, data.as_mut(), &opts)?;
    let scores = score_importance(&g, method)?;
    let plan = prune_to_budget(&teacher_spec, &scores, budget_macs(cfg)?)?;
    let student_spec = apply_plan(&teacher_spec, &plan)?;
    log::info!(
        "pruned `{}` from {} to {} MACs (budget {})",
        teacher_spec.name,
        plan.original_macs,
        plan.achieved_macs,
        plan.target_macs
    );
    if let Some(dir) = out {
        save_plan(dir, &plan)?;
    }
    Ok(Phase1Output {
        teacher_spec,
        student_spec,
        method,
        scores,
        plan,
        history,
    })
}
