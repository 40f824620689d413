//! One-shot generator pruning.
//!
//! A generator is first trained briefly with an L1 penalty (on batch-norm
//! scales for slimming, on kernel weights for L1-norm pruning). Kernels are
//! then scored, sorted in ascending importance and removed one at a time,
//! globally, until the MACs budget is met. The resulting architecture is
//! retrained from scratch; no weights are inherited.

use std::fmt;
use std::str::FromStr;

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{read_to_string, write_string, GccError, Result};
use crate::metrics::macs::spec_macs;
use crate::model_zoo::loss::abs_subgrad;
use crate::model_zoo::{GanLossKind, LayerKind, Network, NetworkSpec, SkipMode};
use crate::trainer::data::DataSource;
use crate::trainer::optim::{Adam, AdamConfig};
use crate::trainer::steps::{adversarial_step, AdversarialLosses};

pub const PRUNING_PLAN_VERSION: u32 = 1;
pub const DEFAULT_L1_COEFF: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PruneMethod {
    /// Importance = |batch-norm scale| of the kernel's channel.
    Slimming,
    /// Importance = Σ|w| over the kernel's weights.
    L1norm,
}

impl fmt::Display for PruneMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PruneMethod::Slimming => "slimming",
            PruneMethod::L1norm => "l1norm",
        })
    }
}

impl FromStr for PruneMethod {
    type Err = GccError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "slimming" => Ok(PruneMethod::Slimming),
            "l1norm" | "l1-norm" => Ok(PruneMethod::L1norm),
            other => Err(GccError::Config(format!("unknown pruning method `{other}`"))),
        }
    }
}

/// Slimming when the generator has batch norm, L1-norm otherwise.
pub fn default_method(spec: &NetworkSpec) -> PruneMethod {
    if spec.layers.iter().any(|l| l.kind == LayerKind::BatchNorm) {
        PruneMethod::Slimming
    } else {
        PruneMethod::L1norm
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerScores {
    pub layer: usize,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceScores {
    pub method: PruneMethod,
    /// One entry per parameterized layer, in layer order.
    pub layers: Vec<LayerScores>,
}

impl ImportanceScores {
    pub fn for_layer(&self, layer: usize) -> Option<&[f64]> {
        self.layers
            .iter()
            .find(|l| l.layer == layer)
            .map(|l| l.scores.as_slice())
    }

    /// Kernel indices of `layer` in ascending importance (ties by index).
    pub fn ascending(&self, layer: usize) -> Option<Vec<usize>> {
        let s = self.for_layer(layer)?;
        let mut idx: Vec<usize> = (0..s.len()).collect();
        idx.sort_by(|&a, &b| s[a].total_cmp(&s[b]).then(a.cmp(&b)));
        Some(idx)
    }
}

/// Batch-norm layer normalizing the output of parameterized layer `layer`.
fn following_bn(spec: &NetworkSpec, layer: usize) -> Option<usize> {
    spec.layers[layer + 1..]
        .iter()
        .position(|l| l.kind != LayerKind::Activation)
        .map(|off| layer + 1 + off)
        .filter(|&i| spec.layers[i].kind == LayerKind::BatchNorm)
}

/// Layers whose kernels may be removed: every parameterized layer except
/// the output layer and layers whose block feeds or receives a residual
/// addition (their width is tied to another layer).
pub fn prunable_layers(spec: &NetworkSpec) -> Vec<usize> {
    let params = spec.parameterized_layers();
    let add_sources: Vec<&str> = spec
        .layers
        .iter()
        .filter_map(|l| l.skip.as_ref())
        .filter(|s| s.mode == SkipMode::Add)
        .map(|s| s.from.as_str())
        .collect();
    params
        .iter()
        .enumerate()
        .take(params.len().saturating_sub(1))
        .filter(|&(k, &p)| {
            let end = params.get(k + 1).copied().unwrap_or(spec.layers.len());
            !spec.layers[p..end].iter().any(|l| {
                l.skip.as_ref().is_some_and(|s| s.mode == SkipMode::Add)
                    || l.tap_name.as_deref().is_some_and(|t| add_sources.contains(&t))
            })
        })
        .map(|(_, &p)| p)
        .collect()
}

/// Per-kernel L1 norms of a weight tensor; kernels are output channels.
fn kernel_l1(weight: &Tensor, kind: LayerKind) -> Result<Vec<f64>> {
    let abs = weight.abs()?;
    let per_kernel = match kind {
        // [in, out, k, k]
        LayerKind::TransposedConv => abs.sum((0, 2, 3))?,
        // [out, in, k, k]
        LayerKind::Conv => abs.sum((1, 2, 3))?,
        // [out, in]
        _ => abs.sum(1)?,
    };
    Ok(per_kernel.to_vec1()?)
}

pub fn score_importance(g: &Network, method: PruneMethod) -> Result<ImportanceScores> {
    let spec = g.spec();
    let params = spec.parameterized_layers();
    let last = *params.last().expect("validated network has layers");
    let mut layers = Vec::with_capacity(params.len());
    for &p in &params {
        let bn = following_bn(spec, p);
        let scores = match (method, bn) {
            (PruneMethod::Slimming, Some(bn)) => {
                let scale = g.bn_scale(bn).expect("batch-norm parameters");
                scale.as_tensor().abs()?.to_vec1()?
            }
            (PruneMethod::Slimming, None) if p != last => {
                return Err(GccError::Config(format!(
                    "slimming needs a batch norm after layer {p} of `{}`",
                    spec.name
                )))
            }
            // The output layer is never pruned; it is scored by L1 norm when
            // it has no batch norm.
            _ => kernel_l1(g.weight(p).expect("weighted layer").as_tensor(), spec.layers[p].kind)?,
        };
        layers.push(LayerScores { layer: p, scores });
    }
    Ok(ImportanceScores { method, layers })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerPlan {
    pub layer: usize,
    pub original: usize,
    /// Sorted, non-empty.
    pub kept: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruningPlan {
    pub plan_version: u32,
    pub network: String,
    pub layers: Vec<LayerPlan>,
    pub original_macs: u64,
    pub target_macs: u64,
    pub achieved_macs: u64,
}

impl PruningPlan {
    pub fn identity(spec: &NetworkSpec) -> Result<Self> {
        let macs = spec_macs(spec)?;
        Ok(PruningPlan {
            plan_version: PRUNING_PLAN_VERSION,
            network: spec.name.clone(),
            layers: spec
                .parameterized_layers()
                .into_iter()
                .map(|p| LayerPlan {
                    layer: p,
                    original: spec.layers[p].out_channels,
                    kept: (0..spec.layers[p].out_channels).collect(),
                })
                .collect(),
            original_macs: macs,
            target_macs: macs,
            achieved_macs: macs,
        })
    }

    pub fn kept(&self, layer: usize) -> Option<&[usize]> {
        self.layers
            .iter()
            .find(|l| l.layer == layer)
            .map(|l| l.kept.as_slice())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let plan: PruningPlan = serde_json::from_str(text)?;
        if plan.plan_version != PRUNING_PLAN_VERSION {
            return Err(GccError::PlanMismatch(format!(
                "unsupported plan_version {}",
                plan.plan_version
            )));
        }
        Ok(plan)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        write_string(path, &self.to_json()?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&read_to_string(path)?)
    }
}

fn with_widths(spec: &NetworkSpec, widths: &[(usize, usize)]) -> Result<NetworkSpec> {
    let mut out = spec.clone();
    for &(layer, w) in widths {
        out.layers[layer].out_channels = w;
    }
    out.rechain()?;
    Ok(out)
}

/// Greedy global removal: kernels of prunable layers are visited in
/// ascending `(score, layer, kernel)` order and removed unless their layer
/// is down to one kernel, until MACs drop to `target_macs`.
pub fn prune_to_budget(
    g_spec: &NetworkSpec,
    scores: &ImportanceScores,
    target_macs: u64,
) -> Result<PruningPlan> {
    let original = spec_macs(g_spec)?;
    let mut plan = PruningPlan::identity(g_spec)?;
    plan.target_macs = target_macs;
    if original <= target_macs {
        return Ok(plan);
    }
    let prunable = prunable_layers(g_spec);
    let floor: Vec<(usize, usize)> = prunable.iter().map(|&p| (p, 1)).collect();
    let minimum = spec_macs(&with_widths(g_spec, &floor)?)?;
    if minimum > target_macs {
        return Err(GccError::UnachievableBudget {
            target: target_macs,
            minimum,
        });
    }
    let mut order: Vec<(f64, usize, usize)> = Vec::new();
    for &p in &prunable {
        let s = scores.for_layer(p).ok_or_else(|| {
            GccError::PlanMismatch(format!("no importance scores for layer {p}"))
        })?;
        if s.len() != g_spec.layers[p].out_channels {
            return Err(GccError::PlanMismatch(format!(
                "layer {p} has {} kernels but {} scores",
                g_spec.layers[p].out_channels,
                s.len()
            )));
        }
        order.extend(s.iter().enumerate().map(|(k, &v)| (v, p, k)));
    }
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut kept: Vec<Vec<bool>> = prunable
        .iter()
        .map(|&p| vec![true; g_spec.layers[p].out_channels])
        .collect();
    let slot = |layer: usize| prunable.iter().position(|&p| p == layer).expect("prunable");
    let mut current = original;
    for &(_, layer, kernel) in &order {
        if current <= target_macs {
            break;
        }
        let s = slot(layer);
        if kept[s].iter().filter(|&&k| k).count() == 1 {
            continue;
        }
        kept[s][kernel] = false;
        let widths: Vec<(usize, usize)> = prunable
            .iter()
            .zip(&kept)
            .map(|(&p, k)| (p, k.iter().filter(|&&x| x).count()))
            .collect();
        current = spec_macs(&with_widths(g_spec, &widths)?)?;
    }
    for lp in &mut plan.layers {
        if let Some(s) = prunable.iter().position(|&p| p == lp.layer) {
            lp.kept = (0..lp.original).filter(|&k| kept[s][k]).collect();
        }
    }
    plan.achieved_macs = current;
    Ok(plan)
}

/// Fresh spec with the plan's channel counts; parameters are not carried
/// over.
pub fn apply_plan(g_spec: &NetworkSpec, plan: &PruningPlan) -> Result<NetworkSpec> {
    let params = g_spec.parameterized_layers();
    if plan.layers.len() != params.len() {
        return Err(GccError::PlanMismatch(format!(
            "plan covers {} layers, spec has {} parameterized layers",
            plan.layers.len(),
            params.len()
        )));
    }
    let mut widths = Vec::new();
    for (lp, &p) in plan.layers.iter().zip(&params) {
        let original = g_spec.layers[p].out_channels;
        if lp.layer != p || lp.original != original {
            return Err(GccError::PlanMismatch(format!(
                "plan entry for layer {} ({} kernels) vs spec layer {p} ({original} kernels)",
                lp.layer, lp.original
            )));
        }
        let sorted = lp.kept.windows(2).all(|w| w[0] < w[1]);
        if lp.kept.is_empty() || !sorted || lp.kept.iter().any(|&k| k >= original) {
            return Err(GccError::PlanMismatch(format!(
                "kept set of layer {p} must be a sorted non-empty subset of 0..{original}"
            )));
        }
        widths.push((p, lp.kept.len()));
    }
    let mut out = with_widths(g_spec, &widths)?;
    if out.layers != g_spec.layers {
        out.name = format!("{}-pruned", g_spec.name);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRatio {
    pub layer: usize,
    pub original: usize,
    pub kept: usize,
    pub ratio: f64,
}

/// `removed / original` per parameterized layer.
pub fn ratio_report(plan: &PruningPlan) -> Vec<LayerRatio> {
    plan.layers
        .iter()
        .map(|l| LayerRatio {
            layer: l.layer,
            original: l.original,
            kept: l.kept.len(),
            ratio: (l.original - l.kept.len()) as f64 / l.original as f64,
        })
        .collect()
}

pub fn ratios_csv(ratios: &[LayerRatio]) -> String {
    let mut out = String::from("layer,original,kept,ratio\n");
    for r in ratios {
        out.push_str(&format!("{},{},{},{:.6}\n", r.layer, r.original, r.kept, r.ratio));
    }
    out
}

pub fn ratios_table(ratios: &[LayerRatio]) -> String {
    let mut out = format!("{:>6} {:>9} {:>6} {:>7}\n", "layer", "original", "kept", "ratio");
    for r in ratios {
        out.push_str(&format!(
            "{:>6} {:>9} {:>6} {:>7.3}\n",
            r.layer, r.original, r.kept, r.ratio
        ));
    }
    out
}

#[derive(Debug, Clone)]
pub struct SparsityOptions {
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub batch_size: usize,
    pub l1_coeff: f64,
    pub method: PruneMethod,
    pub loss: GanLossKind,
    pub g_opt: AdamConfig,
    pub d_opt: AdamConfig,
}

/// Sum of |·| over the regularized parameters.
pub fn l1_penalty(g: &Network, method: PruneMethod) -> Result<Tensor> {
    let spec = g.spec();
    let mut terms = Vec::new();
    for p in spec.parameterized_layers() {
        let t = match method {
            PruneMethod::Slimming => match following_bn(spec, p) {
                Some(bn) => g.bn_scale(bn).expect("bn").as_tensor().clone(),
                None => continue,
            },
            PruneMethod::L1norm => g.weight(p).expect("weight").as_tensor().flatten_all()?,
        };
        terms.push(abs_subgrad(&t)?.sum_all()?);
    }
    if terms.is_empty() {
        return Err(GccError::Config("no parameters to regularize".into()));
    }
    Ok(Tensor::stack(&terms, 0)?.sum_all()?)
}

/// Adversarial training of the teacher pair with an L1 penalty added to the
/// generator objective. Networks are trained in place; per-step losses are
/// returned.
pub fn sparsity_regularized_train(
    teacher_g: &Network,
    teacher_d: &Network,
    data: &mut dyn DataSource,
    opts: &SparsityOptions,
) -> Result<Vec<AdversarialLosses>> {
    if opts.method == PruneMethod::Slimming
        && !teacher_g.spec().layers.iter().any(|l| l.kind == LayerKind::BatchNorm)
    {
        return Err(GccError::Config(format!(
            "slimming requires batch norm layers in `{}`",
            teacher_g.spec().name
        )));
    }
    let mut g_opt = Adam::new(teacher_g.vars(), opts.g_opt);
    let mut d_opt = Adam::new(teacher_d.vars(), opts.d_opt);
    let mut history = Vec::new();
    let penalty = |g: &Network| -> Result<Option<Tensor>> {
        if opts.l1_coeff == 0.0 {
            Ok(None)
        } else {
            Ok(Some((l1_penalty(g, opts.method)? * opts.l1_coeff)?))
        }
    };
    for _ in 0..opts.epochs {
        for _ in 0..opts.steps_per_epoch {
            let z = data.noise(opts.batch_size)?;
            let x = data.real(opts.batch_size)?;
            let losses = adversarial_step(
                teacher_g,
                teacher_d,
                &mut g_opt,
                &mut d_opt,
                &z,
                &x,
                opts.loss,
                &penalty,
            )?;
            history.push(losses);
        }
    }
    Ok(history)
}
