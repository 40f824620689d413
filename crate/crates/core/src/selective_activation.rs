//! Selective-activation discriminator.
//!
//! Every gated kernel `j` of discriminator layer `i` owns a retention factor
//! `α_ij ∈ [0, 1]`. The forward pass multiplies the kernel's output channel
//! by the binary gate `I_ij = [α_ij ≥ τ]`; in the backward pass the gate is
//! treated as the identity, so `∂L/∂α_ij = ∂L/∂I_ij`.
//!
//! The factors are trained on
//!
//! ```text
//! L_local  = |L_G^S - L_Dfake^S|
//! L_global = |L_local - L_target|
//! L_arch   = L_D^S + L_global
//! ```
//!
//! where `L_target` is an exponential moving average of the teacher gap
//! `|L_G^T - L_Dfake^T|` with `β = epoch / epochs`. Weights and factors are
//! updated alternately, each with the other group frozen.

use candle_core::{Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::error::{GccError, Result};
use crate::metrics::macs::spec_macs;
use crate::model_zoo::loss::abs_subgrad;
use crate::model_zoo::network::{device, flatten_logits, gate_points, DTYPE};
use crate::model_zoo::{
    discriminator_loss, generator_loss, ForwardOptions, GanLossKind, Network, NetworkSpec,
};
use crate::trainer::optim::{Adam, AdamConfig};

pub const DEFAULT_TAU: f64 = 0.1;
pub const ALPHA_INIT: f64 = 1.0;

#[derive(Debug, Clone)]
pub struct RetentionFactors {
    alphas: Vec<Var>,
    tau: f64,
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(GccError::InvalidInput(format!("τ must lie in (0, 1), got {tau}")));
    }
    Ok(())
}

impl RetentionFactors {
    /// All factors at 1.0, one vector per gated layer of `d_spec`.
    pub fn new(d_spec: &NetworkSpec, tau: f64) -> Result<Self> {
        let values = gate_points(d_spec)
            .iter()
            .map(|g| vec![ALPHA_INIT; g.channels])
            .collect();
        Self::from_values(values, tau)
    }

    pub fn from_values(values: Vec<Vec<f64>>, tau: f64) -> Result<Self> {
        check_tau(tau)?;
        let mut alphas = Vec::with_capacity(values.len());
        for v in values {
            if v.is_empty() || v.iter().any(|a| !(0.0..=1.0).contains(a)) {
                return Err(GccError::InvalidInput(
                    "retention factors must be non-empty and within [0, 1]".into(),
                ));
            }
            alphas.push(Var::from_vec(v.clone(), v.len(), &device())?);
        }
        Ok(RetentionFactors { alphas, tau })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    pub fn vars(&self) -> &[Var] {
        &self.alphas
    }

    pub fn values(&self) -> Result<Vec<Vec<f64>>> {
        self.alphas
            .iter()
            .map(|a| Ok(a.as_tensor().to_vec1()?))
            .collect()
    }

    pub fn set_values(&self, values: &[Vec<f64>]) -> Result<()> {
        if values.len() != self.alphas.len() {
            return Err(GccError::Shape("retention factor layer count mismatch".into()));
        }
        for (a, v) in self.alphas.iter().zip(values) {
            a.set(&Tensor::from_vec(v.clone(), v.len(), &device())?)?;
        }
        self.clip()
    }

    /// Clamp every factor into [0, 1].
    pub fn clip(&self) -> Result<()> {
        for a in &self.alphas {
            a.set(&a.as_tensor().clamp(0.0, 1.0)?)?;
        }
        Ok(())
    }

    /// Checks the factor vectors against the gated layers of `d_spec`.
    pub fn check_spec(&self, d_spec: &NetworkSpec) -> Result<()> {
        let points = gate_points(d_spec);
        let ok = points.len() == self.alphas.len()
            && points
                .iter()
                .zip(&self.alphas)
                .all(|(p, a)| a.as_tensor().elem_count() == p.channels);
        if !ok {
            return Err(GccError::Shape(format!(
                "retention factors do not match the gated layers of `{}`",
                d_spec.name
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateMask {
    pub layers: Vec<Vec<bool>>,
}

impl GateMask {
    pub fn ones(d_spec: &NetworkSpec) -> Self {
        GateMask {
            layers: gate_points(d_spec)
                .iter()
                .map(|g| vec![true; g.channels])
                .collect(),
        }
    }

    pub fn active_counts(&self) -> Vec<usize> {
        self.layers
            .iter()
            .map(|l| l.iter().filter(|&&b| b).count())
            .collect()
    }

    pub fn as_f64(&self) -> Vec<Vec<f64>> {
        self.layers
            .iter()
            .map(|l| l.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())
            .collect()
    }

    /// Constant gate tensors (no gradient path).
    pub fn tensors(&self) -> Result<Vec<Tensor>> {
        self.as_f64()
            .into_iter()
            .map(|v| {
                let n = v.len();
                Ok(Tensor::from_vec(v, n, &device())?)
            })
            .collect()
    }
}

/// `I_ij = 1` iff `α_ij ≥ τ`.
pub fn gate_mask(alpha: &RetentionFactors) -> Result<GateMask> {
    let layers = alpha
        .values()?
        .into_iter()
        .map(|v| v.into_iter().map(|a| a >= alpha.tau).collect())
        .collect();
    Ok(GateMask { layers })
}

/// The mask used in forward passes: a layer whose kernels are all gated off
/// gets its highest-α kernel (lowest index on ties) switched back on.
/// Returns the repaired layer indices alongside.
pub fn effective_mask(alpha: &RetentionFactors) -> Result<(GateMask, Vec<usize>)> {
    let mut mask = gate_mask(alpha)?;
    let values = alpha.values()?;
    let mut forced = Vec::new();
    for (i, (m, a)) in mask.layers.iter_mut().zip(&values).enumerate() {
        if m.iter().any(|&b| b) {
            continue;
        }
        let best = (0..a.len())
            .fold(0, |best, j| if a[j] > a[best] { j } else { best });
        m[best] = true;
        forced.push(i);
        log::warn!("all kernels of gated layer {i} fell below τ; keeping kernel {best}");
    }
    Ok((mask, forced))
}

/// Gate tensors whose value is the binary mask and whose gradient flows to α
/// unchanged: `I + (α - stopgrad(α))`.
pub fn ste_gates(alpha: &RetentionFactors, mask: &GateMask) -> Result<Vec<Tensor>> {
    if mask.layers.len() != alpha.len() {
        return Err(GccError::Shape("mask and retention factors differ in layer count".into()));
    }
    mask.tensors()?
        .into_iter()
        .zip(alpha.vars())
        .map(|(m, a)| {
            if m.dims() != a.as_tensor().dims() {
                return Err(GccError::Shape("mask and retention factor lengths differ".into()));
            }
            let a = a.as_tensor();
            Ok((m + (a - a.detach())?)?)
        })
        .collect()
}

/// `O'_j = I_j · O_j` over dimension 1 of a `[B, C]` or `[B, C, H, W]` map.
pub fn gated_forward(features: &Tensor, mask: &[bool]) -> Result<Tensor> {
    let dims = features.dims();
    if dims.len() < 2 || dims[1] != mask.len() {
        return Err(GccError::Shape(format!(
            "mask of length {} for features {:?}",
            mask.len(),
            dims
        )));
    }
    let v: Vec<f64> = mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let mut shape = vec![1; dims.len()];
    shape[1] = mask.len();
    let m = Tensor::from_vec(v, shape, &device())?;
    Ok(features.broadcast_mul(&m)?)
}

/// The straight-through backward map from the gate to α: the identity.
pub fn ste_gradient(upstream_grad_wrt_mask: &Tensor) -> Tensor {
    upstream_grad_wrt_mask.clone()
}

pub fn local_capacity_loss(l_g_s: &Tensor, l_dfake_s: &Tensor) -> Result<Tensor> {
    abs_subgrad(&(l_g_s - l_dfake_s)?)
}

pub fn global_coordination_loss(l_local: &Tensor, l_target: f64) -> Result<Tensor> {
    abs_subgrad(&(l_local - l_target)?)
}

pub fn arch_loss(l_d_s: &Tensor, l_global: &Tensor) -> Result<Tensor> {
    Ok((l_d_s + l_global)?)
}

fn scalar(x: f64) -> Result<Tensor> {
    Ok(Tensor::new(x, &device())?.to_dtype(DTYPE)?)
}

/// Scalar forms of the three objectives.
pub fn local_capacity(l_g_s: f64, l_dfake_s: f64) -> Result<f64> {
    Ok(local_capacity_loss(&scalar(l_g_s)?, &scalar(l_dfake_s)?)?.to_scalar()?)
}

pub fn global_coordination(l_local: f64, l_target: f64) -> Result<f64> {
    Ok(global_coordination_loss(&scalar(l_local)?, l_target)?.to_scalar()?)
}

pub fn arch(l_d_s: f64, l_global: f64) -> Result<f64> {
    Ok(arch_loss(&scalar(l_d_s)?, &scalar(l_global)?)?.to_scalar()?)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepRecord {
    pub l_g_s: f64,
    pub l_dfake_s: f64,
    pub l_g_t: f64,
    pub l_dfake_t: f64,
    pub l_local: f64,
    pub l_global: f64,
    pub l_target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumState {
    pub l_target: f64,
    pub epoch_current: usize,
    pub epoch_total: usize,
    pub history: Vec<StepRecord>,
}

impl EquilibriumState {
    pub fn new(epoch_total: usize) -> Result<Self> {
        if epoch_total == 0 {
            return Err(GccError::InvalidInput("epoch_total must be ≥ 1".into()));
        }
        Ok(EquilibriumState {
            l_target: 0.0,
            epoch_current: 0,
            epoch_total,
            history: Vec::new(),
        })
    }

    pub fn beta(&self) -> f64 {
        self.epoch_current as f64 / self.epoch_total as f64
    }

    pub fn set_epoch(&mut self, epoch: usize) -> Result<()> {
        if epoch > self.epoch_total {
            return Err(GccError::InvalidInput(format!(
                "epoch {epoch} beyond total {}",
                self.epoch_total
            )));
        }
        self.epoch_current = epoch;
        Ok(())
    }

    /// `L_target ← β·L_target + (1 − β)·gap`.
    pub fn ema_update(&mut self, current_gap: f64) -> Result<f64> {
        if self.epoch_total == 0 {
            return Err(GccError::InvalidInput("epoch_total must be ≥ 1".into()));
        }
        if self.epoch_current > self.epoch_total {
            return Err(GccError::InvalidInput("epoch_current exceeds epoch_total".into()));
        }
        if !current_gap.is_finite() || current_gap < 0.0 {
            return Err(GccError::InvalidInput(format!("teacher gap {current_gap} is not a finite non-negative value")));
        }
        let beta = self.beta();
        self.l_target = beta * self.l_target + (1.0 - beta) * current_gap;
        Ok(self.l_target)
    }

    pub fn record(&mut self, r: StepRecord) {
        self.history.push(r);
    }
}

/// Which terms enter the α objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectiveOptions {
    /// When false, α stays at its initial value and every gate is open.
    pub selective: bool,
    /// When false, `L_arch = L_D^S`.
    pub global_constraint: bool,
}

impl Default for SelectiveOptions {
    fn default() -> Self {
        SelectiveOptions {
            selective: true,
            global_constraint: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WeightStepLosses {
    pub total: f64,
    pub real: f64,
    pub fake: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ArchStepLosses {
    pub l_d: f64,
    pub l_g: f64,
    pub l_dfake: f64,
    pub l_local: f64,
    pub l_global: f64,
    pub l_arch: f64,
}

/// A discriminator together with its retention factors and the two
/// optimizers of the bilevel scheme.
pub struct SelectiveDiscriminator {
    pub net: Network,
    pub alpha: RetentionFactors,
    pub loss: GanLossKind,
    pub options: SelectiveOptions,
    weight_opt: Adam,
    alpha_opt: Adam,
}

impl SelectiveDiscriminator {
    pub fn new(
        net: Network,
        tau: f64,
        loss: GanLossKind,
        options: SelectiveOptions,
        weight_opt: AdamConfig,
        alpha_opt: AdamConfig,
    ) -> Result<Self> {
        let alpha = RetentionFactors::new(net.spec(), tau)?;
        Ok(SelectiveDiscriminator {
            weight_opt: Adam::new(net.vars(), weight_opt),
            alpha_opt: Adam::new(alpha.vars().to_vec(), alpha_opt),
            net,
            alpha,
            loss,
            options,
        })
    }

    pub fn weight_optimizer(&mut self) -> &mut Adam {
        &mut self.weight_opt
    }

    pub fn alpha_optimizer(&mut self) -> &mut Adam {
        &mut self.alpha_opt
    }

    /// Mask for the next forward passes; all ones when selection is off.
    pub fn current_mask(&self) -> Result<GateMask> {
        if !self.options.selective {
            return Ok(GateMask::ones(self.net.spec()));
        }
        Ok(effective_mask(&self.alpha)?.0)
    }

    /// Logits with the given mask as constant gates.
    pub fn logits(&self, x: &Tensor, mask: &GateMask, frozen: bool) -> Result<Tensor> {
        let gates = mask.tensors()?;
        let out = self.net.forward_with(x, ForwardOptions::gated(&gates, frozen))?;
        flatten_logits(&out.output)
    }

    /// One update of the discriminator weights on `L_D`, α frozen.
    pub fn weight_step(&mut self, real: &Tensor, fake: &Tensor, mask: &GateMask) -> Result<WeightStepLosses> {
        let r = self.logits(real, mask, false)?;
        let f = self.logits(&fake.detach(), mask, false)?;
        let l = discriminator_loss(&r, &f, self.loss)?;
        let grads = l.total.backward()?;
        self.weight_opt.step(&grads)?;
        Ok(WeightStepLosses {
            total: l.total.to_scalar()?,
            real: l.real.to_scalar()?,
            fake: l.fake.to_scalar()?,
        })
    }

    /// Evaluates `L_arch` with straight-through gates and frozen weights.
    pub fn arch_objective(&self, real: &Tensor, fake: &Tensor, l_target: f64) -> Result<(Tensor, ArchStepLosses)> {
        let (mask, _) = effective_mask(&self.alpha)?;
        let gates = ste_gates(&self.alpha, &mask)?;
        let fwd = |x: &Tensor| -> Result<Tensor> {
            let out = self.net.forward_with(x, ForwardOptions::gated(&gates, true))?;
            flatten_logits(&out.output)
        };
        let r = fwd(real)?;
        let f = fwd(&fake.detach())?;
        let l_d = discriminator_loss(&r, &f, self.loss)?;
        let l_g = generator_loss(&f, self.loss)?;
        let l_local = local_capacity_loss(&l_g, &l_d.fake)?;
        let l_global = global_coordination_loss(&l_local, l_target)?;
        let total = if self.options.global_constraint {
            arch_loss(&l_d.total, &l_global)?
        } else {
            l_d.total.clone()
        };
        let losses = ArchStepLosses {
            l_d: l_d.total.to_scalar()?,
            l_g: l_g.to_scalar()?,
            l_dfake: l_d.fake.to_scalar()?,
            l_local: l_local.to_scalar()?,
            l_global: l_global.to_scalar()?,
            l_arch: total.to_scalar()?,
        };
        Ok((total, losses))
    }

    /// One update of α on `L_arch`, weights frozen, then clipping.
    pub fn alpha_step(&mut self, real: &Tensor, fake: &Tensor, l_target: f64) -> Result<ArchStepLosses> {
        let (total, losses) = self.arch_objective(real, fake, l_target)?;
        if self.options.selective {
            let grads = total.backward()?;
            self.alpha_opt.step(&grads)?;
            self.alpha.clip()?;
        }
        Ok(losses)
    }

    /// `t` weight steps on the first batch, then one α step on the second.
    pub fn bilevel_step(
        &mut self,
        batch1: (&Tensor, &Tensor),
        batch2: (&Tensor, &Tensor),
        t: usize,
        l_target: f64,
    ) -> Result<(Vec<WeightStepLosses>, ArchStepLosses)> {
        let mask = self.current_mask()?;
        let mut w = Vec::with_capacity(t);
        for _ in 0..t {
            w.push(self.weight_step(batch1.0, batch1.1, &mask)?);
        }
        let a = self.alpha_step(batch2.0, batch2.1, l_target)?;
        Ok((w, a))
    }
}

/// MACs of the discriminator restricted to its active channels.
pub fn active_macs(d_spec: &NetworkSpec, mask: &GateMask) -> Result<u64> {
    let points = gate_points(d_spec);
    if points.len() != mask.layers.len()
        || points.iter().zip(&mask.layers).any(|(p, m)| p.channels != m.len())
    {
        return Err(GccError::Shape(format!(
            "mask does not match the gated layers of `{}`",
            d_spec.name
        )));
    }
    let mut reduced = d_spec.clone();
    for (p, active) in points.iter().zip(mask.active_counts()) {
        reduced.layers[p.param_layer].out_channels = active;
    }
    if reduced.layers.iter().any(|l| l.out_channels == 0) {
        // A fully gated layer stops all downstream computation.
        let first = points
            .iter()
            .zip(mask.active_counts())
            .position(|(_, a)| a == 0)
            .expect("zero layer");
        let mut upstream = d_spec.clone();
        let cut = points[first].param_layer;
        for (p, active) in points.iter().zip(mask.active_counts()).take(first) {
            upstream.layers[p.param_layer].out_channels = active;
        }
        upstream.layers.truncate(cut);
        if upstream.layers.is_empty() {
            return Ok(0);
        }
        upstream.rechain()?;
        return spec_macs(&upstream);
    }
    reduced.rechain()?;
    spec_macs(&reduced)
}
