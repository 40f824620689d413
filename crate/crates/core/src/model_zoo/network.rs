//! Differentiable networks instantiated from a [`NetworkSpec`].
//!
//! Parameters live in candle [`Var`]s so the trainer can update disjoint
//! parameter groups independently. Every tensor is `f64` on the CPU.

use std::collections::HashMap;

use candle_core::{DType, Device, Tensor, Var, D};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::spec::{
    Activation, FeatureShape, LayerKind, LayerSpec, NetworkSpec, SkipMode, UpsampleMode,
    LEAKY_RELU_SLOPE,
};
use crate::error::{GccError, Result};

pub const DTYPE: DType = DType::F64;
pub const BN_EPS: f64 = 1e-5;
/// Standard deviation of the normal initializer for conv weights.
pub const CONV_INIT_STD: f64 = 0.02;

pub fn device() -> Device {
    Device::Cpu
}

#[derive(Debug)]
enum LayerParams {
    None,
    Weighted { weight: Var, bias: Option<Var> },
    Norm { scale: Var, shift: Var },
}

/// Where a per-kernel gate multiplies the feature map.
///
/// The gate of parameterized layer `param_layer` is applied after the
/// trailing batch-norm/activation layers of its block (`apply_after`), so a
/// closed gate removes the kernel from everything downstream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GatePoint {
    pub param_layer: usize,
    pub apply_after: usize,
    pub channels: usize,
}

#[derive(Debug, Default, Clone, Copy)]
pub struct ForwardOptions<'a> {
    /// One `[channels]` multiplier per gate point.
    pub gates: Option<&'a [Tensor]>,
    /// Detach every parameter so no gradient reaches this network.
    pub frozen: bool,
}

impl<'a> ForwardOptions<'a> {
    pub fn frozen() -> Self {
        ForwardOptions {
            gates: None,
            frozen: true,
        }
    }

    pub fn gated(gates: &'a [Tensor], frozen: bool) -> Self {
        ForwardOptions {
            gates: Some(gates),
            frozen,
        }
    }
}

#[derive(Debug)]
pub struct ForwardOutput {
    pub output: Tensor,
    pub taps: HashMap<String, Tensor>,
}

impl ForwardOutput {
    pub fn tap(&self, name: &str) -> Result<&Tensor> {
        self.taps
            .get(name)
            .ok_or_else(|| GccError::InvalidInput(format!("forward pass exposed no tap `{name}`")))
    }
}

/// Serialized parameter tensor (checkpoints).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamData {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug)]
pub struct Network {
    spec: NetworkSpec,
    params: Vec<LayerParams>,
    gate_points: Vec<GatePoint>,
}

fn var_from(values: Vec<f64>, shape: &[usize]) -> Result<Var> {
    Ok(Var::from_tensor(&Tensor::from_vec(values, shape, &device())?)?)
}

/// Builds a network with deterministic initialization:
/// conv and transposed-conv weights ~ N(0, 0.02), conv biases 0, linear
/// layers use the uniform ±1/√fan_in rule, batch-norm scale 1 and shift 0.
pub fn build_network(spec: &NetworkSpec, seed: u64) -> Result<Network> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, CONV_INIT_STD).expect("valid std");
    let mut params = Vec::with_capacity(spec.layers.len());
    for layer in &spec.layers {
        let p = match layer.kind {
            LayerKind::Conv | LayerKind::TransposedConv => {
                let k = layer.kernel_size;
                let shape = if layer.kind == LayerKind::Conv {
                    [layer.out_channels, layer.in_channels, k, k]
                } else {
                    [layer.in_channels, layer.out_channels, k, k]
                };
                let n = shape.iter().product();
                let w: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
                let bias = if layer.has_bias {
                    Some(var_from(vec![0.0; layer.out_channels], &[layer.out_channels])?)
                } else {
                    None
                };
                LayerParams::Weighted {
                    weight: var_from(w, &shape)?,
                    bias,
                }
            }
            LayerKind::Linear => {
                let bound = 1.0 / (layer.in_channels as f64).sqrt();
                let n = layer.in_channels * layer.out_channels;
                let w: Vec<f64> = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
                let bias = if layer.has_bias {
                    let b = (0..layer.out_channels)
                        .map(|_| rng.random_range(-bound..bound))
                        .collect();
                    Some(var_from(b, &[layer.out_channels])?)
                } else {
                    None
                };
                LayerParams::Weighted {
                    weight: var_from(w, &[layer.out_channels, layer.in_channels])?,
                    bias,
                }
            }
            LayerKind::BatchNorm => LayerParams::Norm {
                scale: var_from(vec![1.0; layer.out_channels], &[layer.out_channels])?,
                shift: var_from(vec![0.0; layer.out_channels], &[layer.out_channels])?,
            },
            LayerKind::Activation | LayerKind::Upsample => LayerParams::None,
        };
        params.push(p);
    }
    Ok(Network {
        gate_points: gate_points(spec),
        spec: spec.clone(),
        params,
    })
}

/// Every parameterized layer except the last one (the output layer) gets a
/// gate point.
pub fn gate_points(spec: &NetworkSpec) -> Vec<GatePoint> {
    let param_layers = spec.parameterized_layers();
    let Some((_, gated)) = param_layers.split_last() else {
        return Vec::new();
    };
    gated
        .iter()
        .map(|&p| {
            let mut end = p;
            while let Some(next) = spec.layers.get(end + 1) {
                let absorbs = matches!(next.kind, LayerKind::BatchNorm | LayerKind::Activation)
                    && next.skip.is_none();
                if !absorbs {
                    break;
                }
                end += 1;
            }
            GatePoint {
                param_layer: p,
                apply_after: end,
                channels: spec.layers[p].out_channels,
            }
        })
        .collect()
}

fn channel_broadcast(v: &Tensor, rank: usize) -> Result<Tensor> {
    let c = v.dims1()?;
    Ok(match rank {
        2 => v.reshape((1, c))?,
        4 => v.reshape((1, c, 1, 1))?,
        r => return Err(GccError::Shape(format!("unsupported feature rank {r}"))),
    })
}

fn batch_norm(x: &Tensor, scale: &Tensor, shift: &Tensor) -> Result<Tensor> {
    let rank = x.rank();
    let dims: Vec<usize> = if rank == 2 { vec![0] } else { vec![0, 2, 3] };
    let mean = x.mean_keepdim(dims.as_slice())?;
    let centered = x.broadcast_sub(&mean)?;
    let var = centered.sqr()?.mean_keepdim(dims.as_slice())?;
    let normed = centered.broadcast_div(&(var + BN_EPS)?.sqrt()?)?;
    Ok(normed
        .broadcast_mul(&channel_broadcast(scale, rank)?)?
        .broadcast_add(&channel_broadcast(shift, rank)?)?)
}

pub fn apply_activation(x: &Tensor, act: Activation) -> Result<Tensor> {
    Ok(match act {
        Activation::Relu => x.relu()?,
        Activation::LeakyRelu => (x.relu()? - (x.neg()?.relu()? * LEAKY_RELU_SLOPE)?)?,
        Activation::Tanh => x.tanh()?,
        Activation::Sigmoid => ((x.neg()?.exp()? + 1.0)?.recip())?,
    })
}

fn pixel_shuffle(x: &Tensor, r: usize) -> Result<Tensor> {
    let (b, c, h, w) = x.dims4()?;
    let oc = c / (r * r);
    Ok(x
        .reshape((b, oc, r, r, h, w))?
        .permute((0, 1, 4, 2, 5, 3))?
        .reshape((b, oc, h * r, w * r))?)
}

impl Network {
    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn gate_points(&self) -> &[GatePoint] {
        &self.gate_points
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward_with(x, ForwardOptions::default())?.output)
    }

    pub fn forward_taps(&self, x: &Tensor) -> Result<ForwardOutput> {
        self.forward_with(x, ForwardOptions::default())
    }

    pub fn forward_with(&self, x: &Tensor, opts: ForwardOptions<'_>) -> Result<ForwardOutput> {
        let input = self.spec.input()?;
        let dims = x.dims();
        if dims.len() != input.dims().len() + 1 || dims[1..] != input.dims()[..] {
            return Err(GccError::Shape(format!(
                "`{}` expects [batch, {:?}], got {:?}",
                self.spec.name,
                input.dims(),
                dims
            )));
        }
        if let Some(gates) = opts.gates {
            if gates.len() != self.gate_points.len() {
                return Err(GccError::Shape(format!(
                    "{} gate vectors for {} gated layers",
                    gates.len(),
                    self.gate_points.len()
                )));
            }
            for (g, p) in gates.iter().zip(&self.gate_points) {
                if g.dims() != [p.channels] {
                    return Err(GccError::Shape(format!(
                        "gate for layer {} has shape {:?}, expected [{}]",
                        p.param_layer,
                        g.dims(),
                        p.channels
                    )));
                }
            }
        }
        let p = |v: &Var| -> Tensor {
            if opts.frozen {
                v.as_tensor().detach()
            } else {
                v.as_tensor().clone()
            }
        };
        let mut taps = HashMap::new();
        let mut x = x.clone();
        for (i, (layer, params)) in self.spec.layers.iter().zip(&self.params).enumerate() {
            x = self.layer_forward(layer, params, &x, &p)?;
            if let Some(skip) = &layer.skip {
                let other: &Tensor = taps.get(&skip.from).expect("validated skip source");
                x = match skip.mode {
                    SkipMode::Add => (&x + other)?,
                    SkipMode::Concat => Tensor::cat(&[&x, other], 1)?,
                };
            }
            if let Some(gates) = opts.gates {
                if let Some(k) = self.gate_points.iter().position(|g| g.apply_after == i) {
                    x = x.broadcast_mul(&channel_broadcast(&gates[k], x.rank())?)?;
                }
            }
            if let Some(tap) = &layer.tap_name {
                taps.insert(tap.clone(), x.clone());
            }
        }
        Ok(ForwardOutput { output: x, taps })
    }

    fn layer_forward(
        &self,
        layer: &LayerSpec,
        params: &LayerParams,
        x: &Tensor,
        p: &dyn Fn(&Var) -> Tensor,
    ) -> Result<Tensor> {
        Ok(match (layer.kind, params) {
            (LayerKind::Conv, LayerParams::Weighted { weight, bias }) => {
                let y = x.conv2d(&p(weight), layer.padding, layer.stride, 1, 1)?;
                match bias {
                    Some(b) => y.broadcast_add(&channel_broadcast(&p(b), 4)?)?,
                    None => y,
                }
            }
            (LayerKind::TransposedConv, LayerParams::Weighted { weight, bias }) => {
                let y = x.conv_transpose2d(
                    &p(weight),
                    layer.padding,
                    layer.output_padding,
                    layer.stride,
                    1,
                )?;
                match bias {
                    Some(b) => y.broadcast_add(&channel_broadcast(&p(b), 4)?)?,
                    None => y,
                }
            }
            (LayerKind::Linear, LayerParams::Weighted { weight, bias }) => {
                let flat = if x.rank() > 2 { x.flatten_from(1)? } else { x.clone() };
                let y = flat.matmul(&p(weight).t()?)?;
                match bias {
                    Some(b) => y.broadcast_add(&p(b))?,
                    None => y,
                }
            }
            (LayerKind::BatchNorm, LayerParams::Norm { scale, shift }) => {
                batch_norm(x, &p(scale), &p(shift))?
            }
            (LayerKind::Activation, _) => {
                apply_activation(x, layer.activation.expect("validated activation"))?
            }
            (LayerKind::Upsample, _) => match layer.upsample.unwrap_or_default() {
                UpsampleMode::Nearest => {
                    let (_, _, h, w) = x.dims4()?;
                    x.upsample_nearest2d(h * layer.stride, w * layer.stride)?
                }
                UpsampleMode::PixelShuffle => pixel_shuffle(x, layer.stride)?,
            },
            (kind, _) => unreachable!("parameters built for {kind:?}"),
        })
    }

    /// All trainable variables in layer order.
    pub fn vars(&self) -> Vec<Var> {
        self.named_vars().into_iter().map(|(_, v)| v).collect()
    }

    pub fn named_vars(&self) -> Vec<(String, Var)> {
        let mut out = Vec::new();
        for (i, p) in self.params.iter().enumerate() {
            match p {
                LayerParams::None => {}
                LayerParams::Weighted { weight, bias } => {
                    out.push((format!("layers.{i}.weight"), weight.clone()));
                    if let Some(b) = bias {
                        out.push((format!("layers.{i}.bias"), b.clone()));
                    }
                }
                LayerParams::Norm { scale, shift } => {
                    out.push((format!("layers.{i}.scale"), scale.clone()));
                    out.push((format!("layers.{i}.shift"), shift.clone()));
                }
            }
        }
        out
    }

    pub fn weight(&self, layer: usize) -> Option<&Var> {
        match self.params.get(layer)? {
            LayerParams::Weighted { weight, .. } => Some(weight),
            _ => None,
        }
    }

    pub fn bias(&self, layer: usize) -> Option<&Var> {
        match self.params.get(layer)? {
            LayerParams::Weighted { bias, .. } => bias.as_ref(),
            _ => None,
        }
    }

    pub fn bn_scale(&self, layer: usize) -> Option<&Var> {
        match self.params.get(layer)? {
            LayerParams::Norm { scale, .. } => Some(scale),
            _ => None,
        }
    }

    pub fn bn_shift(&self, layer: usize) -> Option<&Var> {
        match self.params.get(layer)? {
            LayerParams::Norm { shift, .. } => Some(shift),
            _ => None,
        }
    }

    /// Flattened copy of every parameter, for bitwise comparisons.
    pub fn snapshot(&self) -> Result<Vec<Vec<f64>>> {
        snapshot_vars(&self.vars())
    }

    pub fn export_params(&self) -> Result<Vec<ParamData>> {
        self.named_vars()
            .into_iter()
            .map(|(name, v)| {
                Ok(ParamData {
                    name,
                    shape: v.dims().to_vec(),
                    values: v.as_tensor().flatten_all()?.to_vec1()?,
                })
            })
            .collect()
    }

    pub fn import_params(&self, data: &[ParamData]) -> Result<()> {
        let vars = self.named_vars();
        if vars.len() != data.len() {
            return Err(GccError::Shape(format!(
                "{} stored parameters for {} variables",
                data.len(),
                vars.len()
            )));
        }
        for ((name, var), d) in vars.iter().zip(data) {
            if *name != d.name || var.dims() != d.shape.as_slice() {
                return Err(GccError::Shape(format!("parameter `{}` does not match `{name}`", d.name)));
            }
            var.set(&Tensor::from_vec(d.values.clone(), d.shape.as_slice(), &device())?)?;
        }
        Ok(())
    }

    /// Independent copy with freshly allocated variables.
    pub fn deep_clone(&self) -> Result<Network> {
        let copy = |v: &Var| -> Result<Var> { Ok(Var::from_tensor(&v.as_tensor().copy()?)?) };
        let params = self
            .params
            .iter()
            .map(|p| {
                Ok(match p {
                    LayerParams::None => LayerParams::None,
                    LayerParams::Weighted { weight, bias } => LayerParams::Weighted {
                        weight: copy(weight)?,
                        bias: bias.as_ref().map(copy).transpose()?,
                    },
                    LayerParams::Norm { scale, shift } => LayerParams::Norm {
                        scale: copy(scale)?,
                        shift: copy(shift)?,
                    },
                })
            })
            .collect::<Result<_>>()?;
        Ok(Network {
            spec: self.spec.clone(),
            params,
            gate_points: self.gate_points.clone(),
        })
    }

    pub fn output_shape(&self) -> Result<FeatureShape> {
        self.spec.output_shape()
    }

    pub fn param_count(&self) -> usize {
        self.vars().iter().map(|v| v.elem_count()).sum()
    }
}

pub fn snapshot_vars(vars: &[Var]) -> Result<Vec<Vec<f64>>> {
    vars.iter()
        .map(|v| Ok(v.as_tensor().flatten_all()?.to_vec1::<f64>()?))
        .collect()
}

/// Bitwise equality of two snapshots (NaN-safe).
pub fn bitwise_equal(a: &[Vec<f64>], b: &[Vec<f64>]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            x.len() == y.len() && x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits())
        })
}

/// Flattens a discriminator output to `[batch, n]` logits.
pub fn flatten_logits(logits: &Tensor) -> Result<Tensor> {
    Ok(if logits.rank() == 1 {
        logits.unsqueeze(D::Minus1)?
    } else {
        logits.flatten_from(1)?
    })
}
