//! Collaborative distillation from the teacher pair into the student
//! generator.
//!
//! ```text
//! d(a, b)   = γ_m · MSE(a, b) + γ_t · Texture(a, b)
//! Texture   = 1/c² · ‖G(a) − G(b)‖_F          (G = per-sample Gram matrix)
//! L_distill = Σ_i d(f_i(G_i^S(z)), G_i^T(z)) + Σ_j d(D_j^T(G^S(z)), D_j^T(G^T(z)))
//! ```
//!
//! `f_i` are learnable 1×1 maps from student to teacher channel counts. The
//! teacher networks are evaluated with detached parameters, so only the
//! student generator and the `f_i` receive gradient.

use candle_core::{Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{GccError, Result};
use crate::model_zoo::network::{device, CONV_INIT_STD};
use crate::model_zoo::{ForwardOptions, ForwardOutput, Network, NetworkSpec};

/// Below this the Frobenius norm's gradient is treated as zero.
const SQRT_FLOOR: f64 = 1e-150;

/// Per-sample Gram matrices `[B, C, C]` of a `[B, C]` or `[B, C, H, W]` map.
pub fn gram_matrix(features: &Tensor) -> Result<Tensor> {
    let dims = features.dims();
    if dims.len() < 2 || dims[1] == 0 {
        return Err(GccError::Shape(format!("gram matrix of {dims:?}")));
    }
    let (b, c) = (dims[0], dims[1]);
    let flat = features.reshape((b, c, ()))?.contiguous()?;
    Ok(flat.matmul(&flat.t()?.contiguous()?)?)
}

/// `sqrt(s)` with gradient `1/(2·sqrt(s))`, and 0 at `s = 0`.
fn safe_sqrt(s: &Tensor) -> Result<Tensor> {
    let root = s.detach().sqrt()?;
    let denom = (root.clamp(SQRT_FLOOR, f64::INFINITY)? * 2.0)?;
    Ok((root + ((s - s.detach())? / denom)?)?)
}

pub fn texture_loss(o_hat: &Tensor, o: &Tensor) -> Result<Tensor> {
    if o_hat.dims() != o.dims() {
        return Err(GccError::Shape(format!(
            "texture loss between {:?} and {:?}",
            o_hat.dims(),
            o.dims()
        )));
    }
    let dims = o.dims();
    let (b, c) = (dims[0], dims[1]);
    let n: usize = dims[2..].iter().product();
    let per_sample = if n < c {
        // ‖AAᵀ − BBᵀ‖² = ‖AᵀA‖² + ‖BᵀB‖² − 2‖AᵀB‖², cheaper when the
        // spatial extent is below the channel count.
        let a = o_hat.reshape((b, c, n))?.contiguous()?;
        let bb = o.reshape((b, c, n))?.contiguous()?;
        let inner = |x: &Tensor, y: &Tensor| -> Result<Tensor> {
            Ok(x.t()?.contiguous()?.matmul(y)?.sqr()?.sum((1, 2))?)
        };
        let s = ((inner(&a, &a)? + inner(&bb, &bb)?)? - (inner(&a, &bb)? * 2.0)?)?;
        s.relu()?
    } else {
        let diff = (gram_matrix(o_hat)? - gram_matrix(o)?)?;
        diff.sqr()?.sum((1, 2))?
    };
    let c = c as f64;
    Ok((safe_sqrt(&per_sample)?.mean_all()? / (c * c))?)
}

pub fn mse(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.dims() != b.dims() {
        return Err(GccError::Shape(format!("mse between {:?} and {:?}", a.dims(), b.dims())));
    }
    Ok((a - b)?.sqr()?.mean_all()?)
}

pub fn similarity(a: &Tensor, b: &Tensor, gamma_m: f64, gamma_t: f64) -> Result<Tensor> {
    let m = mse(a, b)?;
    if gamma_t == 0.0 {
        return Ok((m * gamma_m)?);
    }
    Ok(((m * gamma_m)? + (texture_loss(a, b)? * gamma_t)?)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenPair {
    pub student: String,
    pub teacher: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistillLayerMap {
    pub gen_pairs: Vec<GenPair>,
    pub disc_taps: Vec<String>,
    pub gamma_m: f64,
    pub gamma_t: f64,
    /// Teacher trained jointly with the student; otherwise the teacher is
    /// trained to completion first.
    #[serde(default = "default_online")]
    pub online: bool,
}

fn default_online() -> bool {
    true
}

impl DistillLayerMap {
    pub fn new(gen_taps: &[(&str, &str)], disc_taps: &[&str], gamma_m: f64, gamma_t: f64) -> Self {
        DistillLayerMap {
            gen_pairs: gen_taps
                .iter()
                .map(|(s, t)| GenPair {
                    student: s.to_string(),
                    teacher: t.to_string(),
                })
                .collect(),
            disc_taps: disc_taps.iter().map(|s| s.to_string()).collect(),
            gamma_m,
            gamma_t,
            online: true,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.gen_pairs.is_empty() && self.disc_taps.is_empty()
    }

    pub fn validate(&self, g_s: &NetworkSpec, g_t: &NetworkSpec, d_t: &NetworkSpec) -> Result<()> {
        if !(self.gamma_m >= 0.0 && self.gamma_t >= 0.0) {
            return Err(GccError::Config("γ_m and γ_t must be ≥ 0".into()));
        }
        let missing = |spec: &NetworkSpec, tap: &str| -> Result<()> {
            if spec.tap_index(tap).is_none() {
                return Err(GccError::Config(format!("`{}` has no tap `{tap}`", spec.name)));
            }
            Ok(())
        };
        for p in &self.gen_pairs {
            missing(g_s, &p.student)?;
            missing(g_t, &p.teacher)?;
            let (ss, ts) = (g_s.shapes()?, g_t.shapes()?);
            let s = &ss[g_s.tap_index(&p.student).expect("checked")].output;
            let t = &ts[g_t.tap_index(&p.teacher).expect("checked")].output;
            if s.spatial() != t.spatial() || s.dims().len() != t.dims().len() {
                return Err(GccError::Config(format!(
                    "taps `{}` {:?} and `{}` {:?} differ in spatial shape",
                    p.student,
                    s.dims(),
                    p.teacher,
                    t.dims()
                )));
            }
        }
        for tap in &self.disc_taps {
            missing(d_t, tap)?;
        }
        Ok(())
    }
}

/// 1×1 learnable map between channel counts.
#[derive(Debug, Clone)]
pub struct Transform1x1 {
    pub weight: Var,
}

impl Transform1x1 {
    /// Identity when `in_c == out_c`, otherwise N(0, 0.02) entries.
    pub fn new(in_c: usize, out_c: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let values: Vec<f64> = if in_c == out_c {
            (0..out_c * in_c)
                .map(|k| if k / in_c == k % in_c { 1.0 } else { 0.0 })
                .collect()
        } else {
            let n = Normal::new(0.0, CONV_INIT_STD).expect("valid std");
            (0..out_c * in_c).map(|_| n.sample(rng)).collect()
        };
        Ok(Transform1x1 {
            weight: Var::from_vec(values, (out_c, in_c), &device())?,
        })
    }

    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        let w = self.weight.as_tensor();
        let (out_c, in_c) = w.dims2()?;
        match x.rank() {
            2 => Ok(x.matmul(&w.t()?)?),
            4 => Ok(x.conv2d(&w.reshape((out_c, in_c, 1, 1))?, 0, 1, 1, 1)?),
            r => Err(GccError::Shape(format!("1×1 transform on rank-{r} features"))),
        }
    }
}

/// One transform per generator pair of a map.
#[derive(Debug, Clone, Default)]
pub struct DistillTransforms {
    pub transforms: Vec<Transform1x1>,
}

impl DistillTransforms {
    pub fn new(map: &DistillLayerMap, g_s: &NetworkSpec, g_t: &NetworkSpec, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let transforms = map
            .gen_pairs
            .iter()
            .map(|p| {
                let s = g_s.tap_channels(&p.student)?;
                let t = g_t.tap_channels(&p.teacher)?;
                Transform1x1::new(s, t, &mut rng)
            })
            .collect::<Result<_>>()?;
        Ok(DistillTransforms { transforms })
    }

    pub fn vars(&self) -> Vec<Var> {
        self.transforms.iter().map(|t| t.weight.clone()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct DistillLoss {
    pub total: Tensor,
    pub gen_terms: Vec<f64>,
    pub disc_terms: Vec<f64>,
}

impl DistillLoss {
    pub fn value(&self) -> Result<f64> {
        Ok(self.total.to_scalar()?)
    }
}

pub fn distill_loss(
    g_s: &Network,
    g_t: &Network,
    d_t: &Network,
    map: &DistillLayerMap,
    transforms: &DistillTransforms,
    z: &Tensor,
) -> Result<DistillLoss> {
    let student = g_s.forward_taps(z)?;
    distill_loss_from(&student, g_t, d_t, map, transforms, z)
}

/// Same as [`distill_loss`] with the student's forward pass on `z` already
/// computed.
pub fn distill_loss_from(
    student: &ForwardOutput,
    g_t: &Network,
    d_t: &Network,
    map: &DistillLayerMap,
    transforms: &DistillTransforms,
    z: &Tensor,
) -> Result<DistillLoss> {
    if transforms.transforms.len() != map.gen_pairs.len() {
        return Err(GccError::Shape(format!(
            "{} transforms for {} generator pairs",
            transforms.transforms.len(),
            map.gen_pairs.len()
        )));
    }
    let teacher = g_t.forward_with(z, ForwardOptions::frozen())?;
    let mut terms = Vec::new();
    let mut gen_terms = Vec::new();
    for (p, f) in map.gen_pairs.iter().zip(&transforms.transforms) {
        let s = f.apply(student.tap(&p.student)?)?;
        let t = teacher.tap(&p.teacher)?.detach();
        let d = similarity(&s, &t, map.gamma_m, map.gamma_t)?;
        gen_terms.push(d.to_scalar()?);
        terms.push(d);
    }
    let mut disc_terms = Vec::new();
    if !map.disc_taps.is_empty() {
        let on_student = d_t.forward_with(&student.output, ForwardOptions::frozen())?;
        let on_teacher = d_t.forward_with(&teacher.output.detach(), ForwardOptions::frozen())?;
        for tap in &map.disc_taps {
            let d = similarity(
                on_student.tap(tap)?,
                &on_teacher.tap(tap)?.detach(),
                map.gamma_m,
                map.gamma_t,
            )?;
            disc_terms.push(d.to_scalar()?);
            terms.push(d);
        }
    }
    let total = if terms.is_empty() {
        Tensor::zeros((), crate::model_zoo::network::DTYPE, &device())?
    } else {
        Tensor::stack(&terms, 0)?.sum_all()?
    };
    Ok(DistillLoss {
        total,
        gen_terms,
        disc_terms,
    })
}

pub const DISTILL_VARIANTS: [&str; 5] = [
    "w/o texture",
    "w/o mse",
    "w/o online",
    "w/o d-distillation",
    "w/o g-distillation",
];

/// The five single-component ablations of a map, in `DISTILL_VARIANTS`
/// order.
pub fn ablation_variants(map: &DistillLayerMap) -> Vec<(&'static str, DistillLayerMap)> {
    let v = |f: &dyn Fn(&mut DistillLayerMap)| {
        let mut m = map.clone();
        f(&mut m);
        m
    };
    vec![
        (DISTILL_VARIANTS[0], v(&|m| m.gamma_t = 0.0)),
        (DISTILL_VARIANTS[1], v(&|m| m.gamma_m = 0.0)),
        (DISTILL_VARIANTS[2], v(&|m| m.online = false)),
        (DISTILL_VARIANTS[3], v(&|m| m.disc_taps.clear())),
        (DISTILL_VARIANTS[4], v(&|m| m.gen_pairs.clear())),
    ]
}
