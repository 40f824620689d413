//! Adversarial objectives.
//!
//! With `f(u)` the per-variant function and logits `d = D(·)`:
//!
//! | variant        | generator `L_G`              | `L_D_real`               | `L_D_fake`             |
//! |----------------|------------------------------|--------------------------|------------------------|
//! | hinge          | `mean(-d_fake)`              | `mean(max(0, 1 - d_real))` | `mean(max(0, 1 + d_fake))` |
//! | least-squares  | `mean((d_fake - 1)^2)`       | `mean((d_real - 1)^2)`   | `mean(d_fake^2)`       |
//! | vanilla        | `mean(softplus(-d_fake))`    | `mean(softplus(-d_real))` | `mean(softplus(d_fake))` |
//!
//! Hinge and vanilla are exactly `f_G(-D(G(z)))`, `f_D(-D(x))`, `f_D(D(G(z)))`
//! with `f_G = id` / `f_D(u) = max(0, 1 + u)` and `f = softplus` respectively
//! (the vanilla generator term is the non-saturating form). Least-squares
//! uses the 0/1 target coding without the 1/2 factor.

use std::fmt;
use std::str::FromStr;

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{GccError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GanLossKind {
    Hinge,
    LeastSquares,
    Vanilla,
}

impl fmt::Display for GanLossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GanLossKind::Hinge => "hinge",
            GanLossKind::LeastSquares => "least-squares",
            GanLossKind::Vanilla => "vanilla",
        })
    }
}

impl FromStr for GanLossKind {
    type Err = GccError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hinge" => Ok(GanLossKind::Hinge),
            "least-squares" | "lsgan" => Ok(GanLossKind::LeastSquares),
            "vanilla" => Ok(GanLossKind::Vanilla),
            other => Err(GccError::Config(format!("unknown GAN loss `{other}`"))),
        }
    }
}

/// The three components of the discriminator objective.
#[derive(Debug, Clone)]
pub struct DiscriminatorLoss {
    pub total: Tensor,
    pub real: Tensor,
    pub fake: Tensor,
}

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus(x: &Tensor) -> Result<Tensor> {
    let tail = (x.abs()?.neg()?.exp()? + 1.0)?.log()?;
    Ok((x.relu()? + tail)?)
}

/// `|x|` whose gradient is `sign(x)` with 0 at the kink.
pub fn abs_subgrad(x: &Tensor) -> Result<Tensor> {
    let sign = x.detach().sign()?;
    Ok((x * sign)?)
}

fn non_empty(logits: &Tensor, what: &str) -> Result<()> {
    if logits.elem_count() == 0 {
        return Err(GccError::InvalidInput(format!("{what} batch is empty")));
    }
    Ok(())
}

fn finite(logits: &Tensor, what: &str) -> Result<()> {
    let v: Vec<f64> = logits.flatten_all()?.to_vec1()?;
    if v.iter().any(|x| !x.is_finite()) {
        return Err(GccError::InvalidInput(format!("{what} logits are not finite")));
    }
    Ok(())
}

pub fn generator_loss(d_logits_on_fake: &Tensor, kind: GanLossKind) -> Result<Tensor> {
    non_empty(d_logits_on_fake, "generator")?;
    let d = d_logits_on_fake;
    Ok(match kind {
        GanLossKind::Hinge => d.mean_all()?.neg()?,
        GanLossKind::LeastSquares => (d - 1.0)?.sqr()?.mean_all()?,
        GanLossKind::Vanilla => softplus(&d.neg()?)?.mean_all()?,
    })
}

pub fn discriminator_loss(
    d_logits_real: &Tensor,
    d_logits_fake: &Tensor,
    kind: GanLossKind,
) -> Result<DiscriminatorLoss> {
    non_empty(d_logits_real, "real")?;
    non_empty(d_logits_fake, "fake")?;
    finite(d_logits_real, "real")?;
    finite(d_logits_fake, "fake")?;
    let (r, f) = (d_logits_real, d_logits_fake);
    let (real, fake) = match kind {
        GanLossKind::Hinge => (
            (r.neg()? + 1.0)?.relu()?.mean_all()?,
            (f + 1.0)?.relu()?.mean_all()?,
        ),
        GanLossKind::LeastSquares => ((r - 1.0)?.sqr()?.mean_all()?, f.sqr()?.mean_all()?),
        GanLossKind::Vanilla => (
            softplus(&r.neg()?)?.mean_all()?,
            softplus(f)?.mean_all()?,
        ),
    };
    Ok(DiscriminatorLoss {
        total: (&real + &fake)?,
        real,
        fake,
    })
}
