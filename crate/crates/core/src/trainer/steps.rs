//! Single adversarial updates shared by the sparsity pre-training and the
//! teacher pair.

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model_zoo::network::flatten_logits;
use crate::model_zoo::{discriminator_loss, generator_loss, ForwardOptions, GanLossKind, Network};
use crate::trainer::optim::Adam;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AdversarialLosses {
    pub g: f64,
    pub d_real: f64,
    pub d_fake: f64,
    /// Extra generator term (0 when absent).
    pub penalty: f64,
}

impl AdversarialLosses {
    /// `|L_G − L_Dfake|`.
    pub fn gap(&self) -> f64 {
        (self.g - self.d_fake).abs()
    }

    pub fn is_finite(&self) -> bool {
        self.g.is_finite() && self.d_real.is_finite() && self.d_fake.is_finite() && self.penalty.is_finite()
    }
}

/// Losses of the pair on one batch without updating anything.
pub fn adversarial_losses(g: &Network, d: &Network, z: &Tensor, x: &Tensor, kind: GanLossKind) -> Result<AdversarialLosses> {
    let fake = g.forward_with(z, ForwardOptions::frozen())?.output;
    let f = flatten_logits(&d.forward_with(&fake, ForwardOptions::frozen())?.output)?;
    let r = flatten_logits(&d.forward_with(x, ForwardOptions::frozen())?.output)?;
    let l = discriminator_loss(&r, &f, kind)?;
    Ok(AdversarialLosses {
        g: generator_loss(&f, kind)?.to_scalar()?,
        d_real: l.real.to_scalar()?,
        d_fake: l.fake.to_scalar()?,
        penalty: 0.0,
    })
}

/// Generator update followed by a discriminator update on the same batch.
/// Both losses of the generator step are measured against the
/// discriminator before its update, and the discriminator sees the fakes
/// produced before the generator update.
#[allow(clippy::too_many_arguments)]
pub fn adversarial_step(
    g: &Network,
    d: &Network,
    g_opt: &mut Adam,
    d_opt: &mut Adam,
    z: &Tensor,
    x: &Tensor,
    kind: GanLossKind,
    penalty: &dyn Fn(&Network) -> Result<Option<Tensor>>,
) -> Result<AdversarialLosses> {
    let fake = g.forward(z)?;
    let on_fake = flatten_logits(&d.forward_with(&fake, ForwardOptions::frozen())?.output)?;
    let l_g = generator_loss(&on_fake, kind)?;
    let (objective, pen) = match penalty(g)? {
        Some(p) => {
            let v = p.to_scalar::<f64>()?;
            ((&l_g + p)?, v)
        }
        None => (l_g.clone(), 0.0),
    };
    g_opt.step(&objective.backward()?)?;

    let r = flatten_logits(&d.forward(x)?)?;
    let f = flatten_logits(&d.forward(&fake.detach())?)?;
    let l_d = discriminator_loss(&r, &f, kind)?;
    d_opt.step(&l_d.total.backward()?)?;
    Ok(AdversarialLosses {
        g: l_g.to_scalar()?,
        d_real: l_d.real.to_scalar()?,
        d_fake: l_d.fake.to_scalar()?,
        penalty: pen,
    })
}

/// No extra generator term.
pub fn no_penalty(_: &Network) -> Result<Option<Tensor>> {
    Ok(None)
}
