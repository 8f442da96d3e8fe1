//! Supervised and disentanglement-network losses.
//!
//! Artifact consistency uses the residual-transport reading: the artifact
//! removed from `x` (`x - x_hat`) must equal the one added to `y`
//! (`y_art - y`). The re-encoding reading, which compares the artifact
//! codes of `x` and `y_art`, is not implemented.

use ldm_tensor::{l1_loss, Tensor};

use crate::config::LossWeights;
use crate::discriminator::Discriminator;
use crate::error::{DnError, Result};
use crate::network::BranchOutputs;

/// Mean absolute difference between the corrected image and its ground truth.
pub fn loss_sup(x_hat: &Tensor, x_gt: &Tensor) -> Result<Tensor> {
    if x_hat.shape() != x_gt.shape() {
        return Err(DnError::Config(format!(
            "supervised loss: prediction {:?} vs target {:?}",
            x_hat.shape(),
            x_gt.shape()
        )));
    }
    Ok(l1_loss(x_hat, x_gt)?)
}

/// The two discriminators the unpaired loss needs.
#[derive(Clone, Copy)]
pub struct DiscPair<'a> {
    /// Separates clean images from corrected ones.
    pub clean: &'a dyn Discriminator,
    /// Separates artifact-affected images from synthesized ones.
    pub artifact: &'a dyn Discriminator,
}

/// Unweighted components and the weighted total.
#[derive(Clone)]
pub struct AdnLoss {
    pub total: Tensor,
    pub adv_clean: Tensor,
    pub adv_artifact: Tensor,
    pub rec: Tensor,
    pub cyc: Tensor,
    pub art: Tensor,
}

impl AdnLoss {
    pub fn adv(&self) -> f64 {
        self.adv_clean.item() + self.adv_artifact.item()
    }
}

fn least_squares(scores: &Tensor, target: f64) -> Tensor {
    scores.add_scalar(-target).square().mean()
}

fn field<'a>(t: &'a Option<Tensor>, name: &str) -> Result<&'a Tensor> {
    t.as_ref().ok_or_else(|| {
        DnError::Config(format!(
            "unpaired loss needs `{name}`; run the unpaired forward with a clean image"
        ))
    })
}

pub fn loss_adn(
    out: &BranchOutputs,
    x: &Tensor,
    y: &Tensor,
    discs: Option<DiscPair<'_>>,
    w: &LossWeights,
) -> Result<AdnLoss> {
    let discs = discs.ok_or_else(|| DnError::Config("unpaired loss needs both discriminators".into()))?;
    let y_hat = field(&out.y_hat, "y_hat")?;
    let x_recon = field(&out.x_recon, "x_recon")?;
    let y_art = field(&out.y_art, "y_art")?;
    let x_cyc = field(&out.x_cyc, "x_cyc")?;
    let y_cyc = field(&out.y_cyc, "y_cyc")?;

    let adv_clean = least_squares(&discs.clean.score(&out.x_hat)?, 1.0);
    let adv_artifact = least_squares(&discs.artifact.score(y_art)?, 1.0);
    let rec = l1_loss(x_recon, x)?.add(&l1_loss(y_hat, y)?)?;
    let cyc = l1_loss(x_cyc, x)?.add(&l1_loss(y_cyc, y)?)?;
    let art = l1_loss(&x.sub(&out.x_hat)?, &y_art.sub(y)?)?;

    let total = adv_clean
        .add(&adv_artifact)?
        .scale(w.adv)
        .add(&rec.scale(w.rec))?
        .add(&cyc.scale(w.cyc))?
        .add(&art.scale(w.art))?;
    Ok(AdnLoss {
        total,
        adv_clean,
        adv_artifact,
        rec,
        cyc,
        art,
    })
}

/// Least-squares discriminator objective on detached generator outputs.
pub fn discriminator_loss(out: &BranchOutputs, x: &Tensor, y: &Tensor, discs: DiscPair<'_>) -> Result<Tensor> {
    let y_art = field(&out.y_art, "y_art")?.detach();
    let fake_clean = out.x_hat.detach();
    let clean =
        least_squares(&discs.clean.score(y)?, 1.0).add(&least_squares(&discs.clean.score(&fake_clean)?, 0.0))?;
    let artifact =
        least_squares(&discs.artifact.score(x)?, 1.0).add(&least_squares(&discs.artifact.score(&y_art)?, 0.0))?;
    Ok(clean.add(&artifact)?)
}
