//! One outer iteration of LDM-DN training.

use ldm_manifold::{dirichlet_energy, gaussian_weights, solve_coordinates, DualVariable};
use ldm_tensor::{l1_loss, no_grad, Tensor};

use crate::config::{Mode, TrainConfig};
use crate::error::{DnError, Result};
use crate::losses::{discriminator_loss, loss_adn, loss_sup, AdnLoss, DiscPair};
use crate::model::Model;
use crate::network::BranchOutputs;
use crate::penalty::{ldm_penalty, patch_tensor, to_array, PatchInput};

/// Image tensors `[bs, 1, H, W]` for one step, values in `[0, 1]`.
#[derive(Clone)]
pub struct StepBatch {
    /// Artifact-affected and artifact-free images from the unpaired pools.
    pub unpaired: Option<(Tensor, Tensor)>,
    /// Artifact-affected image and its ground truth.
    pub paired: Option<(Tensor, Tensor)>,
}

/// Iteration counter and dual variable carried between steps.
#[derive(Clone, Debug, Default)]
pub struct OptState {
    pub k: u64,
    pub dual: Option<DualVariable>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepReport {
    /// Value of `k` before the step.
    pub k: u64,
    pub epoch: usize,
    /// `L + penalty` at the pre-update parameters.
    pub loss_total: f64,
    pub loss_sup: Option<f64>,
    pub adv: Option<f64>,
    pub rec: Option<f64>,
    pub cyc: Option<f64>,
    pub art: Option<f64>,
    pub disc: Option<f64>,
    pub ldm_penalty: Option<f64>,
    pub dirichlet_energy: Option<f64>,
    pub cg_residual: Option<f64>,
    pub cg_iterations: Option<usize>,
    pub dual_min: Option<f64>,
    pub dual_max: Option<f64>,
}

struct Objective {
    loss: Tensor,
    sup: Option<Tensor>,
    adn: Option<AdnLoss>,
    patches: Option<Tensor>,
    unpaired: Option<BranchOutputs>,
}

fn require<'a>(part: &'a Option<(Tensor, Tensor)>, what: &str, mode: Mode) -> Result<&'a (Tensor, Tensor)> {
    part.as_ref()
        .ok_or_else(|| DnError::Config(format!("mode {mode} needs a {what} sample in every batch")))
}

fn disc_pair(model: &Model) -> Option<DiscPair<'_>> {
    model.discs.as_ref().map(|d| DiscPair {
        clean: &d.clean,
        artifact: &d.artifact,
    })
}

fn code(z: &Option<Tensor>) -> &Tensor {
    z.as_ref().expect("code-emitting variant")
}

/// Training loss of the mode and, when `patches` is set, the patch set at the
/// current parameters.
fn objective(model: &Model, batch: &StepBatch, cfg: &TrainConfig, patches: bool) -> Result<Objective> {
    let mode = cfg.mode;
    let net = &model.net;
    let s = cfg.geometry.s;
    let patches = patches && mode.uses_ldm();

    let mut unpaired = None;
    let mut adn = None;
    if mode.uses_unpaired() {
        let (x, y) = require(&batch.unpaired, "unpaired", mode)?;
        let out = net.forward(x, Some(y))?;
        adn = Some(loss_adn(&out, x, y, disc_pair(model), &cfg.weights)?);
        unpaired = Some(out);
    }

    let mut sup = None;
    let mut extra = None;
    let mut p = None;
    match mode {
        Mode::Sup | Mode::AdnSup => {
            let (x, gt) = require(&batch.paired, "paired", mode)?;
            sup = Some(loss_sup(&net.correct(x)?.x_hat, gt)?);
        }
        Mode::LdmSup => {
            let (x, gt) = require(&batch.paired, "paired", mode)?;
            let out = net.forward(x, Some(gt))?;
            sup = Some(loss_sup(&out.x_hat, gt)?);
            let y_hat = out.y_hat.as_ref().expect("paired LDM forward with ground truth");
            extra = Some(l1_loss(y_hat, gt)?);
            if patches {
                let c = [PatchInput {
                    image: &out.x_hat,
                    code: code(&out.z_x),
                }];
                let f = [PatchInput {
                    image: gt,
                    code: code(&out.z_y),
                }];
                p = Some(patch_tensor(&c, &f, s)?);
            }
        }
        Mode::LdmDn => {
            let (_, y) = require(&batch.unpaired, "unpaired", mode)?;
            let out = unpaired.as_ref().expect("computed above");
            if patches {
                let c = [PatchInput {
                    image: &out.x_hat,
                    code: code(&out.z_x),
                }];
                let f = [PatchInput {
                    image: y,
                    code: code(&out.z_y),
                }];
                p = Some(patch_tensor(&c, &f, s)?);
            }
        }
        Mode::LdmDnSup => {
            let (_, y) = require(&batch.unpaired, "unpaired", mode)?;
            let (xp, gt) = require(&batch.paired, "paired", mode)?;
            let cp = net.correct(xp)?;
            sup = Some(loss_sup(&cp.x_hat, gt)?);
            if patches {
                let out = unpaired.as_ref().expect("computed above");
                let z_gt = net.free_code(gt)?;
                let c = [
                    PatchInput {
                        image: &out.x_hat,
                        code: code(&out.z_x),
                    },
                    PatchInput {
                        image: &cp.x_hat,
                        code: code(&cp.z),
                    },
                ];
                let f = [
                    PatchInput {
                        image: y,
                        code: code(&out.z_y),
                    },
                    PatchInput { image: gt, code: &z_gt },
                ];
                p = Some(patch_tensor(&c, &f, s)?);
            }
        }
        Mode::Adn => {}
    }

    let terms: Vec<&Tensor> = [sup.as_ref(), extra.as_ref(), adn.as_ref().map(|a| &a.total)]
        .into_iter()
        .flatten()
        .collect();
    let mut loss = terms[0].clone();
    for t in &terms[1..] {
        loss = loss.add(t)?;
    }
    Ok(Objective {
        loss,
        sup,
        adn,
        patches: p,
        unpaired,
    })
}

/// Patch set at the current parameters, without recording a graph. Only the
/// corrected path and the artifact-free codes are evaluated.
pub fn current_patch_set(model: &Model, batch: &StepBatch, cfg: &TrainConfig) -> Result<Option<Tensor>> {
    let mode = cfg.mode;
    if !mode.uses_ldm() {
        return Ok(None);
    }
    let net = &model.net;
    let mut sources = Vec::new();
    if mode.uses_unpaired() {
        let (x, y) = require(&batch.unpaired, "unpaired", mode)?;
        sources.push((x, y));
    }
    if mode.uses_paired() {
        let (x, gt) = require(&batch.paired, "paired", mode)?;
        sources.push((x, gt));
    }
    no_grad(|| {
        let mut corrected = Vec::new();
        let mut codes = Vec::new();
        for (x, free) in &sources {
            corrected.push(net.correct(x)?);
            codes.push(net.free_code(free)?);
        }
        let c: Vec<PatchInput<'_>> = corrected
            .iter()
            .map(|c| PatchInput {
                image: &c.x_hat,
                code: code(&c.z),
            })
            .collect();
        let f: Vec<PatchInput<'_>> = sources
            .iter()
            .zip(&codes)
            .map(|((_, free), z)| PatchInput { image: free, code: z })
            .collect();
        patch_tensor(&c, &f, cfg.geometry.s).map(Some)
    })
}

/// Training objective `J = L + penalty` at fixed `U` and `d` as a scalar tensor.
/// Used by gradient checks.
pub fn composite_objective(
    model: &Model,
    batch: &StepBatch,
    cfg: &TrainConfig,
    u: &ndarray::Array2<f64>,
    dual: &DualVariable,
) -> Result<Tensor> {
    let obj = objective(model, batch, cfg, true)?;
    let p = obj
        .patches
        .ok_or_else(|| DnError::Config(format!("mode {} has no patch set", cfg.mode)))?;
    Ok(obj.loss.add(&ldm_penalty(u, &p, dual, cfg.lambda, cfg.reduction)?)?)
}

/// Runs one iteration. In LDM modes this builds the patch set, solves for
/// the manifold coordinates, takes one Adam step on the penalized loss and
/// refreshes the normalized dual. A failed step changes nothing.
pub fn training_step(
    model: &mut Model,
    batch: &StepBatch,
    state: &mut OptState,
    cfg: &TrainConfig,
) -> Result<StepReport> {
    step_impl(model, batch, state, cfg, cfg.mode.uses_ldm())
}

/// The same update without any manifold computation. With `lambda = 0` it
/// must reproduce [`training_step`] bit for bit.
pub fn plain_step(model: &mut Model, batch: &StepBatch, state: &mut OptState, cfg: &TrainConfig) -> Result<StepReport> {
    step_impl(model, batch, state, cfg, false)
}

fn step_impl(
    model: &mut Model,
    batch: &StepBatch,
    state: &mut OptState,
    cfg: &TrainConfig,
    manifold: bool,
) -> Result<StepReport> {
    model.stores().for_each(|s| s.zero_grad());
    let obj = objective(model, batch, cfg, manifold)?;
    let mut report = StepReport {
        k: state.k,
        loss_sup: obj.sup.as_ref().map(Tensor::item),
        adv: obj.adn.as_ref().map(AdnLoss::adv),
        rec: obj.adn.as_ref().map(|a| a.rec.item()),
        cyc: obj.adn.as_ref().map(|a| a.cyc.item()),
        art: obj.adn.as_ref().map(|a| a.art.item()),
        ..StepReport::default()
    };

    let mut total = obj.loss.clone();
    let mut solved = None;
    if let Some(p) = &obj.patches {
        let p_num = to_array(p)?;
        let ops = gaussian_weights(p_num.view(), &cfg.kernel())?;
        let dual = match state.dual.take() {
            Some(d) if d.shape() == p_num.dim() => d,
            _ => DualVariable::zeros(p_num.nrows(), p_num.ncols()),
        };
        let v = &p_num - &dual.values;
        let result = solve_coordinates(&ops, &v, cfg.mu_bar);
        let (u, stats) = match result {
            Ok(r) => r,
            Err(e) => {
                state.dual = Some(dual);
                return Err(e.into());
            }
        };
        let penalty = ldm_penalty(&u, p, &dual, cfg.lambda, cfg.reduction)?;
        report.ldm_penalty = Some(penalty.item());
        report.dirichlet_energy = Some(dirichlet_energy(&u, &ops)?);
        report.cg_residual = Some(stats.max_residual);
        report.cg_iterations = Some(stats.iterations);
        total = total.add(&penalty)?;
        state.dual = Some(dual.clone());
        solved = Some((u, dual));
    }
    report.loss_total = total.item();
    total.backward()?;

    let mut disc_loss = None;
    if let (Some(discs), Some(out)) = (model.discs.as_ref(), obj.unpaired.as_ref()) {
        let (x, y) = batch
            .unpaired
            .as_ref()
            .expect("unpaired outputs imply an unpaired sample");
        discs.store().zero_grad();
        let pair = DiscPair {
            clean: &discs.clean,
            artifact: &discs.artifact,
        };
        let l = discriminator_loss(out, x, y, pair)?;
        report.disc = Some(l.item());
        l.backward()?;
        disc_loss = Some(l);
    }
    drop(obj);

    for store in model.stores() {
        store.check_gradients()?;
    }
    model.net.store_mut().adam_step(&cfg.adam)?;
    if let (Some(discs), Some(_)) = (model.discs.as_mut(), disc_loss) {
        discs.store_mut().adam_step(&cfg.disc_adam)?;
    }

    if let Some((u, dual)) = solved {
        let p_next = current_patch_set(model, batch, cfg)?.expect("LDM mode has a patch set");
        let d_hat = DualVariable {
            values: &dual.values + &u - &to_array(&p_next)?,
        };
        let d = d_hat.normalize();
        let (lo, hi) = d.range();
        report.dual_min = Some(lo);
        report.dual_max = Some(hi);
        state.dual = Some(d);
    }
    state.k += 1;
    Ok(report)
}
