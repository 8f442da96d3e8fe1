use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use ldm_ctsim::Dataset;

use crate::checkpoint::save_checkpoint;
use crate::config::TrainConfig;
use crate::error::{DnError, Result};
use crate::model::Model;
use crate::scheduler::{gather, Pools, Scheduler};
use crate::step::{plain_step, training_step, OptState, StepReport};

#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    pub metrics_csv: Option<PathBuf>,
    /// Checkpoints go to `<dir>/step_<k>` every `checkpoint_every` steps and
    /// to `<dir>/final` at the end.
    pub checkpoint_dir: Option<PathBuf>,
    pub checkpoint_every: Option<usize>,
    /// Stop after this many steps even if epochs remain.
    pub max_steps: Option<usize>,
    /// Skip every manifold computation (only meaningful with `lambda = 0`).
    pub plain: bool,
}

pub struct TrainOutcome {
    pub model: Model,
    pub reports: Vec<StepReport>,
    pub state: OptState,
}

pub const METRICS_HEADER: &str = "step,epoch,loss_total,loss_sup,adv,rec,cyc,art,disc,ldm_penalty,dirichlet_energy,cg_residual,cg_iterations,dual_min,dual_max";

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn metrics_csv(reports: &[StepReport]) -> String {
    let mut s = format!("{METRICS_HEADER}\n");
    for r in reports {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.k,
            r.epoch,
            r.loss_total,
            opt(r.loss_sup),
            opt(r.adv),
            opt(r.rec),
            opt(r.cyc),
            opt(r.art),
            opt(r.disc),
            opt(r.ldm_penalty),
            opt(r.dirichlet_energy),
            opt(r.cg_residual),
            opt(r.cg_iterations),
            opt(r.dual_min),
            opt(r.dual_max)
        );
    }
    s
}

/// Mean supervised loss per epoch, in epoch order.
pub fn epoch_mean_sup(reports: &[StepReport]) -> Vec<f64> {
    let mut out: Vec<(f64, usize)> = Vec::new();
    for r in reports {
        let Some(l) = r.loss_sup else { continue };
        if out.len() < r.epoch {
            out.resize(r.epoch, (0.0, 0));
        }
        let e = &mut out[r.epoch - 1];
        e.0 += l;
        e.1 += 1;
    }
    out.into_iter().filter(|e| e.1 > 0).map(|(s, n)| s / n as f64).collect()
}

/// Trains a freshly initialized model for `cfg.epochs` epochs. Epochs in the
/// reports are numbered from 1.
pub fn train(ds: &Dataset, cfg: &TrainConfig, opts: &TrainOptions) -> Result<TrainOutcome> {
    cfg.validate()?;
    for w in cfg.warnings() {
        log::warn!("{w}");
    }
    let g = &cfg.geometry;
    if let Some(p) = ds.train.first() {
        if p.artifact.dim() != (g.image_h, g.image_w) {
            return Err(DnError::Config(format!(
                "dataset images are {:?}, configured geometry is {}x{}",
                p.artifact.dim(),
                g.image_h,
                g.image_w
            )));
        }
    }
    let scheduler = Scheduler::new(cfg.mode, cfg.batch_size, cfg.seed, Pools::from_dataset(ds))?;
    let mut model = Model::for_training(cfg)?;
    let mut state = OptState::default();
    let mut reports = Vec::new();
    let limit = opts.max_steps.unwrap_or(usize::MAX);

    let result = (|| -> Result<()> {
        'epochs: for e in 0..cfg.epochs {
            for batch in scheduler.epoch(e) {
                if reports.len() >= limit {
                    break 'epochs;
                }
                let sb = gather(ds, &batch)?;
                let mut r = if opts.plain {
                    plain_step(&mut model, &sb, &mut state, cfg)?
                } else {
                    training_step(&mut model, &sb, &mut state, cfg)?
                };
                r.epoch = e + 1;
                reports.push(r);
                if let (Some(dir), Some(every)) = (&opts.checkpoint_dir, opts.checkpoint_every) {
                    if every > 0 && reports.len() % every == 0 {
                        save_checkpoint(&model, &dir.join(format!("step_{:06}", reports.len())))?;
                    }
                }
            }
            let last: Vec<&StepReport> = reports.iter().filter(|r| r.epoch == e + 1).collect();
            let mean_total = last.iter().map(|r| r.loss_total).sum::<f64>() / last.len().max(1) as f64;
            log::info!("epoch {} done: {} steps, mean loss {mean_total:.5}", e + 1, last.len());
        }
        Ok(())
    })();

    if let Some(path) = &opts.metrics_csv {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, metrics_csv(&reports))?;
    }
    if let Err(e) = result {
        log::error!("training stopped after {} steps: {e}", reports.len());
        return Err(e);
    }
    if let Some(dir) = &opts.checkpoint_dir {
        save_checkpoint(&model, &dir.join("final"))?;
    }
    Ok(TrainOutcome { model, reports, state })
}
