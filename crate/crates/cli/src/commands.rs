//! The five subcommands. Each takes a resolved [`RunConfig`], writes its
//! outputs plus `<command>.toml` with that config, and returns a summary.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ldm_ctsim::{psnr, synthesize_dataset, Dataset};
use ldm_dn::{
    evaluate, load_checkpoint, read_checkpoint_config, train, EvalSummary, Identity, StepReport, TrainOptions,
};
use ldm_manifold::{ldmm_recover, Recovery};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::diag::{load_fixture, run_diagnostics, DiagOptions, DiagReport};
use crate::error::{CliError, Result};

fn load_dataset(dir: &Path) -> Result<Dataset> {
    if !dir.join("manifest.txt").is_file() {
        return Err(CliError::Runtime(format!("dataset not found at {}", dir.display())));
    }
    Ok(Dataset::load(dir)?)
}

pub fn cmd_synth(cfg: &RunConfig) -> Result<PathBuf> {
    let synth = cfg.synth_config()?;
    let ds = synthesize_dataset(&synth)?;
    let dir = cfg.data_dir();
    ds.write(&dir)?;
    cfg.write(&dir, "synth.toml")?;
    println!(
        "wrote {} training and {} test pairs ({}x{}, ratio {}) to {}",
        ds.train.len(),
        ds.test.len(),
        synth.size,
        synth.size,
        synth.ratio,
        dir.display()
    );
    Ok(dir)
}

pub struct TrainSummary {
    pub reports: Vec<StepReport>,
    pub warnings: Vec<String>,
    pub run_dir: PathBuf,
}

fn describe(r: &StepReport) -> String {
    let mut parts = vec![format!("total {:.6}", r.loss_total)];
    for (name, v) in [
        ("sup", r.loss_sup),
        ("adv", r.adv),
        ("rec", r.rec),
        ("cyc", r.cyc),
        ("art", r.art),
        ("disc", r.disc),
        ("ldm_penalty", r.ldm_penalty),
        ("dirichlet_energy", r.dirichlet_energy),
    ] {
        if let Some(v) = v {
            parts.push(format!("{name} {v:.6}"));
        }
    }
    parts.join(", ")
}

pub fn cmd_train(cfg: &RunConfig) -> Result<TrainSummary> {
    cfg.mode()?;
    cfg.reduction()?;
    let mut cfg = cfg.clone();
    let ds = load_dataset(&cfg.data_dir())?;
    cfg.record_dataset(&ds.config);
    let train_cfg = cfg.train_config(ds.config.size)?;
    // train() logs these itself.
    let warnings = train_cfg.warnings();
    let run_dir = cfg.run_dir();
    cfg.write(&run_dir, "train.toml")?;
    let opts = TrainOptions {
        metrics_csv: Some(run_dir.join("metrics.csv")),
        checkpoint_dir: Some(run_dir.join("checkpoints")),
        checkpoint_every: cfg.train.checkpoint_every,
        max_steps: cfg.train.max_steps,
        plain: cfg.train.plain,
    };
    let outcome = train(&ds, &train_cfg, &opts)?;
    match outcome.reports.last() {
        Some(r) => println!("{} steps, final step: {}", outcome.reports.len(), describe(r)),
        None => println!("0 steps; checkpoint holds the initialization"),
    }
    Ok(TrainSummary {
        reports: outcome.reports,
        warnings,
        run_dir,
    })
}

/// Evaluates the checkpoint, or the pass-through corrector when `identity` is set.
pub fn cmd_eval(cfg: &RunConfig, identity: bool) -> Result<EvalSummary> {
    let mut cfg = cfg.clone();
    let ds = load_dataset(&cfg.data_dir())?;
    cfg.record_dataset(&ds.config);
    let summary = if identity {
        evaluate(&Identity, &ds.test)?
    } else {
        let dir = cfg.checkpoint_dir();
        if !dir.is_dir() {
            return Err(CliError::Runtime(format!("checkpoint not found at {}", dir.display())));
        }
        let g = read_checkpoint_config(&dir)?.geometry;
        let n = ds.config.size;
        if (g.image_h, g.image_w) != (n, n) {
            return Err(CliError::Runtime(format!(
                "geometry mismatch: checkpoint expects {}x{} images, dataset has {n}x{n}",
                g.image_h, g.image_w
            )));
        }
        evaluate(&load_checkpoint(&dir)?, &ds.test)?
    };
    let run_dir = cfg.run_dir();
    cfg.write(&run_dir, "eval.toml")?;
    let path = run_dir.join("eval.csv");
    fs::write(&path, summary.to_csv()).map_err(|e| CliError::io(&path, e))?;
    println!(
        "{:>6} {:>10} {:>8} {:>10} {:>8}",
        "image", "psnr", "ssim", "base_psnr", "base_ssim"
    );
    for r in &summary.rows {
        println!(
            "{:>6} {:>10.3} {:>8.4} {:>10.3} {:>8.4}",
            r.index, r.psnr, r.ssim, r.baseline_psnr, r.baseline_ssim
        );
    }
    println!(
        "{:>6} {:>10.3} {:>8.4} {:>10.3} {:>8.4}",
        "mean", summary.mean_psnr, summary.mean_ssim, summary.mean_baseline_psnr, summary.mean_baseline_ssim
    );
    Ok(summary)
}

/// Smooth test image with values in `[0.2, 0.9]`.
pub fn smooth_phantom(n: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, n), |(i, j)| {
        let (x, y) = (j as f64 / n as f64, i as f64 / n as f64);
        0.5 + 0.3 * (-((x - 0.4).powi(2) + (y - 0.45).powi(2)) / 0.05).exp() + 0.1 * (5.0 * x).sin()
    })
}

fn load_image(path: &Path) -> Result<Array2<f64>> {
    let (shape, data) = ldm_tensor::io::load(path)?;
    match shape[..] {
        [h, w] => Ok(Array2::from_shape_vec((h, w), data).expect("shape matches data")),
        _ => Err(CliError::Runtime(format!(
            "{} has shape {shape:?}, expected an image",
            path.display()
        ))),
    }
}

fn save_image(dir: &Path, stem: &str, img: &Array2<f64>) -> Result<()> {
    let (h, w) = img.dim();
    let data: Vec<f64> = img.iter().copied().collect();
    ldm_tensor::io::save(dir.join(format!("{stem}.f32")), &[h, w], &data)?;
    let path = dir.join(format!("{stem}.pgm"));
    let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
    bytes.extend(img.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))
}

pub struct RecoverSummary {
    pub recovery: Recovery,
    /// `(initial, recovered)` PSNR when a ground truth is known.
    pub psnr: Option<(f64, f64)>,
}

pub fn cmd_recover(cfg: &RunConfig) -> Result<RecoverSummary> {
    let r = &cfg.recover;
    let rcfg = cfg.recover_config()?;
    let (image, mut truth) = match &r.image {
        Some(p) => (load_image(&cfg.resolve(p))?, None),
        None => {
            let img = smooth_phantom(r.size);
            (img.clone(), Some(img))
        }
    };
    if let Some(p) = &r.truth {
        truth = Some(load_image(&cfg.resolve(p))?);
    }
    let known = match &r.mask {
        Some(p) => load_image(&cfg.resolve(p))?.mapv(|v| v != 0.0),
        None => {
            if !(r.known > 0.0 && r.known <= 1.0) {
                return Err(CliError::Usage(format!(
                    "known fraction must lie in (0, 1], got {}",
                    r.known
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            Array2::from_shape_fn(image.dim(), |_| rng.random_bool(r.known))
        }
    };
    if known.dim() != image.dim() || truth.as_ref().is_some_and(|t| t.dim() != image.dim()) {
        return Err(CliError::Runtime("image, mask and ground truth sizes differ".into()));
    }
    let observed = Array2::from_shape_fn(image.dim(), |ij| if known[ij] { image[ij] } else { 0.0 });
    let recovery = ldmm_recover(observed.view(), known.view(), &rcfg)?;

    let dir = cfg.run_dir();
    cfg.write(&dir, "recover.toml")?;
    save_image(&dir, "recovered", &recovery.image)?;
    save_image(&dir, "initial", &recovery.initial)?;
    let mut log = String::from("iteration,relative_change\n");
    for (i, c) in recovery.changes.iter().enumerate() {
        log.push_str(&format!("{},{c}\n", i + 1));
    }
    let psnr = match &truth {
        Some(t) => {
            let before = psnr(recovery.initial.view(), t.view(), 1.0)?;
            let after = psnr(recovery.image.view(), t.view(), 1.0)?;
            log.push_str(&format!("# psnr_initial,{before}\n# psnr_recovered,{after}\n"));
            Some((before, after))
        }
        None => None,
    };
    let path = dir.join("recover.csv");
    fs::write(&path, log).map_err(|e| CliError::io(&path, e))?;
    print!("{} iterations", recovery.iterations);
    if let Some((a, b)) = psnr {
        print!(", PSNR {a:.3} dB -> {b:.3} dB ({:+.3} dB)", b - a);
    }
    println!();
    Ok(RecoverSummary { recovery, psnr })
}

/// Runs the invariant suites; fails with a runtime error when any check fails.
pub fn cmd_diag(cfg: &RunConfig) -> Result<DiagReport> {
    let d = &cfg.diag;
    let fixture = match &d.weights_fixture {
        Some(name) if name == "asymmetric" => Some(load_fixture(name)?),
        Some(path) => Some(load_fixture(&cfg.resolve(path).to_string_lossy())?),
        None => None,
    };
    let report = run_diagnostics(&DiagOptions {
        seed: cfg.seed,
        graphs: d.graphs,
        systems: d.systems,
        grad_trials: d.grad_trials,
        fixture,
    })?;
    let dir = cfg.run_dir();
    cfg.write(&dir, "diag.toml")?;
    let path = dir.join("diag.csv");
    fs::write(&path, report.to_csv()).map_err(|e| CliError::io(&path, e))?;
    let mut out = std::io::stdout().lock();
    let _ = write!(out, "{report}");
    if report.passed() {
        Ok(report)
    } else {
        Err(CliError::Runtime(format!(
            "failed checks: {}",
            report.failures().join(", ")
        )))
    }
}
