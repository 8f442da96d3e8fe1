//! Run configuration: a TOML file whose keys mirror the command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use ldm_ctsim::SynthConfig;
use ldm_dn::{GeometryConfig, LossWeights, Mode, PenaltyReduction, TrainConfig, WidthConfig};
use ldm_manifold::{Bandwidth, KernelConfig, RecoverConfig};
use ldm_tensor::AdamConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Overrides `paths.output_root`.
pub const OUTPUT_ROOT_ENV: &str = "LDMDN_OUTPUT_ROOT";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Seeds synthesis, initialization, batch order, recovery masks and diagnostics.
    pub seed: u64,
    pub paths: Paths,
    pub synth: SynthSection,
    pub scan: ScanSection,
    pub geometry: GeometrySection,
    pub kernel: KernelSection,
    pub train: TrainSection,
    pub recover: RecoverSection,
    pub diag: DiagSection,
}

/// Relative paths are taken relative to `output_root`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub output_root: String,
    /// Dataset directory written by `synth` and read by `train` and `eval`.
    pub data: String,
    /// Output directory of `train`, `eval`, `recover` and `diag`.
    pub run: String,
    /// Checkpoint evaluated by `eval`; defaults to `<run>/checkpoints/final`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<String>,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            output_root: ".".into(),
            data: "data".into(),
            run: "run".into(),
            checkpoint: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub pairs: usize,
    pub test: usize,
    pub size: usize,
    pub ratio: f64,
    pub severity: f64,
    pub noise: f64,
    pub window: [f64; 2],
}

impl Default for SynthSection {
    fn default() -> Self {
        let d = SynthConfig::default();
        SynthSection {
            pairs: d.n_pairs,
            test: d.n_test,
            size: d.size,
            ratio: d.ratio,
            severity: d.severity,
            noise: d.noise,
            window: [d.window.0, d.window.1],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanSection {
    pub views: usize,
}

impl Default for ScanSection {
    fn default() -> Self {
        ScanSection {
            views: SynthConfig::default().n_views,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometrySection {
    /// Patch side; the encoder downsamples by the same factor.
    pub s: usize,
    pub width_base: usize,
    pub width_max: usize,
    pub slope: f64,
}

impl Default for GeometrySection {
    fn default() -> Self {
        let w = WidthConfig::default();
        GeometrySection {
            s: GeometryConfig::default().s,
            width_base: w.base,
            width_max: w.max,
            slope: TrainConfig::default().slope,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelSection {
    /// Fixed bandwidth `t`; absent means the median rule.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<f64>,
    pub c_t: f64,
    pub mu_bar: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub knn: Option<usize>,
}

impl Default for KernelSection {
    fn default() -> Self {
        let k = KernelConfig::default();
        KernelSection {
            bandwidth: None,
            c_t: k.c_t,
            mu_bar: k.mu_bar,
            knn: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub mode: String,
    pub epochs: usize,
    pub batch_size: usize,
    pub lambda: f64,
    /// `sum` or `mean` over the patch-set entries.
    pub reduction: String,
    pub lr: f64,
    pub disc_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub w_adv: f64,
    pub w_rec: f64,
    pub w_cyc: f64,
    pub w_art: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint_every: Option<usize>,
    /// Skip every manifold computation.
    pub plain: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            mode: t.mode.to_string(),
            epochs: t.epochs,
            batch_size: t.batch_size,
            lambda: t.lambda,
            reduction: t.reduction.to_string(),
            lr: t.adam.lr,
            disc_lr: t.disc_adam.lr,
            beta1: t.adam.beta1,
            beta2: t.adam.beta2,
            eps: t.adam.eps,
            w_adv: t.weights.adv,
            w_rec: t.weights.rec,
            w_cyc: t.weights.cyc,
            w_art: t.weights.art,
            max_steps: None,
            checkpoint_every: None,
            plain: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RecoverSection {
    /// Raw f32 image to recover; absent means the built-in smooth phantom.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    /// Raw f32 mask, nonzero where the pixel is known; absent means a random mask.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
    /// Raw f32 ground truth used for PSNR.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth: Option<String>,
    /// Fraction of known pixels in a random mask.
    pub known: f64,
    /// Side of the built-in phantom.
    pub size: usize,
    pub patch: usize,
    pub stride: usize,
    pub knn: usize,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for RecoverSection {
    fn default() -> Self {
        let r = RecoverConfig::default();
        RecoverSection {
            image: None,
            mask: None,
            truth: None,
            known: 0.1,
            size: 64,
            patch: r.patch,
            stride: r.stride,
            knn: r.kernel.knn.unwrap_or(20),
            max_iter: r.max_iter,
            tol: r.tol,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagSection {
    /// Dense weight matrix (raw f32, or `asymmetric` for the built-in
    /// fixture) checked in place of random patch graphs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights_fixture: Option<String>,
    pub graphs: usize,
    pub systems: usize,
    pub grad_trials: usize,
}

impl Default for DiagSection {
    fn default() -> Self {
        DiagSection {
            weights_fixture: None,
            graphs: 50,
            systems: 20,
            grad_trials: 20,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// Writes the resolved configuration as `<dir>/<name>`.
    pub fn write(&self, dir: &Path, name: &str) -> Result<PathBuf> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let path = dir.join(name);
        fs::write(&path, self.to_toml()).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    /// Applies the environment override of the output root.
    pub fn apply_env(&mut self) {
        if let Ok(root) = std::env::var(OUTPUT_ROOT_ENV) {
            if !root.is_empty() {
                self.paths.output_root = root;
            }
        }
    }

    pub fn resolve(&self, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            Path::new(&self.paths.output_root).join(p)
        }
    }

    pub fn data_dir(&self) -> PathBuf {
        self.resolve(&self.paths.data)
    }

    pub fn run_dir(&self) -> PathBuf {
        self.resolve(&self.paths.run)
    }

    pub fn checkpoint_dir(&self) -> PathBuf {
        match &self.paths.checkpoint {
            Some(c) => self.resolve(c),
            None => self.run_dir().join("checkpoints").join("final"),
        }
    }

    pub fn synth_config(&self) -> Result<SynthConfig> {
        let s = &self.synth;
        let cfg = SynthConfig {
            n_pairs: s.pairs,
            n_test: s.test,
            size: s.size,
            ratio: s.ratio,
            severity: s.severity,
            noise: s.noise,
            window: (s.window[0], s.window[1]),
            n_views: self.scan.views,
            seed: self.seed,
        };
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }

    /// Mirrors the settings of a loaded dataset back into the config.
    pub fn record_dataset(&mut self, cfg: &SynthConfig) {
        self.synth = SynthSection {
            pairs: cfg.n_pairs,
            test: cfg.n_test,
            size: cfg.size,
            ratio: cfg.ratio,
            severity: cfg.severity,
            noise: cfg.noise,
            window: [cfg.window.0, cfg.window.1],
        };
        self.scan.views = cfg.n_views;
    }

    pub fn mode(&self) -> Result<Mode> {
        self.train
            .mode
            .parse()
            .map_err(|e: ldm_dn::DnError| CliError::Usage(e.to_string()))
    }

    pub fn reduction(&self) -> Result<PenaltyReduction> {
        self.train
            .reduction
            .parse()
            .map_err(|e: ldm_dn::DnError| CliError::Usage(e.to_string()))
    }

    pub fn kernel_config(&self) -> KernelConfig {
        let k = &self.kernel;
        KernelConfig {
            bandwidth: k.bandwidth.map_or(Bandwidth::MedianRule, Bandwidth::Fixed),
            c_t: k.c_t,
            mu_bar: k.mu_bar,
            knn: k.knn,
        }
    }

    /// Training settings for images of side `size`.
    pub fn train_config(&self, size: usize) -> Result<TrainConfig> {
        let t = &self.train;
        let g = &self.geometry;
        let reduction = self.reduction()?;
        let adam = |lr| AdamConfig {
            lr,
            beta1: t.beta1,
            beta2: t.beta2,
            eps: t.eps,
        };
        let cfg = TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            lambda: t.lambda,
            mu_bar: self.kernel.mu_bar,
            mode: self.mode()?,
            seed: self.seed,
            adam: adam(t.lr),
            disc_adam: adam(t.disc_lr),
            weights: LossWeights {
                adv: t.w_adv,
                rec: t.w_rec,
                cyc: t.w_cyc,
                art: t.w_art,
            },
            reduction,
            bandwidth: self.kernel.bandwidth,
            knn: self.kernel.knn,
            c_t: self.kernel.c_t,
            geometry: GeometryConfig::new(size, size, g.s),
            widths: WidthConfig {
                base: g.width_base,
                max: g.width_max,
            },
            slope: g.slope,
        };
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }

    pub fn recover_config(&self) -> Result<RecoverConfig> {
        let r = &self.recover;
        if r.knn == 0 || r.patch == 0 || r.stride == 0 || r.max_iter == 0 {
            return Err(CliError::Usage(
                "recover patch, stride, knn and max_iter must be >= 1".into(),
            ));
        }
        let kernel = KernelConfig {
            knn: Some(r.knn),
            ..self.kernel_config()
        };
        kernel.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(RecoverConfig {
            patch: r.patch,
            stride: r.stride,
            kernel,
            max_iter: r.max_iter,
            tol: r.tol,
        })
    }
}
