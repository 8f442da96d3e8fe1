//! Command-line flags. Every flag overrides the config key of the same name.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands::{cmd_diag, cmd_eval, cmd_recover, cmd_synth, cmd_train};
use crate::config::RunConfig;
use crate::error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(
    name = "ldmdn",
    version,
    about = "Metal artifact reduction with patch-manifold regularized disentanglement networks"
)]
pub struct Cli {
    /// TOML run configuration; flags take precedence over its keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Base for relative output paths (overrides LDMDN_OUTPUT_ROOT).
    #[arg(long, global = true)]
    pub output_root: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize a paired dataset of simulated CT images.
    Synth(SynthArgs),
    /// Train a model in one of the six modes.
    Train(TrainArgs),
    /// Score a checkpoint on the test split.
    Eval(EvalArgs),
    /// Fill in missing pixels with network-free patch-manifold recovery.
    Recover(RecoverArgs),
    /// Run the invariant suites and report measured values against tolerances.
    Diag(DiagArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Dataset directory.
    #[arg(long)]
    pub data: Option<String>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub pairs: Option<u64>,
    #[arg(long)]
    pub test: Option<usize>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(8..))]
    pub size: Option<u64>,
    /// Share of training pairs whose artifact image forms the unpaired pool.
    #[arg(long)]
    pub ratio: Option<f64>,
    #[arg(long)]
    pub severity: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub views: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: Option<String>,
    /// Output directory for metrics, checkpoints and the resolved config.
    #[arg(long)]
    pub run: Option<String>,
    /// sup, ldm-sup, adn, ldm-dn, adn-sup or ldm-dn-sup.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub mu_bar: Option<f64>,
    /// sum or mean.
    #[arg(long)]
    pub reduction: Option<String>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub disc_lr: Option<f64>,
    #[arg(long)]
    pub bandwidth: Option<f64>,
    #[arg(long)]
    pub knn: Option<usize>,
    #[arg(long)]
    pub s: Option<usize>,
    #[arg(long)]
    pub width_base: Option<usize>,
    #[arg(long)]
    pub width_max: Option<usize>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// Skip the manifold computation entirely.
    #[arg(long)]
    pub plain: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: Option<String>,
    #[arg(long)]
    pub run: Option<String>,
    #[arg(long)]
    pub checkpoint: Option<String>,
    /// Evaluate the uncorrected inputs instead of a checkpoint.
    #[arg(long)]
    pub identity: bool,
}

#[derive(Debug, Args)]
pub struct RecoverArgs {
    #[arg(long)]
    pub run: Option<String>,
    /// Raw f32 image; omit for the built-in smooth phantom.
    #[arg(long)]
    pub image: Option<String>,
    /// Raw f32 mask, nonzero at known pixels.
    #[arg(long)]
    pub mask: Option<String>,
    #[arg(long)]
    pub truth: Option<String>,
    /// Fraction of known pixels when no mask is given.
    #[arg(long)]
    pub known: Option<f64>,
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub patch: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long)]
    pub knn: Option<usize>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DiagArgs {
    #[arg(long)]
    pub run: Option<String>,
    /// Dense weight matrix (raw f32 path, or `asymmetric`) checked instead of random graphs.
    #[arg(long)]
    pub weights_fixture: Option<String>,
    #[arg(long)]
    pub graphs: Option<usize>,
    #[arg(long)]
    pub systems: Option<usize>,
    #[arg(long)]
    pub grad_trials: Option<usize>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl Cli {
    /// Config file, then the environment, then flags.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        cfg.apply_env();
        set(&mut cfg.paths.output_root, self.output_root.clone());
        set(&mut cfg.seed, self.seed);
        match &self.command {
            Command::Synth(a) => {
                set(&mut cfg.paths.data, a.data.clone());
                set(&mut cfg.synth.pairs, a.pairs.map(|v| v as usize));
                set(&mut cfg.synth.test, a.test);
                set(&mut cfg.synth.size, a.size.map(|v| v as usize));
                set(&mut cfg.synth.ratio, a.ratio);
                set(&mut cfg.synth.severity, a.severity);
                set(&mut cfg.synth.noise, a.noise);
                set(&mut cfg.scan.views, a.views.map(|v| v as usize));
            }
            Command::Train(a) => {
                set(&mut cfg.paths.data, a.data.clone());
                set(&mut cfg.paths.run, a.run.clone());
                let t = &mut cfg.train;
                set(&mut t.mode, a.mode.clone());
                set(&mut t.epochs, a.epochs);
                set(&mut t.batch_size, a.batch_size);
                set(&mut t.lambda, a.lambda);
                set(&mut t.reduction, a.reduction.clone());
                set(&mut t.lr, a.lr);
                set(&mut t.disc_lr, a.disc_lr);
                if a.max_steps.is_some() {
                    t.max_steps = a.max_steps;
                }
                if a.checkpoint_every.is_some() {
                    t.checkpoint_every = a.checkpoint_every;
                }
                t.plain |= a.plain;
                set(&mut cfg.kernel.mu_bar, a.mu_bar);
                if a.bandwidth.is_some() {
                    cfg.kernel.bandwidth = a.bandwidth;
                }
                if a.knn.is_some() {
                    cfg.kernel.knn = a.knn;
                }
                set(&mut cfg.geometry.s, a.s);
                set(&mut cfg.geometry.width_base, a.width_base);
                set(&mut cfg.geometry.width_max, a.width_max);
            }
            Command::Eval(a) => {
                set(&mut cfg.paths.data, a.data.clone());
                set(&mut cfg.paths.run, a.run.clone());
                if a.checkpoint.is_some() {
                    cfg.paths.checkpoint = a.checkpoint.clone();
                }
            }
            Command::Recover(a) => {
                set(&mut cfg.paths.run, a.run.clone());
                let r = &mut cfg.recover;
                for (slot, v) in [
                    (&mut r.image, &a.image),
                    (&mut r.mask, &a.mask),
                    (&mut r.truth, &a.truth),
                ] {
                    if v.is_some() {
                        *slot = v.clone();
                    }
                }
                set(&mut r.known, a.known);
                set(&mut r.size, a.size);
                set(&mut r.patch, a.patch);
                set(&mut r.stride, a.stride);
                set(&mut r.knn, a.knn);
                set(&mut r.max_iter, a.max_iter);
                set(&mut r.tol, a.tol);
            }
            Command::Diag(a) => {
                set(&mut cfg.paths.run, a.run.clone());
                if a.weights_fixture.is_some() {
                    cfg.diag.weights_fixture = a.weights_fixture.clone();
                }
                set(&mut cfg.diag.graphs, a.graphs);
                set(&mut cfg.diag.systems, a.systems);
                set(&mut cfg.diag.grad_trials, a.grad_trials);
            }
        }
        Ok(cfg)
    }

    pub fn execute(&self) -> Result<()> {
        let cfg = self.resolve()?;
        match &self.command {
            Command::Synth(_) => cmd_synth(&cfg).map(drop),
            Command::Train(_) => cmd_train(&cfg).map(drop),
            Command::Eval(a) => cmd_eval(&cfg, a.identity).map(drop),
            Command::Recover(_) => cmd_recover(&cfg).map(drop),
            Command::Diag(_) => cmd_diag(&cfg).map(drop),
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match cli.execute() {
        Ok(()) => 0,
        Err(e) => {
            let kind = if matches!(e, CliError::Usage(_)) {
                "usage error"
            } else {
                "error"
            };
            eprintln!("ldmdn: {kind}: {e}");
            e.exit_code()
        }
    }
}
