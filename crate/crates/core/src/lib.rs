//! Disentanglement networks for metal artifact reduction trained with a
//! low-dimensional patch-manifold penalty.
//!
//! [`training_step`] runs one outer iteration: build the patch set of
//! corrected and artifact-free images with their codes, solve for manifold
//! coordinates, take one Adam step on the penalized loss, then refresh the
//! normalized dual variable.

mod checkpoint;
mod config;
mod discriminator;
mod error;
mod eval;
mod losses;
mod model;
mod network;
mod nn;
mod penalty;
mod scheduler;
mod step;
mod train;

pub use checkpoint::{load_checkpoint, read_checkpoint_config, save_checkpoint};
pub use config::{GeometryConfig, LossWeights, Mode, NetworkVariant, PenaltyReduction, TrainConfig, WidthConfig};
pub use discriminator::{ConstantDiscriminator, Discriminator, Discriminators, PatchDiscriminator};
pub use error::{DnError, Result};
pub use eval::{evaluate, Corrector, EvalRow, EvalSummary, Identity};
pub use losses::{discriminator_loss, loss_adn, loss_sup, AdnLoss, DiscPair};
pub use model::{network_config, Model};
pub use network::{BranchOutputs, Corrected, Network, NetworkConfig};
pub use penalty::{ldm_penalty, patch_tensor, to_array, PatchInput};
pub use scheduler::{gather, Batch, Pools, Scheduler};
pub use step::{composite_objective, current_patch_set, plain_step, training_step, OptState, StepBatch, StepReport};
pub use train::{epoch_mean_sup, metrics_csv, train, TrainOptions, TrainOutcome, METRICS_HEADER};
