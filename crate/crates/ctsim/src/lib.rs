//! Desk-scale CT simulation: parallel-beam projector, filtered
//! backprojection, metal-artifact synthesis, linear-interpolation baseline,
//! dataset assembly and image-quality metrics.

mod artifact;
mod dataset;
mod error;
mod geometry;
mod metrics;
mod phantom;
mod projector;

pub use artifact::{corrupt_metal, li_correct};
pub use dataset::{phantom_rng, simulate, synthesize_dataset, Dataset, ImagePair, Simulation, SynthConfig};
pub use error::{CtError, Result};
pub use geometry::ScanGeometry;
pub use metrics::{psnr, ssim, SSIM_WINDOW};
pub use phantom::{disk_phantom, insert_metal, random_phantom, PhantomImage, METAL_THRESHOLD};
pub use projector::{fbp, fbp_linear, project, radon_forward, Sinogram};
