//! Patch-manifold operators: patch sets, Gaussian weight graphs, the
//! point-integral coordinate solve, Dirichlet energy and the Bregman dual.

mod diagnostics;
mod dual;
mod energy;
mod error;
mod graph;
mod patch;
mod recover;
mod solve;

pub use diagnostics::{DiagnosticsLog, DiagnosticsRow};
pub use dual::{normalize_dual, DualVariable};
pub use energy::dirichlet_energy;
pub use error::{ManifoldError, Result};
pub use graph::{
    gaussian_weights, median_bandwidth, pairwise_sq_dists, Bandwidth, Csr, GraphOperators, KernelConfig, Weights,
};
pub use patch::{build_patch_set, Branch, PatchSet, PatchSource};
pub use recover::{ldmm_recover, RecoverConfig, Recovery};
pub use solve::{relative_residuals, solve_coordinates, solve_coordinates_with, CgConfig, SolveStats};
