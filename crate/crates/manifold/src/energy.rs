use ndarray::Array2;

use crate::error::{shape, Result};
use crate::graph::GraphOperators;

/// Discrete Dirichlet energy `(1/m) sum_cols u^T L u`, the training-time
/// surrogate for the manifold dimension.
pub fn dirichlet_energy(u: &Array2<f64>, ops: &GraphOperators) -> Result<f64> {
    let m = ops.len();
    if u.nrows() != m {
        return Err(shape("energy rows", m, u.nrows()));
    }
    let lu = ops.apply_l(u);
    let e = (u * &lu).sum() / m as f64;
    // Round-off can push an exactly smooth field slightly negative.
    Ok(e.max(0.0))
}
