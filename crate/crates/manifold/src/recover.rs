//! Network-free patch-manifold recovery of a partially observed image.

use ndarray::{s, Array2, ArrayView2};

use crate::dual::DualVariable;
use crate::error::{shape, ManifoldError, Result};
use crate::graph::{gaussian_weights, KernelConfig};
use crate::solve::solve_coordinates;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RecoverConfig {
    pub patch: usize,
    pub stride: usize,
    pub kernel: KernelConfig,
    pub max_iter: usize,
    /// Stop once `||f_new - f|| / ||f||` drops below this.
    pub tol: f64,
}

impl Default for RecoverConfig {
    fn default() -> Self {
        RecoverConfig {
            patch: 8,
            stride: 2,
            // A dense graph links every patch to every other and washes the
            // image out towards its mean.
            kernel: KernelConfig {
                knn: Some(20),
                ..KernelConfig::default()
            },
            max_iter: 50,
            tol: 1e-4,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Recovery {
    pub image: Array2<f64>,
    /// Starting point: known pixels kept, the rest filled with their mean.
    pub initial: Array2<f64>,
    pub iterations: usize,
    /// Relative change per iteration.
    pub changes: Vec<f64>,
}

/// Top-left corners along one axis: every `stride` plus the final position.
fn offsets(len: usize, patch: usize, stride: usize) -> Vec<usize> {
    let last = len - patch;
    let mut v: Vec<usize> = (0..=last).step_by(stride).collect();
    if *v.last().unwrap() != last {
        v.push(last);
    }
    v
}

fn extract(img: &Array2<f64>, rows: &[usize], cols: &[usize], p: usize) -> Array2<f64> {
    let mut out = Array2::zeros((rows.len() * cols.len(), p * p));
    let mut k = 0;
    for &i in rows {
        for &j in cols {
            out.row_mut(k)
                .iter_mut()
                .zip(img.slice(s![i..i + p, j..j + p]))
                .for_each(|(o, &v)| *o = v);
            k += 1;
        }
    }
    out
}

/// Recovers the pixels where `known` is false by alternating a coordinate
/// solve on the patch graph with patch re-assembly.
pub fn ldmm_recover(
    observed: ArrayView2<'_, f64>,
    known: ArrayView2<'_, bool>,
    cfg: &RecoverConfig,
) -> Result<Recovery> {
    let (h, w) = observed.dim();
    if known.dim() != (h, w) {
        return Err(shape("mask rows", h, known.nrows()));
    }
    let p = cfg.patch;
    if p == 0 || cfg.stride == 0 || p > h || p > w {
        return Err(ManifoldError::Config(format!(
            "patch {p} / stride {} do not fit a {h}x{w} image",
            cfg.stride
        )));
    }
    let n_known = known.iter().filter(|&&k| k).count();
    if n_known == 0 {
        return Err(ManifoldError::Config("no known pixels".into()));
    }
    let mean = observed
        .iter()
        .zip(known)
        .filter(|(_, &k)| k)
        .map(|(v, _)| v)
        .sum::<f64>()
        / n_known as f64;
    let initial = Array2::from_shape_fn((h, w), |ij| if known[ij] { observed[ij] } else { mean });
    let rows = offsets(h, p, cfg.stride);
    let cols = offsets(w, p, cfg.stride);

    let mut coverage = Array2::<f64>::zeros((h, w));
    for &i in &rows {
        for &j in &cols {
            coverage.slice_mut(s![i..i + p, j..j + p]).mapv_inplace(|c| c + 1.0);
        }
    }

    let mut f = initial.clone();
    let mut dual = DualVariable::zeros(rows.len() * cols.len(), p * p);
    let mut changes = Vec::new();
    if n_known == h * w {
        return Ok(Recovery {
            image: f,
            initial,
            iterations: 0,
            changes,
        });
    }
    for _ in 0..cfg.max_iter {
        let pf = extract(&f, &rows, &cols, p);
        let ops = gaussian_weights(pf.view(), &cfg.kernel)?;
        let (u, _) = solve_coordinates(&ops, &(&pf - &dual.values), cfg.kernel.mu_bar)?;
        let target = &u + &dual.values;

        let mut acc = Array2::<f64>::zeros((h, w));
        let mut k = 0;
        for &i in &rows {
            for &j in &cols {
                let mut block = acc.slice_mut(s![i..i + p, j..j + p]);
                block.iter_mut().zip(target.row(k)).for_each(|(a, &t)| *a += t);
                k += 1;
            }
        }
        let next = Array2::from_shape_fn((h, w), |ij| {
            if known[ij] {
                observed[ij]
            } else {
                acc[ij] / coverage[ij]
            }
        });
        dual.values = &dual.values + &u - &extract(&next, &rows, &cols, p);

        let diff = (&next - &f).mapv(|v| v * v).sum().sqrt();
        let norm = f.mapv(|v| v * v).sum().sqrt();
        let change = if norm > 0.0 { diff / norm } else { diff };
        changes.push(change);
        f = next;
        if change < cfg.tol {
            break;
        }
    }
    Ok(Recovery {
        image: f,
        initial,
        iterations: changes.len(),
        changes,
    })
}
