//! Point-integral system `(L + mu W) U = mu W V`, one column at a time,
//! by Jacobi-preconditioned conjugate gradients.

use ndarray::{Array1, Array2, Axis, Zip};

use crate::error::{shape, ManifoldError, Result};
use crate::graph::GraphOperators;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgConfig {
    /// Relative residual target per column.
    pub tol: f64,
    /// Iteration cap as a multiple of the system size.
    pub max_iter_factor: usize,
}

impl Default for CgConfig {
    fn default() -> Self {
        CgConfig {
            tol: 1e-8,
            max_iter_factor: 10,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    /// Largest true relative residual over all columns.
    pub max_residual: f64,
}

/// Column-wise `||A u - b|| / ||b||` (0 for zero right-hand sides that are solved exactly).
pub fn relative_residuals(ops: &GraphOperators, mu: f64, u: &Array2<f64>, b: &Array2<f64>) -> Array1<f64> {
    let r = b - &ops.apply_system(mu, u);
    let rn = col_norms(&r);
    let bn = col_norms(b);
    Zip::from(&rn)
        .and(&bn)
        .map_collect(|&r, &b| if b > 0.0 { r / b } else { r })
}

fn col_norms(x: &Array2<f64>) -> Array1<f64> {
    x.map_axis(Axis(0), |c| c.dot(&c).sqrt())
}

fn col_dots(a: &Array2<f64>, b: &Array2<f64>) -> Array1<f64> {
    (a * b).sum_axis(Axis(0))
}

/// Solves `(L + mu_bar W) U = mu_bar W V` for every column of `v`.
pub fn solve_coordinates(ops: &GraphOperators, v: &Array2<f64>, mu_bar: f64) -> Result<(Array2<f64>, SolveStats)> {
    solve_coordinates_with(ops, v, mu_bar, &CgConfig::default())
}

pub fn solve_coordinates_with(
    ops: &GraphOperators,
    v: &Array2<f64>,
    mu_bar: f64,
    cg: &CgConfig,
) -> Result<(Array2<f64>, SolveStats)> {
    let m = ops.len();
    if v.nrows() != m {
        return Err(shape("coordinate rows", m, v.nrows()));
    }
    if !(mu_bar > 0.0) {
        return Err(ManifoldError::Config(format!("mu_bar must be > 0, got {mu_bar}")));
    }
    let mut b = ops.apply_w(v);
    b *= mu_bar;
    let diag = ops.system_diagonal(mu_bar);
    if let Some(i) = diag.iter().position(|&d| !(d > 0.0)) {
        return Err(ManifoldError::Config(format!(
            "system diagonal entry {i} is {} (not positive)",
            diag[i]
        )));
    }
    let inv_diag = diag.mapv(|d| 1.0 / d);
    let precond = |r: &Array2<f64>| {
        let mut z = r.clone();
        for (mut row, &s) in z.rows_mut().into_iter().zip(&inv_diag) {
            row *= s;
        }
        z
    };

    let d = v.ncols();
    let b_norm = col_norms(&b);
    let target = b_norm.mapv(|n| cg.tol * n);
    let max_iter = (cg.max_iter_factor * m).max(1);

    // Starting from V is exact for m = 1 and for constant columns.
    let mut u = v.clone();
    let mut r = &b - &ops.apply_system(mu_bar, &u);
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = col_dots(&r, &z);
    let mut active: Vec<bool> = (0..d).map(|j| col_norms_at(&r, j) > target[j]).collect();
    let mut iterations = 0;

    while active.iter().any(|&a| a) && iterations < max_iter {
        iterations += 1;
        let ap = ops.apply_system(mu_bar, &p);
        let pap = col_dots(&p, &ap);
        for j in 0..d {
            if !active[j] || pap[j] <= 0.0 {
                continue;
            }
            let alpha = rz[j] / pap[j];
            u.column_mut(j).scaled_add(alpha, &p.column(j));
            r.column_mut(j).scaled_add(-alpha, &ap.column(j));
        }
        z = precond(&r);
        let rz_new = col_dots(&r, &z);
        let mut recheck = false;
        for j in 0..d {
            if !active[j] {
                continue;
            }
            if col_norms_at(&r, j) <= target[j] {
                recheck = true;
                continue;
            }
            let beta = if rz[j] > 0.0 { rz_new[j] / rz[j] } else { 0.0 };
            let zj = z.column(j).to_owned();
            let mut pj = p.column_mut(j);
            pj *= beta;
            pj += &zj;
        }
        rz = rz_new;
        if recheck {
            // Recurrence residuals drift; confirm against the true residual and
            // restart any column that is not actually converged.
            let true_r = &b - &ops.apply_system(mu_bar, &u);
            for j in 0..d {
                if !active[j] || col_norms_at(&r, j) > target[j] {
                    continue;
                }
                if col_norms_at(&true_r, j) <= target[j] {
                    active[j] = false;
                } else {
                    r.column_mut(j).assign(&true_r.column(j));
                    let zj = precond_col(&true_r, j, &inv_diag);
                    rz[j] = true_r.column(j).dot(&zj);
                    p.column_mut(j).assign(&zj);
                }
            }
        }
    }

    let res = relative_residuals(ops, mu_bar, &u, &b);
    let (worst_col, worst) = res
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |acc, (j, &v)| if v > acc.1 { (j, v) } else { acc });
    if worst > cg.tol {
        return Err(ManifoldError::NotConverged {
            iterations,
            column: worst_col,
            residual: worst,
        });
    }
    Ok((
        u,
        SolveStats {
            iterations,
            max_residual: worst,
        },
    ))
}

fn col_norms_at(x: &Array2<f64>, j: usize) -> f64 {
    let c = x.column(j);
    c.dot(&c).sqrt()
}

fn precond_col(r: &Array2<f64>, j: usize, inv_diag: &Array1<f64>) -> Array1<f64> {
    &r.column(j) * inv_diag
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{gaussian_weights, Bandwidth, KernelConfig};
    use ndarray::array;

    #[test]
    fn single_point_returns_input() {
        let p = array![[0.3, 0.1]];
        let g = gaussian_weights(p.view(), &KernelConfig::default()).unwrap();
        let v = array![[2.0, -5.0, 7.0]];
        let (u, _) = solve_coordinates(&g, &v, 0.6).unwrap();
        assert_eq!(u, v);
    }

    #[test]
    fn constant_columns_are_fixed_points() {
        let p = Array2::from_elem((5, 3), 0.4);
        let g = gaussian_weights(p.view(), &KernelConfig::default()).unwrap();
        let v = Array2::from_shape_fn((5, 2), |(_, j)| j as f64 - 0.5);
        let (u, stats) = solve_coordinates(&g, &v, 0.6).unwrap();
        assert_eq!(u, v);
        assert_eq!(stats.iterations, 0);
    }

    #[test]
    fn zero_right_hand_side() {
        let p = array![[0.0], [1.0], [2.5]];
        let g = gaussian_weights(p.view(), &KernelConfig::default()).unwrap();
        let (u, _) = solve_coordinates(&g, &Array2::zeros((3, 2)), 0.6).unwrap();
        assert!(u.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn iteration_cap_reports_worst_column() {
        let p = Array2::from_shape_fn((30, 2), |(i, j)| ((i * 13 + j * 5) % 17) as f64 / 17.0);
        let cfg = KernelConfig {
            bandwidth: Bandwidth::Fixed(0.05),
            ..KernelConfig::default()
        };
        let g = gaussian_weights(p.view(), &cfg).unwrap();
        let v = Array2::from_shape_fn((30, 3), |(i, j)| ((i + 3 * j) % 7) as f64);
        let cg = CgConfig {
            tol: 1e-14,
            max_iter_factor: 0,
        };
        match solve_coordinates_with(&g, &v, 1e-4, &cg) {
            Err(ManifoldError::NotConverged {
                iterations, residual, ..
            }) => {
                assert_eq!(iterations, 1);
                assert!(residual > 1e-14);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn rejects_row_mismatch() {
        let p = array![[0.0], [1.0]];
        let g = gaussian_weights(p.view(), &KernelConfig::default()).unwrap();
        assert!(solve_coordinates(&g, &Array2::zeros((3, 1)), 0.6).is_err());
    }
}
