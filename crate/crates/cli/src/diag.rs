//! Invariant suites behind `ldmdn diag`: graph Laplacian structure, the
//! coordinate solver and its limits, autodiff gradients and dual bounds.

use std::fmt;
use std::path::Path;

use ldm_manifold::{
    dirichlet_energy, gaussian_weights, relative_residuals, solve_coordinates, DualVariable, GraphOperators,
    KernelConfig,
};
use ldm_tensor::{conv2d, frobenius_sq, gradcheck, Tensor};
use nalgebra::DMatrix;
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bound {
    AtMost,
    AtLeast,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub measured: f64,
    pub bound: Bound,
    pub tolerance: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        match self.bound {
            Bound::AtMost => self.measured <= self.tolerance,
            Bound::AtLeast => self.measured >= self.tolerance,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DiagReport {
    pub checks: Vec<Check>,
}

impl DiagReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    pub fn failures(&self) -> Vec<&'static str> {
        self.checks.iter().filter(|c| !c.passed()).map(|c| c.name).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("check,measured,bound,tolerance,status\n");
        for c in &self.checks {
            let bound = if c.bound == Bound::AtMost { "<=" } else { ">=" };
            let status = if c.passed() { "pass" } else { "FAIL" };
            s.push_str(&format!(
                "{},{:e},{bound},{:e},{status}\n",
                c.name, c.measured, c.tolerance
            ));
        }
        s
    }
}

impl fmt::Display for DiagReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<24} {:>12}    {:>12}  status", "check", "measured", "tolerance")?;
        for c in &self.checks {
            let bound = if c.bound == Bound::AtMost { "<=" } else { ">=" };
            let status = if c.passed() { "pass" } else { "FAIL" };
            writeln!(
                f,
                "{:<24} {:>12.3e} {bound} {:>12.3e}  {status}",
                c.name, c.measured, c.tolerance
            )?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct DiagOptions {
    pub seed: u64,
    /// Random patch graphs for the Laplacian checks.
    pub graphs: usize,
    /// Random systems for the solver checks.
    pub systems: usize,
    pub grad_trials: usize,
    /// Checked in place of the random graphs when set.
    pub fixture: Option<Array2<f64>>,
}

impl Default for DiagOptions {
    fn default() -> Self {
        DiagOptions {
            seed: 0,
            graphs: 50,
            systems: 20,
            grad_trials: 20,
            fixture: None,
        }
    }
}

/// Non-symmetric weights: node 0 pulls on node 1 twice as hard as the reverse.
pub fn asymmetric_fixture() -> Array2<f64> {
    let mut w = Array2::from_shape_fn((5, 5), |(i, j)| if i == j { 1.0 } else { 0.25 });
    w[[0, 1]] = 0.5;
    w
}

/// Reads a square weight matrix from a raw f32 file, or the built-in
/// fixture for the name `asymmetric`.
pub fn load_fixture(source: &str) -> Result<Array2<f64>> {
    if source == "asymmetric" {
        return Ok(asymmetric_fixture());
    }
    let (shape, data) = ldm_tensor::io::load(Path::new(source))?;
    match shape[..] {
        [r, c] if r == c => Ok(Array2::from_shape_vec((r, c), data).expect("shape matches data")),
        _ => Err(CliError::Usage(format!(
            "weights fixture {source} has shape {shape:?}, expected a square matrix"
        ))),
    }
}

fn uniform(rng: &mut ChaCha8Rng, m: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((m, d), |_| rng.random_range(0.0..1.0))
}

fn frob(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn col_range(a: &Array2<f64>) -> Array1<f64> {
    a.columns()
        .into_iter()
        .map(|c| c.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v)) - c.iter().fold(f64::INFINITY, |m, &v| m.min(v)))
        .collect()
}

struct GraphStats {
    asymmetry: f64,
    row_sum: f64,
    min_quadratic: f64,
}

fn graph_stats(ops: &GraphOperators, rng: &mut ChaCha8Rng) -> GraphStats {
    let w = ops.weights_dense();
    let l = ops.laplacian();
    let m = w.nrows();
    let asymmetry = (0..m)
        .flat_map(|i| (0..m).map(move |j| (i, j)))
        .map(|(i, j)| (w[[i, j]] - w[[j, i]]).abs())
        .fold(0.0, f64::max);
    let row_sum = l
        .rows()
        .into_iter()
        .zip(ops.degrees())
        .map(|(r, &d)| r.sum().abs() / d.max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    let min_quadratic = (0..20)
        .map(|_| {
            let v = Array1::from_shape_fn(m, |_| rng.random_range(-1.0..1.0));
            v.dot(&l.dot(&v))
        })
        .fold(f64::INFINITY, f64::min);
    GraphStats {
        asymmetry,
        row_sum,
        min_quadratic,
    }
}

fn dense_solve(ops: &GraphOperators, v: &Array2<f64>, mu: f64) -> Array2<f64> {
    let (m, d) = v.dim();
    let w = ops.weights_dense();
    let a = ops.laplacian() + &w * mu;
    let b = w.dot(v) * mu;
    let a = DMatrix::from_fn(m, m, |i, j| a[[i, j]]);
    let b = DMatrix::from_fn(m, d, |i, j| b[[i, j]]);
    let x = a.lu().solve(&b).expect("system matrix is nonsingular");
    Array2::from_shape_fn((m, d), |(i, j)| x[(i, j)])
}

fn max_rel_err(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    frob(&(a - b)) / frob(b).max(f64::MIN_POSITIVE)
}

/// Largest relative finite-difference error of a two-layer convolutional net.
fn conv_gradcheck(rng: &mut ChaCha8Rng, trials: usize) -> Result<(f64, usize)> {
    let mut worst = 0.0f64;
    let mut compared = 0;
    for _ in 0..trials {
        let x = Tensor::new(
            (0..2 * 8 * 8).map(|_| rng.random_range(-1.0..1.0)).collect(),
            &[2, 1, 8, 8],
        )?;
        let k1 = Tensor::parameter((0..3 * 9).map(|_| rng.random_range(-0.5..0.5)).collect(), &[3, 1, 3, 3])?;
        let k2 = Tensor::parameter(
            (0..3 * 16).map(|_| rng.random_range(-0.5..0.5)).collect(),
            &[1, 3, 4, 4],
        )?;
        let params = [k1.clone(), k2.clone()];
        let entries = gradcheck::all_entries(&params);
        let loss = || {
            let h = conv2d(&x, &k1, 1, 1)?.leaky_relu(0.2);
            Ok(frobenius_sq(&conv2d(&h, &k2, 2, 1)?))
        };
        let report = gradcheck::check(&params, &entries, loss, &gradcheck::GradCheckConfig::default())?;
        compared += report.entries.len();
        worst = worst.max(report.max_rel_err());
    }
    Ok((worst, compared))
}

pub fn run_diagnostics(opts: &DiagOptions) -> Result<DiagReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut checks = Vec::new();
    let kernel = KernelConfig::default();

    let stats: Vec<GraphStats> = match &opts.fixture {
        Some(w) => vec![graph_stats(&GraphOperators::from_dense_weights(w.clone())?, &mut rng)],
        None => (0..opts.graphs)
            .map(|_| {
                let m = rng.random_range(2..=200);
                let p = uniform(&mut rng, m, 128);
                let ops = gaussian_weights(p.view(), &kernel)?;
                Ok(graph_stats(&ops, &mut rng))
            })
            .collect::<Result<_>>()?,
    };
    let worst = |f: fn(&GraphStats) -> f64, max: bool| {
        stats.iter().map(f).fold(
            if max { 0.0 } else { f64::INFINITY },
            if max { f64::max } else { f64::min },
        )
    };
    checks.push(Check {
        name: "weights_symmetric",
        measured: worst(|s| s.asymmetry, true),
        bound: Bound::AtMost,
        tolerance: 0.0,
    });
    checks.push(Check {
        name: "laplacian_row_sums",
        measured: worst(|s| s.row_sum, true),
        bound: Bound::AtMost,
        tolerance: 1e-10,
    });
    checks.push(Check {
        name: "laplacian_psd",
        measured: worst(|s| s.min_quadratic, false),
        bound: Bound::AtLeast,
        tolerance: -1e-9,
    });

    let (mut residual, mut oracle, mut big, mut small, mut energy) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..opts.systems {
        let m = rng.random_range(5..=50);
        let v = uniform(&mut rng, m, 8);
        let ops = gaussian_weights(v.view(), &kernel)?;
        let mu = kernel.mu_bar;
        let (u, _) = solve_coordinates(&ops, &v, mu)?;
        let b = ops.apply_w(&v) * mu;
        residual = residual.max(relative_residuals(&ops, mu, &u, &b).fold(0.0, |a, &r| a.max(r)));
        oracle = oracle.max(max_rel_err(&u, &dense_solve(&ops, &v, mu)));

        let (u_big, _) = solve_coordinates(&ops, &v, 1e6)?;
        big = big.max(max_rel_err(&u_big, &v));
        let (u_small, _) = solve_coordinates(&ops, &v, 1e-6)?;
        let ratio = col_range(&u_small) / col_range(&v);
        small = small.max(ratio.fold(0.0, |a, &r| a.max(r)));

        let ev = dirichlet_energy(&v, &ops)?;
        for mu in [0.06, 0.6, 6.0] {
            let (u, _) = solve_coordinates(&ops, &v, mu)?;
            energy = energy.max(dirichlet_energy(&u, &ops)? / ev);
        }
    }
    checks.push(Check {
        name: "solver_residual",
        measured: residual,
        bound: Bound::AtMost,
        tolerance: 1e-8,
    });
    checks.push(Check {
        name: "solver_vs_dense",
        measured: oracle,
        bound: Bound::AtMost,
        tolerance: 1e-6,
    });
    checks.push(Check {
        name: "limit_large_mu",
        measured: big,
        bound: Bound::AtMost,
        tolerance: 1e-3,
    });
    checks.push(Check {
        name: "limit_small_mu",
        measured: small,
        bound: Bound::AtMost,
        tolerance: 1e-3,
    });
    checks.push(Check {
        name: "energy_ratio",
        measured: energy,
        bound: Bound::AtMost,
        tolerance: 1.0,
    });

    let (grad, compared) = conv_gradcheck(&mut rng, opts.grad_trials)?;
    checks.push(Check {
        name: "conv_gradient",
        measured: grad,
        bound: Bound::AtMost,
        tolerance: 1e-4,
    });
    checks.push(Check {
        name: "gradient_entries",
        measured: compared as f64,
        bound: Bound::AtLeast,
        tolerance: opts.grad_trials as f64,
    });

    let d_hat = DualVariable {
        values: Array2::from_shape_fn((32, 16), |_| rng.random_range(-5.0..5.0)),
    };
    let (lo, hi) = d_hat.normalize().range();
    checks.push(Check {
        name: "dual_bounds",
        measured: (-lo).max(hi - 1.0).max(0.0),
        bound: Bound::AtMost,
        tolerance: 0.0,
    });
    Ok(DiagReport { checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> DiagOptions {
        DiagOptions {
            graphs: 5,
            systems: 3,
            grad_trials: 2,
            ..DiagOptions::default()
        }
    }

    #[test]
    fn default_suite_passes() {
        let r = run_diagnostics(&quick()).unwrap();
        assert!(r.passed(), "{r}");
        assert_eq!(r.checks.len(), 11);
    }

    #[test]
    fn asymmetric_fixture_fails_symmetry_only_there() {
        let r = run_diagnostics(&DiagOptions {
            fixture: Some(asymmetric_fixture()),
            ..quick()
        })
        .unwrap();
        assert_eq!(r.failures()[0], "weights_symmetric");
        assert!(!r.passed());
    }

    #[test]
    fn csv_has_a_row_per_check() {
        let r = run_diagnostics(&quick()).unwrap();
        assert_eq!(r.to_csv().lines().count(), r.checks.len() + 1);
    }
}
