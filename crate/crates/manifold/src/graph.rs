//! Gaussian weight graph over a point cloud and its Laplacian `L = D - W`.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::error::{shape, ManifoldError, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Bandwidth {
    /// `t` = median squared pairwise distance / 4, recomputed per point cloud.
    MedianRule,
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelConfig {
    pub bandwidth: Bandwidth,
    /// Kernel normalization constant `C_t`.
    pub c_t: f64,
    /// Coupling of the data term in `(L + mu_bar W) u = mu_bar W v`.
    pub mu_bar: f64,
    /// Keep only k-nearest-neighbor edges (symmetrized).
    pub knn: Option<usize>,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            bandwidth: Bandwidth::MedianRule,
            c_t: 1.0,
            mu_bar: 0.6,
            knn: None,
        }
    }
}

impl KernelConfig {
    pub fn validate(&self) -> Result<()> {
        if let Bandwidth::Fixed(t) = self.bandwidth {
            if !(t > 0.0) {
                return Err(ManifoldError::Config(format!(
                    "kernel bandwidth t must be > 0, got {t}"
                )));
            }
        }
        if !(self.c_t > 0.0) {
            return Err(ManifoldError::Config(format!("c_t must be > 0, got {}", self.c_t)));
        }
        if !(self.mu_bar > 0.0) {
            return Err(ManifoldError::Config(format!(
                "mu_bar must be > 0, got {}",
                self.mu_bar
            )));
        }
        if self.knn == Some(0) {
            return Err(ManifoldError::Config("knn must be >= 1".into()));
        }
        Ok(())
    }
}

/// Compressed sparse rows, symmetric pattern.
#[derive(Clone, Debug)]
pub struct Csr {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl Csr {
    fn matmul(&self, x: &Array2<f64>) -> Array2<f64> {
        let d = x.ncols();
        let mut out = vec![0.0; self.n * d];
        out.par_chunks_mut(d.max(1)).enumerate().for_each(|(i, row)| {
            for k in self.indptr[i]..self.indptr[i + 1] {
                let w = self.values[k];
                row.iter_mut()
                    .zip(x.row(self.indices[k]))
                    .for_each(|(o, &v)| *o += w * v);
            }
        });
        Array2::from_shape_vec((self.n, d), out).expect("n x d buffer")
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        let cols = &self.indices[self.indptr[i]..self.indptr[i + 1]];
        match cols.binary_search(&j) {
            Ok(k) => self.values[self.indptr[i] + k],
            Err(_) => 0.0,
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }
}

#[derive(Clone, Debug)]
pub enum Weights {
    Dense(Array2<f64>),
    Sparse(Csr),
}

/// Weight matrix, degrees and (implicitly) the Laplacian of one point cloud.
#[derive(Clone, Debug)]
pub struct GraphOperators {
    w: Weights,
    degrees: Array1<f64>,
    t: f64,
}

impl GraphOperators {
    /// Wraps an explicit weight matrix. No structural checks are made so that
    /// diagnostics can inspect arbitrary fixtures.
    pub fn from_dense_weights(w: Array2<f64>) -> Result<Self> {
        let (r, c) = w.dim();
        if r != c {
            return Err(shape("weight matrix columns", r, c));
        }
        let degrees = w.sum_axis(Axis(1));
        Ok(GraphOperators {
            w: Weights::Dense(w),
            degrees,
            t: f64::NAN,
        })
    }

    pub fn len(&self) -> usize {
        self.degrees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.degrees.is_empty()
    }

    /// Kernel bandwidth used to build the weights (NaN for explicit fixtures).
    pub fn bandwidth(&self) -> f64 {
        self.t
    }

    pub fn degrees(&self) -> &Array1<f64> {
        &self.degrees
    }

    pub fn weights(&self) -> &Weights {
        &self.w
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        match &self.w {
            Weights::Dense(w) => w[[i, j]],
            Weights::Sparse(s) => s.get(i, j),
        }
    }

    pub fn weights_dense(&self) -> Array2<f64> {
        match &self.w {
            Weights::Dense(w) => w.clone(),
            Weights::Sparse(s) => Array2::from_shape_fn((s.n, s.n), |(i, j)| s.get(i, j)),
        }
    }

    pub fn laplacian(&self) -> Array2<f64> {
        let mut l = self.weights_dense().mapv(|v| -v);
        for (i, d) in self.degrees.iter().enumerate() {
            l[[i, i]] += d;
        }
        l
    }

    pub fn apply_w(&self, x: &Array2<f64>) -> Array2<f64> {
        match &self.w {
            Weights::Dense(w) => w.dot(x),
            Weights::Sparse(s) => s.matmul(x),
        }
    }

    pub fn apply_l(&self, x: &Array2<f64>) -> Array2<f64> {
        self.apply_system(0.0, x)
    }

    /// `(L + mu W) x = D x + (mu - 1) W x`.
    pub fn apply_system(&self, mu: f64, x: &Array2<f64>) -> Array2<f64> {
        let mut out = self.apply_w(x);
        out *= mu - 1.0;
        for (mut row, (&d, xr)) in out.rows_mut().into_iter().zip(self.degrees.iter().zip(x.rows())) {
            row.scaled_add(d, &xr);
        }
        out
    }

    /// Diagonal of `L + mu W`.
    pub fn system_diagonal(&self, mu: f64) -> Array1<f64> {
        Array1::from_iter((0..self.len()).map(|i| self.degrees[i] + (mu - 1.0) * self.weight(i, i)))
    }
}

/// Squared Euclidean distances between all rows. The upper triangle is
/// computed once and mirrored, so the result is exactly symmetric.
pub fn pairwise_sq_dists(points: ArrayView2<'_, f64>) -> Array2<f64> {
    let m = points.nrows();
    let upper: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let pi = points.row(i);
            (i + 1..m)
                .map(|j| pi.iter().zip(points.row(j)).map(|(a, b)| (a - b) * (a - b)).sum())
                .collect()
        })
        .collect();
    let mut d = Array2::zeros((m, m));
    for (i, row) in upper.iter().enumerate() {
        for (k, &v) in row.iter().enumerate() {
            let j = i + 1 + k;
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    d
}

/// Median-rule bandwidth: median of the off-diagonal squared distances over 4.
/// Falls back to the mean, then to 1, when the cloud is degenerate.
pub fn median_bandwidth(sq: &Array2<f64>) -> f64 {
    let m = sq.nrows();
    let mut vals: Vec<f64> = (0..m)
        .flat_map(|i| (i + 1..m).map(move |j| (i, j)))
        .map(|(i, j)| sq[[i, j]])
        .collect();
    if vals.is_empty() {
        return 1.0;
    }
    vals.sort_by(f64::total_cmp);
    let n = vals.len();
    let med = if n % 2 == 1 {
        vals[n / 2]
    } else {
        0.5 * (vals[n / 2 - 1] + vals[n / 2])
    };
    if med > 0.0 {
        return med / 4.0;
    }
    let mean = vals.iter().sum::<f64>() / n as f64;
    if mean > 0.0 {
        mean / 4.0
    } else {
        1.0
    }
}

/// `w_ij = c_t exp(-|p_i - p_j|^2 / 4t)`, degrees `d_i = sum_j w_ij`.
pub fn gaussian_weights(points: ArrayView2<'_, f64>, cfg: &KernelConfig) -> Result<GraphOperators> {
    cfg.validate()?;
    let m = points.nrows();
    if m == 0 {
        return Err(ManifoldError::Config("empty point cloud".into()));
    }
    let sq = pairwise_sq_dists(points);
    let t = match cfg.bandwidth {
        Bandwidth::Fixed(t) => t,
        Bandwidth::MedianRule => median_bandwidth(&sq),
    };
    let kernel = |r2: f64| cfg.c_t * (-r2 / (4.0 * t)).exp();

    let w = match cfg.knn {
        Some(k) if k + 1 < m => Weights::Sparse(knn_weights(&sq, k, kernel)),
        _ => {
            let mut w = Array2::zeros((m, m));
            for i in 0..m {
                w[[i, i]] = kernel(0.0);
                for j in i + 1..m {
                    let v = kernel(sq[[i, j]]);
                    w[[i, j]] = v;
                    w[[j, i]] = v;
                }
            }
            Weights::Dense(w)
        }
    };
    let degrees = match &w {
        Weights::Dense(w) => w.sum_axis(Axis(1)),
        Weights::Sparse(s) => Array1::from_iter((0..m).map(|i| s.values[s.indptr[i]..s.indptr[i + 1]].iter().sum())),
    };
    Ok(GraphOperators { w, degrees, t })
}

fn knn_weights(sq: &Array2<f64>, k: usize, kernel: impl Fn(f64) -> f64) -> Csr {
    let m = sq.nrows();
    let mut keep = vec![Vec::new(); m];
    for i in 0..m {
        let mut order: Vec<usize> = (0..m).filter(|&j| j != i).collect();
        order.sort_by(|&a, &b| sq[[i, a]].total_cmp(&sq[[i, b]]).then(a.cmp(&b)));
        for &j in &order[..k] {
            keep[i].push(j);
            keep[j].push(i);
        }
    }
    let mut indptr = vec![0];
    let mut indices = Vec::new();
    let mut values = Vec::new();
    for (i, cols) in keep.iter_mut().enumerate() {
        cols.push(i);
        cols.sort_unstable();
        cols.dedup();
        for &j in cols.iter() {
            indices.push(j);
            values.push(kernel(sq[[i.min(j), i.max(j)]]));
        }
        indptr.push(indices.len());
    }
    Csr {
        n: m,
        indptr,
        indices,
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn unit_cfg(t: f64) -> KernelConfig {
        KernelConfig {
            bandwidth: Bandwidth::Fixed(t),
            ..KernelConfig::default()
        }
    }

    #[test]
    fn identical_points() {
        let p = array![[1.0, 2.0], [1.0, 2.0]];
        let g = gaussian_weights(p.view(), &unit_cfg(0.5)).unwrap();
        assert_eq!(g.weights_dense(), array![[1.0, 1.0], [1.0, 1.0]]);
        assert_eq!(g.laplacian(), array![[1.0, -1.0], [-1.0, 1.0]]);
    }

    #[test]
    fn analytic_kernel_value() {
        let t = 0.7;
        // |p1 - p2|^2 = 4t
        let p = array![[0.0, 0.0], [(4.0f64 * t).sqrt(), 0.0]];
        let g = gaussian_weights(p.view(), &unit_cfg(t)).unwrap();
        assert!((g.weight(0, 1) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((g.weight(0, 1) - 0.3679).abs() < 1e-4);
    }

    #[test]
    fn rejects_nonpositive_bandwidth() {
        let p = array![[0.0], [1.0]];
        assert!(gaussian_weights(p.view(), &unit_cfg(0.0)).is_err());
        assert!(gaussian_weights(p.view(), &unit_cfg(-1.0)).is_err());
    }

    #[test]
    fn median_rule() {
        // squared distances 1, 4, 9 -> median 4 -> t = 1
        let p = array![[0.0], [1.0], [3.0]];
        let sq = pairwise_sq_dists(p.view());
        assert_eq!(median_bandwidth(&sq), 1.0);
        assert_eq!(median_bandwidth(&Array2::zeros((3, 3))), 1.0);
    }

    #[test]
    fn knn_pattern_is_symmetric() {
        let p = Array2::from_shape_fn((12, 3), |(i, j)| ((i * 7 + j * 3) % 11) as f64 * 0.3);
        let cfg = KernelConfig {
            knn: Some(3),
            ..KernelConfig::default()
        };
        let g = gaussian_weights(p.view(), &cfg).unwrap();
        let w = g.weights_dense();
        assert_eq!(w, w.t());
        let Weights::Sparse(s) = g.weights() else {
            panic!("expected sparse")
        };
        assert!(s.nnz() < 144);
        let x = Array2::from_shape_fn((12, 2), |(i, j)| (i + 2 * j) as f64);
        let diff = &g.apply_w(&x) - &w.dot(&x);
        assert!(diff.iter().all(|v| v.abs() < 1e-12));
    }
}
