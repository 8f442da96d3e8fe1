//! Elementwise ops, reductions, losses and the layout ops used to build patch sets.

use crate::error::{mismatch, Result, TensorError};
use crate::probe;
use crate::tensor::Tensor;

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.rank() != b.rank() {
        return Err(TensorError::Invalid {
            op,
            msg: format!("rank mismatch {:?} vs {:?}", a.shape(), b.shape()),
        });
    }
    for (i, (x, y)) in a.shape().iter().zip(b.shape()).enumerate() {
        if x != y {
            return Err(mismatch(op, format!("dim {i}"), *x, *y));
        }
    }
    Ok(())
}

fn unary(
    t: &Tensor,
    op: &'static str,
    f: impl Fn(f64) -> f64,
    backward: impl Fn(&[f64], &[f64], &[f64]) -> Vec<f64> + 'static,
) -> Tensor {
    let input = t.to_vec();
    let data: Vec<f64> = input.iter().map(|&x| f(x)).collect();
    let saved = if t.requires_grad() { input } else { Vec::new() };
    Tensor::from_op(
        op,
        data,
        t.shape().to_vec(),
        &[t],
        Box::new(move |g, out| vec![Some(backward(g, &saved, out))]),
    )
}

impl Tensor {
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        same_shape("add", self, other)?;
        let data = self
            .data()
            .iter()
            .zip(other.data().iter())
            .map(|(a, b)| a + b)
            .collect();
        Ok(Tensor::from_op(
            "add",
            data,
            self.shape().to_vec(),
            &[self, other],
            Box::new(|g, _| vec![Some(g.to_vec()), Some(g.to_vec())]),
        ))
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        same_shape("sub", self, other)?;
        let data = self
            .data()
            .iter()
            .zip(other.data().iter())
            .map(|(a, b)| a - b)
            .collect();
        Ok(Tensor::from_op(
            "sub",
            data,
            self.shape().to_vec(),
            &[self, other],
            Box::new(|g, _| vec![Some(g.to_vec()), Some(g.iter().map(|v| -v).collect())]),
        ))
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        same_shape("mul", self, other)?;
        let a = self.to_vec();
        let b = other.to_vec();
        let data = a.iter().zip(&b).map(|(x, y)| x * y).collect();
        Ok(Tensor::from_op(
            "mul",
            data,
            self.shape().to_vec(),
            &[self, other],
            Box::new(move |g, _| {
                vec![
                    Some(g.iter().zip(&b).map(|(g, y)| g * y).collect()),
                    Some(g.iter().zip(&a).map(|(g, x)| g * x).collect()),
                ]
            }),
        ))
    }

    pub fn scale(&self, c: f64) -> Tensor {
        unary(
            self,
            "scale",
            |x| c * x,
            move |g, _, _| g.iter().map(|v| c * v).collect(),
        )
    }

    pub fn add_scalar(&self, c: f64) -> Tensor {
        unary(self, "add_scalar", |x| x + c, |g, _, _| g.to_vec())
    }

    pub fn neg(&self) -> Tensor {
        self.scale(-1.0)
    }

    pub fn leaky_relu(&self, slope: f64) -> Tensor {
        probe::record(self.data().iter().map(|&x| x > 0.0));
        unary(
            self,
            "leaky_relu",
            |x| if x > 0.0 { x } else { slope * x },
            move |g, x, _| {
                g.iter()
                    .zip(x)
                    .map(|(g, &x)| if x > 0.0 { *g } else { slope * g })
                    .collect()
            },
        )
    }

    pub fn tanh(&self) -> Tensor {
        unary(self, "tanh", f64::tanh, |g, _, y| {
            g.iter().zip(y).map(|(g, y)| g * (1.0 - y * y)).collect()
        })
    }

    pub fn square(&self) -> Tensor {
        unary(
            self,
            "square",
            |x| x * x,
            |g, x, _| g.iter().zip(x).map(|(g, x)| 2.0 * g * x).collect(),
        )
    }

    pub fn sum(&self) -> Tensor {
        let n = self.numel();
        let s: f64 = self.data().iter().sum();
        Tensor::from_op(
            "sum",
            vec![s],
            vec![],
            &[self],
            Box::new(move |g, _| vec![Some(vec![g[0]; n])]),
        )
    }

    pub fn mean(&self) -> Tensor {
        let n = self.numel();
        let s: f64 = self.data().iter().sum::<f64>() / n as f64;
        Tensor::from_op(
            "mean",
            vec![s],
            vec![],
            &[self],
            Box::new(move |g, _| vec![Some(vec![g[0] / n as f64; n])]),
        )
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        if n != self.numel() {
            return Err(mismatch("reshape", "element count", self.numel(), n));
        }
        Ok(Tensor::from_op(
            "reshape",
            self.to_vec(),
            shape.to_vec(),
            &[self],
            Box::new(|g, _| vec![Some(g.to_vec())]),
        ))
    }

    /// Adds a per-channel bias `[C]` to an `[N, C, H, W]` tensor.
    pub fn add_channel_bias(&self, bias: &Tensor) -> Result<Tensor> {
        let [n, c, h, w] = dims4("add_channel_bias", self)?;
        if bias.shape() != [c] {
            return Err(mismatch("add_channel_bias", "bias channels", c, bias.numel()));
        }
        let plane = h * w;
        let b = bias.to_vec();
        let mut data = self.to_vec();
        for (i, chunk) in data.chunks_mut(plane).enumerate() {
            let bc = b[i % c];
            chunk.iter_mut().for_each(|v| *v += bc);
        }
        Ok(Tensor::from_op(
            "add_channel_bias",
            data,
            vec![n, c, h, w],
            &[self, bias],
            Box::new(move |g, _| {
                let mut gb = vec![0.0; c];
                for (i, chunk) in g.chunks(plane).enumerate() {
                    gb[i % c] += chunk.iter().sum::<f64>();
                }
                vec![Some(g.to_vec()), Some(gb)]
            }),
        ))
    }

    /// Concatenates `[N, C_i, H, W]` tensors along the channel axis.
    pub fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
        let first = parts.first().ok_or(TensorError::Invalid {
            op: "concat_channels",
            msg: "no inputs".into(),
        })?;
        let [n, _, h, w] = dims4("concat_channels", first)?;
        let mut chans = Vec::with_capacity(parts.len());
        for p in parts {
            let [pn, pc, ph, pw] = dims4("concat_channels", p)?;
            if pn != n {
                return Err(mismatch("concat_channels", "batch", n, pn));
            }
            if ph != h {
                return Err(mismatch("concat_channels", "height", h, ph));
            }
            if pw != w {
                return Err(mismatch("concat_channels", "width", w, pw));
            }
            chans.push(pc);
        }
        let total: usize = chans.iter().sum();
        let plane = h * w;
        let mut data = Vec::with_capacity(n * total * plane);
        for b in 0..n {
            for (p, &pc) in parts.iter().zip(&chans) {
                let d = p.data();
                data.extend_from_slice(&d[b * pc * plane..(b + 1) * pc * plane]);
            }
        }
        let refs: Vec<&Tensor> = parts.to_vec();
        Ok(Tensor::from_op(
            "concat_channels",
            data,
            vec![n, total, h, w],
            &refs,
            Box::new(move |g, _| {
                let mut grads: Vec<Vec<f64>> = chans.iter().map(|&pc| Vec::with_capacity(n * pc * plane)).collect();
                let mut off = 0;
                for _ in 0..n {
                    for (gi, &pc) in grads.iter_mut().zip(&chans) {
                        gi.extend_from_slice(&g[off..off + pc * plane]);
                        off += pc * plane;
                    }
                }
                grads.into_iter().map(Some).collect()
            }),
        ))
    }

    /// Stacks `[r_i, k]` matrices vertically.
    pub fn concat_rows(parts: &[&Tensor]) -> Result<Tensor> {
        let first = parts.first().ok_or(TensorError::Invalid {
            op: "concat_rows",
            msg: "no inputs".into(),
        })?;
        let [_, k] = dims2("concat_rows", first)?;
        let mut rows = Vec::with_capacity(parts.len());
        for p in parts {
            let [r, pk] = dims2("concat_rows", p)?;
            if pk != k {
                return Err(mismatch("concat_rows", "columns", k, pk));
            }
            rows.push(r);
        }
        let mut data = Vec::with_capacity(rows.iter().sum::<usize>() * k);
        for p in parts {
            data.extend_from_slice(&p.data());
        }
        let total = rows.iter().sum();
        let refs: Vec<&Tensor> = parts.to_vec();
        Ok(Tensor::from_op(
            "concat_rows",
            data,
            vec![total, k],
            &refs,
            Box::new(move |g, _| {
                let mut off = 0;
                rows.iter()
                    .map(|&r| {
                        let s = g[off..off + r * k].to_vec();
                        off += r * k;
                        Some(s)
                    })
                    .collect()
            }),
        ))
    }

    /// Joins `[r, k_i]` matrices side by side.
    pub fn concat_cols(parts: &[&Tensor]) -> Result<Tensor> {
        let first = parts.first().ok_or(TensorError::Invalid {
            op: "concat_cols",
            msg: "no inputs".into(),
        })?;
        let [r, _] = dims2("concat_cols", first)?;
        let mut cols = Vec::with_capacity(parts.len());
        for p in parts {
            let [pr, k] = dims2("concat_cols", p)?;
            if pr != r {
                return Err(mismatch("concat_cols", "rows", r, pr));
            }
            cols.push(k);
        }
        let total: usize = cols.iter().sum();
        let mut data = Vec::with_capacity(r * total);
        let views: Vec<_> = parts.iter().map(|p| p.data()).collect();
        for i in 0..r {
            for (v, &k) in views.iter().zip(&cols) {
                data.extend_from_slice(&v[i * k..(i + 1) * k]);
            }
        }
        drop(views);
        let refs: Vec<&Tensor> = parts.to_vec();
        Ok(Tensor::from_op(
            "concat_cols",
            data,
            vec![r, total],
            &refs,
            Box::new(move |g, _| {
                let mut grads: Vec<Vec<f64>> = cols.iter().map(|&k| Vec::with_capacity(r * k)).collect();
                for i in 0..r {
                    let mut off = i * total;
                    for (gi, &k) in grads.iter_mut().zip(&cols) {
                        gi.extend_from_slice(&g[off..off + k]);
                        off += k;
                    }
                }
                grads.into_iter().map(Some).collect()
            }),
        ))
    }

    /// Rearranges `[N, C, H, W]` into one row per `block x block` spatial cell:
    /// `[N * (H/block) * (W/block), C * block * block]`.
    ///
    /// Rows run over images, then cell rows, then cell columns. Within a row the
    /// layout is channel-major, then the block in row-major order. With `C = 1`
    /// a row is a flattened image patch; with `block = 1` it is the feature
    /// vector at that location.
    pub fn space_to_rows(&self, block: usize) -> Result<Tensor> {
        let [n, c, h, w] = dims4("space_to_rows", self)?;
        if block == 0 || h % block != 0 {
            return Err(mismatch("space_to_rows", "height (multiple of block)", block, h));
        }
        if w % block != 0 {
            return Err(mismatch("space_to_rows", "width (multiple of block)", block, w));
        }
        let (gh, gw) = (h / block, w / block);
        let cols = c * block * block;
        let rows = n * gh * gw;
        // index[out] = source offset
        let mut index = Vec::with_capacity(rows * cols);
        for b in 0..n {
            for i in 0..gh {
                for j in 0..gw {
                    for ch in 0..c {
                        for di in 0..block {
                            for dj in 0..block {
                                let y = i * block + di;
                                let x = j * block + dj;
                                index.push(((b * c + ch) * h + y) * w + x);
                            }
                        }
                    }
                }
            }
        }
        let src = self.data();
        let data = index.iter().map(|&k| src[k]).collect();
        drop(src);
        let total = self.numel();
        Ok(Tensor::from_op(
            "space_to_rows",
            data,
            vec![rows, cols],
            &[self],
            Box::new(move |g, _| {
                let mut gi = vec![0.0; total];
                for (gv, &k) in g.iter().zip(&index) {
                    gi[k] += gv;
                }
                vec![Some(gi)]
            }),
        ))
    }
}

/// Mean absolute difference.
pub fn l1_loss(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("l1_loss", a, b)?;
    let diff: Vec<f64> = a.data().iter().zip(b.data().iter()).map(|(x, y)| x - y).collect();
    probe::record(diff.iter().map(|&d| d > 0.0));
    let n = diff.len() as f64;
    let value = diff.iter().map(|d| d.abs()).sum::<f64>() / n;
    Ok(Tensor::from_op(
        "l1_loss",
        vec![value],
        vec![],
        &[a, b],
        Box::new(move |g, _| {
            let ga: Vec<f64> = diff.iter().map(|&d| g[0] * sign(d) / n).collect();
            let gb = ga.iter().map(|v| -v).collect();
            vec![Some(ga), Some(gb)]
        }),
    ))
}

/// Mean squared difference.
pub fn mse_loss(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("mse_loss", a, b)?;
    let diff: Vec<f64> = a.data().iter().zip(b.data().iter()).map(|(x, y)| x - y).collect();
    let n = diff.len() as f64;
    let value = diff.iter().map(|d| d * d).sum::<f64>() / n;
    Ok(Tensor::from_op(
        "mse_loss",
        vec![value],
        vec![],
        &[a, b],
        Box::new(move |g, _| {
            let ga: Vec<f64> = diff.iter().map(|&d| 2.0 * g[0] * d / n).collect();
            let gb = ga.iter().map(|v| -v).collect();
            vec![Some(ga), Some(gb)]
        }),
    ))
}

/// Sum of squares of all entries.
pub fn frobenius_sq(a: &Tensor) -> Tensor {
    let x = a.to_vec();
    let value = x.iter().map(|v| v * v).sum();
    Tensor::from_op(
        "frobenius_sq",
        vec![value],
        vec![],
        &[a],
        Box::new(move |g, _| vec![Some(x.iter().map(|v| 2.0 * g[0] * v).collect())]),
    )
}

// Subgradient 0 at the kink, matching the usual convention.
fn sign(d: f64) -> f64 {
    if d > 0.0 {
        1.0
    } else if d < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub(crate) fn dims4(op: &'static str, t: &Tensor) -> Result<[usize; 4]> {
    t.shape().try_into().map_err(|_| TensorError::Rank {
        op,
        expected: 4,
        shape: t.shape().to_vec(),
    })
}

pub(crate) fn dims2(op: &'static str, t: &Tensor) -> Result<[usize; 2]> {
    t.shape().try_into().map_err(|_| TensorError::Rank {
        op,
        expected: 2,
        shape: t.shape().to_vec(),
    })
}
