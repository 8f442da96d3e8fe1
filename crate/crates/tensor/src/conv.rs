//! 2-D convolution and its transpose (NCHW layout), lowered to matrix
//! products over unfolded patches.
//!
//! Every output element comes from one matrix product evaluated in a fixed
//! order, so results are reproducible run to run.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView2};

use crate::error::{mismatch, Result, TensorError};
use crate::ops::dims4;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
struct Geometry {
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    pad: usize,
}

impl Geometry {
    fn unfold_input(&self) -> Unfold {
        Unfold {
            channels: self.c,
            img_h: self.h,
            img_w: self.w,
            grid_h: self.oh,
            grid_w: self.ow,
            kh: self.kh,
            kw: self.kw,
            stride: self.stride,
            pad: self.pad,
        }
    }
}

/// Patch extraction from a `channels x img_h x img_w` image onto a
/// `grid_h x grid_w` grid of kernel placements.
#[derive(Clone, Copy, Debug)]
struct Unfold {
    channels: usize,
    img_h: usize,
    img_w: usize,
    grid_h: usize,
    grid_w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
}

impl Unfold {
    fn rows(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    fn grid(&self) -> usize {
        self.grid_h * self.grid_w
    }

    /// Visits every in-bounds (column row, column, image offset) triple.
    fn for_each(&self, mut visit: impl FnMut(usize, usize, usize)) {
        let (hw, gw) = (self.img_h * self.img_w, self.grid_w);
        for ci in 0..self.channels {
            for ki in 0..self.kh {
                let (ylo, yhi) = valid_range(ki, self.pad, self.stride, self.img_h, self.grid_h);
                for kj in 0..self.kw {
                    let r = (ci * self.kh + ki) * self.kw + kj;
                    let (xlo, xhi) = valid_range(kj, self.pad, self.stride, self.img_w, self.grid_w);
                    for oy in ylo..yhi {
                        let iy = oy * self.stride + ki - self.pad;
                        let base = ci * hw + iy * self.img_w;
                        for ox in xlo..xhi {
                            visit(r, oy * gw + ox, base + ox * self.stride + kj - self.pad);
                        }
                    }
                }
            }
        }
    }

    fn im2col(&self, img: &[f64]) -> Array2<f64> {
        let mut cols = Array2::zeros((self.rows(), self.grid()));
        let g = self.grid();
        let buf = cols.as_slice_mut().expect("standard layout");
        self.for_each(|r, col, src| buf[r * g + col] = img[src]);
        cols
    }

    /// Adjoint of [`Unfold::im2col`]: scatters columns back, summing overlaps.
    fn col2im(&self, cols: &Array2<f64>) -> Vec<f64> {
        let mut img = vec![0.0; self.channels * self.img_h * self.img_w];
        let g = self.grid();
        let cols = cols.as_standard_layout();
        let buf = cols.as_slice().expect("standard layout");
        self.for_each(|r, col, dst| img[dst] += buf[r * g + col]);
        img
    }
}

/// Output indices `o` in `[lo, hi)` for which `o * stride + off - pad` lands in
/// `[0, in_len)`.
fn valid_range(off: usize, pad: usize, stride: usize, in_len: usize, out_len: usize) -> (usize, usize) {
    let lo = (pad.saturating_sub(off)).div_ceil(stride);
    if in_len + pad < off + 1 {
        return (0, 0);
    }
    let hi = ((in_len - 1 + pad - off) / stride + 1).min(out_len);
    (lo, hi.max(lo))
}

/// Cross-correlation of `input [N,C,H,W]` with `kernel [F,C,kh,kw]`.
pub fn conv2d(input: &Tensor, kernel: &Tensor, stride: usize, padding: usize) -> Result<Tensor> {
    let [n, c, h, w] = dims4("conv2d", input)?;
    let [f, kc, kh, kw] = dims4("conv2d", kernel)?;
    if stride == 0 {
        return Err(TensorError::Invalid {
            op: "conv2d",
            msg: "stride must be >= 1".into(),
        });
    }
    if kc != c {
        return Err(mismatch("conv2d", "input channels", kc, c));
    }
    if kh > h + 2 * padding {
        return Err(mismatch(
            "conv2d",
            "kernel height (<= padded height)",
            h + 2 * padding,
            kh,
        ));
    }
    if kw > w + 2 * padding {
        return Err(mismatch(
            "conv2d",
            "kernel width (<= padded width)",
            w + 2 * padding,
            kw,
        ));
    }
    let g = Geometry {
        c,
        h,
        w,
        kh,
        kw,
        oh: (h + 2 * padding - kh) / stride + 1,
        ow: (w + 2 * padding - kw) / stride + 1,
        stride,
        pad: padding,
    };
    let unfold = g.unfold_input();
    let k = Array2::from_shape_vec((f, unfold.rows()), kernel.to_vec()).expect("kernel extents");
    let cols: Vec<Array2<f64>> = {
        let x = input.data();
        (0..n)
            .map(|b| unfold.im2col(&x[b * c * h * w..][..c * h * w]))
            .collect()
    };
    let mut out = Vec::with_capacity(n * f * unfold.grid());
    for col in &cols {
        out.extend(k.dot(col).iter());
    }
    Ok(Tensor::from_op(
        "conv2d",
        out,
        vec![n, f, g.oh, g.ow],
        &[input, kernel],
        Box::new(move |grad, _| {
            let ohw = unfold.grid();
            let mut gx = Vec::with_capacity(n * c * h * w);
            let mut gk = Array2::<f64>::zeros((f, unfold.rows()));
            for (b, col) in cols.iter().enumerate() {
                let gb = ArrayView2::from_shape((f, ohw), &grad[b * f * ohw..][..f * ohw]).expect("grad extents");
                gx.extend(unfold.col2im(&k.t().dot(&gb)));
                general_mat_mul(1.0, &gb, &col.t(), 1.0, &mut gk);
            }
            vec![Some(gx), Some(gk.into_raw_vec_and_offset().0)]
        }),
    ))
}

/// Transposed convolution (the adjoint of [`conv2d`] in its input) of
/// `input [N,C,H,W]` with `kernel [C,F,kh,kw]`.
/// Output extents are `(H - 1) * stride - 2 * padding + kh`.
pub fn conv_transpose2d(input: &Tensor, kernel: &Tensor, stride: usize, padding: usize) -> Result<Tensor> {
    let [n, c, h, w] = dims4("conv_transpose2d", input)?;
    let [kc, f, kh, kw] = dims4("conv_transpose2d", kernel)?;
    if stride == 0 {
        return Err(TensorError::Invalid {
            op: "conv_transpose2d",
            msg: "stride must be >= 1".into(),
        });
    }
    if kc != c {
        return Err(mismatch("conv_transpose2d", "input channels", kc, c));
    }
    if (h - 1) * stride + kh <= 2 * padding {
        return Err(mismatch(
            "conv_transpose2d",
            "height (output would be empty)",
            2 * padding,
            (h - 1) * stride + kh,
        ));
    }
    if (w - 1) * stride + kw <= 2 * padding {
        return Err(mismatch(
            "conv_transpose2d",
            "width (output would be empty)",
            2 * padding,
            (w - 1) * stride + kw,
        ));
    }
    // In transpose form the roles swap: `h, w` are the small (input) extents and
    // `oh, ow` the produced ones.
    let g = Geometry {
        c,
        h,
        w,
        kh,
        kw,
        oh: (h - 1) * stride + kh - 2 * padding,
        ow: (w - 1) * stride + kw - 2 * padding,
        stride,
        pad: padding,
    };
    // The output plays the role of a convolution input unfolded onto the
    // `h x w` grid of this op's input.
    let unfold = Unfold {
        channels: f,
        img_h: g.oh,
        img_w: g.ow,
        grid_h: h,
        grid_w: w,
        kh,
        kw,
        stride,
        pad: padding,
    };
    let k = Array2::from_shape_vec((c, unfold.rows()), kernel.to_vec()).expect("kernel extents");
    let x = Array2::from_shape_vec((n * c, h * w), input.to_vec()).expect("input extents");
    let mut out = Vec::with_capacity(n * f * g.oh * g.ow);
    for b in 0..n {
        let xb = x.slice(s![b * c..(b + 1) * c, ..]);
        out.extend(unfold.col2im(&k.t().dot(&xb)));
    }
    Ok(Tensor::from_op(
        "conv_transpose2d",
        out,
        vec![n, f, g.oh, g.ow],
        &[input, kernel],
        Box::new(move |grad, _| {
            let plane = f * g.oh * g.ow;
            let mut gx = Vec::with_capacity(n * c * h * w);
            let mut gk = Array2::<f64>::zeros((c, unfold.rows()));
            for b in 0..n {
                let gcols = unfold.im2col(&grad[b * plane..][..plane]);
                gx.extend(k.dot(&gcols).iter());
                let xb = x.slice(s![b * c..(b + 1) * c, ..]);
                general_mat_mul(1.0, &xb, &gcols.t(), 1.0, &mut gk);
            }
            vec![Some(gx), Some(gk.into_raw_vec_and_offset().0)]
        }),
    ))
}
