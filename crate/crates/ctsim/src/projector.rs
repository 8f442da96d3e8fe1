//! Parallel-beam forward projection and filtered backprojection.

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::error::{CtError, Result};
use crate::geometry::ScanGeometry;
use crate::phantom::PhantomImage;

/// Ray samples per pixel of path length.
const SAMPLES_PER_PIXEL: f64 = 2.0;

#[derive(Clone, Debug, PartialEq)]
pub struct Sinogram {
    /// `n_views x n_detectors` line integrals.
    pub data: Array2<f64>,
    /// Bins whose ray passes through metal.
    pub metal_trace: Array2<bool>,
}

impl Sinogram {
    pub fn trace_len(&self) -> usize {
        self.metal_trace.iter().filter(|&&t| t).count()
    }
}

fn check_square(img: &ArrayView2<'_, f64>) -> Result<usize> {
    let (h, w) = img.dim();
    if h != w || h == 0 {
        return Err(CtError::Shape {
            what: "image must be square",
            expected: (h, h),
            got: (h, w),
        });
    }
    Ok(h)
}

/// Bilinear lookup in image coordinates: `x` to the right, `y` up, origin at
/// the image centre, one unit per pixel. Zero outside.
fn sample(img: &ArrayView2<'_, f64>, x: f64, y: f64) -> f64 {
    let n = img.nrows();
    let c = (n as f64 - 1.0) / 2.0;
    let col = x + c;
    let row = c - y;
    let (c0, r0) = (col.floor(), row.floor());
    let (fc, fr) = (col - c0, row - r0);
    let (c0, r0) = (c0 as isize, r0 as isize);
    let at = |r: isize, c: isize| {
        if r < 0 || c < 0 || r >= n as isize || c >= n as isize {
            0.0
        } else {
            img[[r as usize, c as usize]]
        }
    };
    (1.0 - fr) * ((1.0 - fc) * at(r0, c0) + fc * at(r0, c0 + 1))
        + fr * ((1.0 - fc) * at(r0 + 1, c0) + fc * at(r0 + 1, c0 + 1))
}

/// Line integrals of a square image. View `k` at angle `theta` integrates
/// along `s (cos, sin) + tau (-sin, cos)` for each detector offset `s`.
pub fn project(img: ArrayView2<'_, f64>, geom: &ScanGeometry) -> Result<Array2<f64>> {
    geom.validate()?;
    let n = check_square(&img)?;
    let half = (n as f64 * std::f64::consts::FRAC_1_SQRT_2).ceil() + 1.0;
    let steps = (2.0 * half * SAMPLES_PER_PIXEL).round() as usize;
    let dt = 2.0 * half / steps as f64;
    let mut out = Array2::zeros((geom.n_views, geom.n_detectors));
    out.as_slice_mut()
        .expect("standard layout")
        .par_chunks_mut(geom.n_detectors)
        .enumerate()
        .for_each(|(v, row)| {
            let (sin, cos) = geom.angle(v).sin_cos();
            for (b, out) in row.iter_mut().enumerate() {
                let s = geom.detector_offset(b);
                let mut acc = 0.0;
                for k in 0..=steps {
                    let t = -half + k as f64 * dt;
                    acc += sample(&img, s * cos - t * sin, s * sin + t * cos);
                }
                *out = acc * dt;
            }
        });
    Ok(out)
}

/// Projects a phantom; the metal trace marks bins where the projected metal
/// mask is positive.
pub fn radon_forward(phantom: &PhantomImage, geom: &ScanGeometry) -> Result<Sinogram> {
    let data = project(phantom.pixels.view(), geom)?;
    let mask = phantom.metal_mask.mapv(|m| if m { 1.0 } else { 0.0 });
    let metal_trace = project(mask.view(), geom)?.mapv(|v| v > 0.0);
    Ok(Sinogram { data, metal_trace })
}

/// Spatial-domain Ram-Lak kernel for bin spacing `tau`, indexed by `offset + (len - 1)`.
fn ramp_kernel(len: usize, tau: f64) -> Vec<f64> {
    (0..2 * len - 1)
        .map(|i| {
            let k = i as isize - (len as isize - 1);
            if k == 0 {
                1.0 / (4.0 * tau * tau)
            } else if k % 2 == 0 {
                0.0
            } else {
                -1.0 / (PI * PI * (k * k) as f64 * tau * tau)
            }
        })
        .collect()
}

/// Ramp-filtered backprojection without the final clamp, so the result is
/// linear in the sinogram.
pub fn fbp_linear(sino: ArrayView2<'_, f64>, geom: &ScanGeometry, n: usize) -> Result<Array2<f64>> {
    geom.validate()?;
    let expected = (geom.n_views, geom.n_detectors);
    if sino.dim() != expected {
        return Err(CtError::Shape {
            what: "sinogram",
            expected,
            got: sino.dim(),
        });
    }
    let nd = geom.n_detectors;
    let tau = geom.detector_spacing;
    let h = ramp_kernel(nd, tau);
    let mut filtered = Array2::<f64>::zeros(expected);
    filtered
        .axis_iter_mut(Axis(0))
        .zip(sino.axis_iter(Axis(0)))
        .for_each(|(mut q, p)| {
            for k in 0..nd {
                let mut acc = 0.0;
                for (l, &pv) in p.iter().enumerate() {
                    acc += h[k + nd - 1 - l] * pv;
                }
                q[k] = tau * acc;
            }
        });

    let trig: Vec<(f64, f64)> = (0..geom.n_views).map(|v| geom.angle(v).sin_cos()).collect();
    let c = (n as f64 - 1.0) / 2.0;
    let scale = geom.angular_range / geom.n_views as f64;
    let mut img = Array2::zeros((n, n));
    img.as_slice_mut()
        .expect("standard layout")
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(i, row)| {
            let y = c - i as f64;
            for (j, px) in row.iter_mut().enumerate() {
                let x = j as f64 - c;
                let mut acc = 0.0;
                for (v, &(sin, cos)) in trig.iter().enumerate() {
                    let pos = geom.bin_position(x * cos + y * sin);
                    let b0 = pos.floor();
                    let f = pos - b0;
                    let b0 = b0 as isize;
                    let q = filtered.row(v);
                    let at = |b: isize| if b < 0 || b >= nd as isize { 0.0 } else { q[b as usize] };
                    acc += (1.0 - f) * at(b0) + f * at(b0 + 1);
                }
                *px = acc * scale;
            }
        });
    Ok(img)
}

/// Filtered backprojection onto an `n x n` grid, clamped to non-negative attenuation.
pub fn fbp(sino: ArrayView2<'_, f64>, geom: &ScanGeometry, n: usize) -> Result<Array2<f64>> {
    Ok(fbp_linear(sino, geom, n)?.mapv(|v| v.max(0.0)))
}
