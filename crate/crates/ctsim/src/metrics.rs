use ndarray::ArrayView2;

use crate::error::{CtError, Result};

pub const SSIM_WINDOW: usize = 8;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

fn same_shape(a: &ArrayView2<'_, f64>, b: &ArrayView2<'_, f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(CtError::Shape {
            what: "image pair",
            expected: a.dim(),
            got: b.dim(),
        });
    }
    Ok(())
}

/// Peak signal-to-noise ratio in dB; `+inf` when the images are identical.
pub fn psnr(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, peak: f64) -> Result<f64> {
    same_shape(&a, &b)?;
    if !(peak > 0.0) {
        return Err(CtError::Invalid(format!("peak must be > 0, got {peak}")));
    }
    let n = a.len() as f64;
    let mse = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// Mean SSIM over every `8 x 8` window (stride 1, uniform weights,
/// population statistics), dynamic range `peak`.
pub fn ssim(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, peak: f64) -> Result<f64> {
    same_shape(&a, &b)?;
    if !(peak > 0.0) {
        return Err(CtError::Invalid(format!("peak must be > 0, got {peak}")));
    }
    let (h, w) = a.dim();
    let win = SSIM_WINDOW.min(h).min(w);
    if win == 0 {
        return Err(CtError::Invalid("empty image".into()));
    }
    let c1 = (K1 * peak).powi(2);
    let c2 = (K2 * peak).powi(2);
    let inv = 1.0 / (win * win) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..=h - win {
        for j in 0..=w - win {
            let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for di in 0..win {
                for dj in 0..win {
                    let x = a[[i + di, j + dj]];
                    let y = b[[i + di, j + dj]];
                    sa += x;
                    sb += y;
                    saa += x * x;
                    sbb += y * y;
                    sab += x * y;
                }
            }
            let (ma, mb) = (sa * inv, sb * inv);
            let va = saa * inv - ma * ma;
            let vb = sbb * inv - mb * mb;
            let cov = sab * inv - ma * mb;
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn psnr_constant_offset() {
        let a = Array2::from_elem((4, 4), 0.5);
        let b = Array2::from_elem((4, 4), 0.6);
        assert!((psnr(a.view(), b.view(), 1.0).unwrap() - 20.0).abs() < 1e-9);
        assert_eq!(psnr(a.view(), a.view(), 1.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn ssim_identity_and_negative() {
        let a = Array2::from_shape_fn((16, 16), |(i, j)| ((i * 3 + j * 5) % 7) as f64 / 7.0 - 0.4);
        assert!((ssim(a.view(), a.view(), 1.0).unwrap() - 1.0).abs() < 1e-12);
        // every 8x8 window of a checkerboard has zero mean
        let a = Array2::from_shape_fn((16, 16), |(i, j)| if (i + j) % 2 == 0 { 0.3 } else { -0.3 });
        let neg = a.mapv(|v| -v);
        assert!(ssim(a.view(), neg.view(), 1.0).unwrap() <= 0.0);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let a = Array2::zeros((4, 4));
        let b = Array2::zeros((4, 5));
        assert!(psnr(a.view(), b.view(), 1.0).is_err());
        assert!(ssim(a.view(), b.view(), 1.0).is_err());
    }
}
