use ldm_ctsim::{psnr, ssim, ImagePair};
use ldm_tensor::{no_grad, Tensor};
use ndarray::Array2;

use crate::error::Result;
use crate::model::Model;

/// Anything that maps an artifact-affected image in `[0, 1]` to a corrected one.
pub trait Corrector {
    fn correct(&self, artifact: &Array2<f64>) -> Result<Array2<f64>>;
}

/// Returns its input.
#[derive(Clone, Copy, Debug, Default)]
pub struct Identity;

impl Corrector for Identity {
    fn correct(&self, artifact: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(artifact.clone())
    }
}

impl Corrector for Model {
    fn correct(&self, artifact: &Array2<f64>) -> Result<Array2<f64>> {
        let (h, w) = artifact.dim();
        let x = Tensor::new(artifact.iter().copied().collect(), &[1, 1, h, w])?;
        let out = no_grad(|| self.net.correct(&x))?;
        Ok(Array2::from_shape_vec((h, w), out.x_hat.to_vec()).expect("output matches input shape"))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub index: usize,
    pub psnr: f64,
    pub ssim: f64,
    /// Metrics of the uncorrected input against the same reference.
    pub baseline_psnr: f64,
    pub baseline_ssim: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSummary {
    pub rows: Vec<EvalRow>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    pub mean_baseline_psnr: f64,
    pub mean_baseline_ssim: f64,
}

impl EvalSummary {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,psnr,ssim,baseline_psnr,baseline_ssim\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.index, r.psnr, r.ssim, r.baseline_psnr, r.baseline_ssim
            ));
        }
        s.push_str(&format!(
            "mean,{},{},{},{}\n",
            self.mean_psnr, self.mean_ssim, self.mean_baseline_psnr, self.mean_baseline_ssim
        ));
        s
    }
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// PSNR and SSIM (peak 1) of corrected images against their clean partners.
pub fn evaluate(corrector: &dyn Corrector, pairs: &[ImagePair]) -> Result<EvalSummary> {
    let mut rows = Vec::with_capacity(pairs.len());
    for p in pairs {
        let out = corrector.correct(&p.artifact)?;
        rows.push(EvalRow {
            index: p.index,
            psnr: psnr(out.view(), p.clean.view(), 1.0)?,
            ssim: ssim(out.view(), p.clean.view(), 1.0)?,
            baseline_psnr: psnr(p.artifact.view(), p.clean.view(), 1.0)?,
            baseline_ssim: ssim(p.artifact.view(), p.clean.view(), 1.0)?,
        });
    }
    Ok(EvalSummary {
        mean_psnr: mean(rows.iter().map(|r| r.psnr)),
        mean_ssim: mean(rows.iter().map(|r| r.ssim)),
        mean_baseline_psnr: mean(rows.iter().map(|r| r.baseline_psnr)),
        mean_baseline_ssim: mean(rows.iter().map(|r| r.baseline_ssim)),
        rows,
    })
}
