//! Central finite-difference check of autodiff gradients.

use crate::error::Result;
use crate::probe::with_kink_probe;
use crate::tensor::{no_grad, Tensor};

#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    /// Finite-difference step.
    pub h: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig { h: 1e-3 }
    }
}

#[derive(Clone, Debug)]
pub struct EntryResult {
    pub param: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl EntryResult {
    pub fn abs_err(&self) -> f64 {
        (self.analytic - self.numeric).abs()
    }
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub entries: Vec<EntryResult>,
    /// Entries whose +h / -h evaluations crossed a kink and were not compared.
    pub skipped_kinks: usize,
}

impl GradCheckReport {
    /// Largest absolute deviation relative to the largest gradient magnitude,
    /// `max_i |a_i - n_i| / max_j max(|a_j|, |n_j|)`.
    ///
    /// A central difference carries an `O(h^2)` truncation error that does not
    /// shrink with the gradient entry itself, so near-zero entries are judged
    /// against the scale of the whole gradient.
    pub fn max_rel_err(&self) -> f64 {
        let scale = self
            .entries
            .iter()
            .map(|e| e.numeric.abs().max(e.analytic.abs()))
            .fold(0.0, f64::max);
        let worst = self.entries.iter().map(EntryResult::abs_err).fold(0.0, f64::max);
        if scale == 0.0 {
            worst
        } else {
            worst / scale
        }
    }

    pub fn worst(&self) -> Option<&EntryResult> {
        self.entries.iter().max_by(|a, b| a.abs_err().total_cmp(&b.abs_err()))
    }
}

/// Compares `d loss / d params[p][i]` from backward against a central
/// difference for every `(p, i)` in `entries`. Gradients of `params` are
/// overwritten.
pub fn check(
    params: &[Tensor],
    entries: &[(usize, usize)],
    loss: impl Fn() -> Result<Tensor>,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    params.iter().for_each(Tensor::zero_grad);
    let (l, base) = with_kink_probe(&loss);
    l?.backward()?;
    let analytic: Vec<Vec<f64>> = params.iter().map(|p| p.grad().unwrap_or_default()).collect();

    let eval = || -> Result<(f64, u64)> {
        let (l, h) = with_kink_probe(|| no_grad(&loss));
        Ok((l?.item(), h))
    };

    let mut report = GradCheckReport::default();
    for &(p, i) in entries {
        let orig = params[p].data()[i];
        params[p].data_mut()[i] = orig + cfg.h;
        let plus = eval();
        params[p].data_mut()[i] = orig - cfg.h;
        let minus = eval();
        params[p].data_mut()[i] = orig;
        let ((lp, hp), (lm, hm)) = (plus?, minus?);
        if hp != base || hm != base {
            report.skipped_kinks += 1;
            continue;
        }
        report.entries.push(EntryResult {
            param: p,
            index: i,
            analytic: analytic[p][i],
            numeric: (lp - lm) / (2.0 * cfg.h),
        });
    }
    Ok(report)
}

/// Every entry of every parameter.
pub fn all_entries(params: &[Tensor]) -> Vec<(usize, usize)> {
    params
        .iter()
        .enumerate()
        .flat_map(|(p, t)| (0..t.numel()).map(move |i| (p, i)))
        .collect()
}
