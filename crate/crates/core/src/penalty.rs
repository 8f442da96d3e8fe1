//! Differentiable patch sets and the manifold penalty.

use ldm_manifold::DualVariable;
use ldm_tensor::{frobenius_sq, Tensor};
use ndarray::Array2;

use crate::config::PenaltyReduction;
use crate::error::{DnError, Result};

/// One image batch `[N, 1, H, W]` with its code `[N, s^2, H/s, W/s]`.
#[derive(Clone, Copy)]
pub struct PatchInput<'a> {
    pub image: &'a Tensor,
    pub code: &'a Tensor,
}

/// Stacks `[patch pixels | code]` rows for every source, corrected branch
/// first. The row order matches `ldm_manifold::build_patch_set`.
pub fn patch_tensor(corrected: &[PatchInput<'_>], free: &[PatchInput<'_>], s: usize) -> Result<Tensor> {
    let mut blocks = Vec::with_capacity(corrected.len() + free.len());
    for src in corrected.iter().chain(free) {
        let pixels = src.image.space_to_rows(s)?;
        let code = src.code.space_to_rows(1)?;
        if pixels.shape()[0] != code.shape()[0] {
            return Err(DnError::Config(format!(
                "image {:?} and code {:?} do not tile the same grid at s = {s}",
                src.image.shape(),
                src.code.shape()
            )));
        }
        blocks.push(Tensor::concat_cols(&[&pixels, &code])?);
    }
    if blocks.is_empty() {
        return Err(DnError::Config("patch set needs at least one source".into()));
    }
    let refs: Vec<&Tensor> = blocks.iter().collect();
    Ok(Tensor::concat_rows(&refs)?)
}

/// Copies a `[m, d]` tensor into an array.
pub fn to_array(t: &Tensor) -> Result<Array2<f64>> {
    match *t.shape() {
        [m, d] => Ok(Array2::from_shape_vec((m, d), t.to_vec()).expect("shape matches")),
        ref s => Err(DnError::Config(format!("expected a matrix, got shape {s:?}"))),
    }
}

/// `lambda * ||U - P + d||_F^2`, optionally divided by the entry count.
/// `U` and `d` are constants; the gradient flows into `p_theta` only.
pub fn ldm_penalty(
    u: &Array2<f64>,
    p_theta: &Tensor,
    dual: &DualVariable,
    lambda: f64,
    reduction: PenaltyReduction,
) -> Result<Tensor> {
    let shape = p_theta.shape();
    if shape != [u.nrows(), u.ncols()] || u.dim() != dual.shape() {
        return Err(DnError::Config(format!(
            "penalty operands disagree: U {:?}, P {:?}, d {:?}",
            u.dim(),
            shape,
            dual.shape()
        )));
    }
    let target: Vec<f64> = u.iter().zip(&dual.values).map(|(a, b)| a + b).collect();
    let target = Tensor::new(target, shape)?;
    let sq = frobenius_sq(&target.sub(p_theta)?);
    let scale = match reduction {
        PenaltyReduction::Sum => lambda,
        PenaltyReduction::Mean => lambda / p_theta.numel().max(1) as f64,
    };
    Ok(sq.scale(scale))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_agreement_is_zero() {
        let p = Tensor::parameter(vec![0.125, 0.375, -0.75, 2.0], &[2, 2]).unwrap();
        let dual = DualVariable {
            values: Array2::from_shape_vec((2, 2), vec![0.5, 0.0, 1.0, 0.25]).unwrap(),
        };
        let u = &to_array(&p).unwrap() - &dual.values;
        let pen = ldm_penalty(&u, &p, &dual, 0.6, PenaltyReduction::Sum).unwrap();
        assert_eq!(pen.item(), 0.0);
    }

    #[test]
    fn zero_lambda_gives_zero_gradient() {
        let p = Tensor::parameter(vec![1.0, -2.0, 3.0], &[1, 3]).unwrap();
        let u = Array2::from_elem((1, 3), 7.0);
        let pen = ldm_penalty(&u, &p, &DualVariable::zeros(1, 3), 0.0, PenaltyReduction::Sum).unwrap();
        pen.backward().unwrap();
        assert_eq!(pen.item(), 0.0);
        assert!(p.grad().unwrap().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let p = Tensor::parameter(vec![0.0; 6], &[2, 3]).unwrap();
        let u = Array2::zeros((3, 2));
        assert!(ldm_penalty(&u, &p, &DualVariable::zeros(3, 2), 1.0, PenaltyReduction::Sum).is_err());
    }
}
