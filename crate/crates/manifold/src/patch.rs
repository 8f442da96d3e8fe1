//! Patch-set assembly: each point is an `s x s` image patch concatenated with
//! the code vector at the matching spatial location of an `s`-fold
//! down-sampled feature map.

use ndarray::{s, Array2, ArrayView2, ArrayView3};

use crate::error::{shape, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    /// Network output for an artifact-affected input.
    Corrected,
    /// Original artifact-free image.
    Free,
}

/// One image and its compressed code, `[s*s, H/s, W/s]`.
#[derive(Clone, Copy, Debug)]
pub struct PatchSource<'a> {
    pub image: ArrayView2<'a, f64>,
    pub code: ArrayView3<'a, f64>,
}

/// `m x d` point cloud with a per-row branch tag.
#[derive(Clone, Debug)]
pub struct PatchSet {
    pub points: Array2<f64>,
    pub provenance: Vec<Branch>,
}

impl PatchSet {
    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }
}

/// Builds the patch set of the corrected branch followed by the free branch.
///
/// Rows enumerate images in input order and, within an image, patch
/// locations in row-major order. Row layout is `[patch pixels (row-major) | code]`.
pub fn build_patch_set<'a>(corrected: &[PatchSource<'a>], free: &[PatchSource<'a>], s: usize) -> Result<PatchSet> {
    if s == 0 {
        return Err(crate::ManifoldError::Config("patch size must be positive".into()));
    }
    let d = 2 * s * s;
    let mut rows: Vec<f64> = Vec::new();
    let mut provenance = Vec::new();
    for (branch, sources) in [(Branch::Corrected, corrected), (Branch::Free, free)] {
        for (idx, src) in sources.iter().enumerate() {
            let (h, w) = src.image.dim();
            if h % s != 0 {
                return Err(shape(
                    format!("image {idx} height (multiple of {s})"),
                    h.next_multiple_of(s),
                    h,
                ));
            }
            if w % s != 0 {
                return Err(shape(
                    format!("image {idx} width (multiple of {s})"),
                    w.next_multiple_of(s),
                    w,
                ));
            }
            let (cc, ch, cw) = src.code.dim();
            if cc != s * s {
                return Err(shape(format!("code {idx} channels"), s * s, cc));
            }
            if ch != h / s {
                return Err(shape(format!("code {idx} height"), h / s, ch));
            }
            if cw != w / s {
                return Err(shape(format!("code {idx} width"), w / s, cw));
            }
            for i in 0..ch {
                for j in 0..cw {
                    let patch = src.image.slice(s![i * s..(i + 1) * s, j * s..(j + 1) * s]);
                    rows.extend(patch.iter());
                    rows.extend(src.code.slice(s![.., i, j]).iter());
                    provenance.push(branch);
                }
            }
        }
    }
    let m = provenance.len();
    let points = Array2::from_shape_vec((m, d), rows).expect("row length is 2 s^2");
    Ok(PatchSet { points, provenance })
}
