//! Metal-trace corruption and linear-interpolation inpainting of sinograms.

use ndarray::Array1;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{CtError, Result};
use crate::projector::Sinogram;

/// Beam-hardening surrogate applied inside the metal trace:
/// `v -> v + severity v^2 / (1 + v)` plus zero-mean noise with standard
/// deviation `severity * noise * sqrt(v)`.
pub fn corrupt_metal(sino: &Sinogram, severity: f64, noise: f64, rng: &mut impl Rng) -> Result<Sinogram> {
    if !(severity >= 0.0) {
        return Err(CtError::Invalid(format!("severity must be >= 0, got {severity}")));
    }
    if !(noise >= 0.0) {
        return Err(CtError::Invalid(format!("noise level must be >= 0, got {noise}")));
    }
    let mut out = sino.clone();
    if severity == 0.0 {
        return Ok(out);
    }
    for (v, &t) in out.data.iter_mut().zip(&sino.metal_trace) {
        if !t {
            continue;
        }
        let p = v.max(0.0);
        let z: f64 = StandardNormal.sample(rng);
        *v = p + severity * p * p / (1.0 + p) + severity * noise * p.sqrt() * z;
    }
    Ok(out)
}

/// Replaces traced bins of each view by linear interpolation between the
/// nearest untraced neighbours. Runs touching the detector edge take the
/// single available neighbour. A view traced end to end is filled with the
/// mean of the nearest usable views on either side.
pub fn li_correct(sino: &Sinogram) -> Sinogram {
    let mut out = sino.clone();
    let (nv, nd) = sino.data.dim();
    let mut full = vec![false; nv];
    for v in 0..nv {
        let trace = sino.metal_trace.row(v);
        if trace.iter().all(|&t| !t) {
            continue;
        }
        if trace.iter().all(|&t| t) {
            full[v] = true;
            continue;
        }
        let mut row = out.data.row_mut(v);
        let mut b = 0;
        while b < nd {
            if !trace[b] {
                b += 1;
                continue;
            }
            let start = b;
            while b < nd && trace[b] {
                b += 1;
            }
            let left = start.checked_sub(1).map(|l| (l, row[l]));
            let right = (b < nd).then(|| (b, row[b]));
            for k in start..b {
                row[k] = match (left, right) {
                    (Some((l, lv)), Some((r, rv))) => lv + (rv - lv) * (k - l) as f64 / (r - l) as f64,
                    (Some((_, lv)), None) => lv,
                    (None, Some((_, rv))) => rv,
                    (None, None) => unreachable!("view has untraced bins"),
                };
            }
        }
    }
    if full.iter().any(|&f| f) {
        if full.iter().all(|&f| f) {
            log::warn!("every view lies inside the metal trace; leaving the sinogram unchanged");
            return out;
        }
        for v in (0..nv).filter(|&v| full[v]) {
            log::warn!("view {v} lies entirely inside the metal trace; using neighbouring views");
            let prev = (1..nv)
                .map(|k| (v + nv - k) % nv)
                .find(|&u| !full[u])
                .expect("a usable view exists");
            let next = (1..nv)
                .map(|k| (v + k) % nv)
                .find(|&u| !full[u])
                .expect("a usable view exists");
            let avg: Array1<f64> = (&out.data.row(prev) + &out.data.row(next)) * 0.5;
            out.data.row_mut(v).assign(&avg);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sino(data: Array2<f64>, trace: Array2<bool>) -> Sinogram {
        Sinogram {
            data,
            metal_trace: trace,
        }
    }

    #[test]
    fn interpolates_interior_run() {
        let mut data = Array2::zeros((1, 16));
        data[[0, 9]] = 1.0;
        data[[0, 13]] = 5.0;
        let mut trace = Array2::from_elem((1, 16), false);
        for k in 10..=12 {
            trace[[0, k]] = true;
            data[[0, k]] = 100.0;
        }
        let out = li_correct(&sino(data, trace));
        assert_eq!(
            out.data.row(0).iter().skip(10).take(3).copied().collect::<Vec<_>>(),
            vec![2.0, 3.0, 4.0]
        );
    }

    #[test]
    fn edge_runs_extend_neighbour() {
        let data = Array2::from_shape_fn((1, 5), |(_, k)| k as f64);
        let trace = Array2::from_shape_fn((1, 5), |(_, k)| k == 0 || k == 4);
        let out = li_correct(&sino(data, trace));
        assert_eq!(out.data.row(0).to_vec(), vec![1.0, 1.0, 2.0, 3.0, 3.0]);
    }

    #[test]
    fn fully_traced_view_uses_neighbours() {
        let data = Array2::from_shape_fn((3, 4), |(v, _)| v as f64 * 10.0);
        let trace = Array2::from_shape_fn((3, 4), |(v, _)| v == 1);
        let out = li_correct(&sino(data, trace));
        assert!(out.data.row(1).iter().all(|&x| x == 10.0));
    }

    #[test]
    fn zero_severity_and_empty_trace_are_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let data = Array2::from_shape_fn((4, 6), |(i, j)| (i * j) as f64 * 0.1);
        let s = sino(data.clone(), Array2::from_elem((4, 6), true));
        assert_eq!(corrupt_metal(&s, 0.0, 0.05, &mut rng).unwrap(), s);
        let s = sino(data, Array2::from_elem((4, 6), false));
        assert_eq!(corrupt_metal(&s, 1.0, 0.05, &mut rng).unwrap(), s);
        assert!(corrupt_metal(&s, -1.0, 0.0, &mut rng).is_err());
    }

    #[test]
    fn corruption_raises_traced_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = sino(
            Array2::from_elem((1, 2), 2.0),
            Array2::from_shape_fn((1, 2), |(_, j)| j == 1),
        );
        let c = corrupt_metal(&s, 1.0, 0.0, &mut rng).unwrap();
        assert_eq!(c.data[[0, 0]], 2.0);
        assert!((c.data[[0, 1]] - (2.0 + 4.0 / 3.0)).abs() < 1e-12);
    }
}
