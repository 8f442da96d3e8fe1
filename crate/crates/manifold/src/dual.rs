use ndarray::Array2;

/// Bregman dual variable, one row per patch point.
#[derive(Clone, Debug, PartialEq)]
pub struct DualVariable {
    pub values: Array2<f64>,
}

impl DualVariable {
    pub fn zeros(m: usize, d: usize) -> Self {
        DualVariable {
            values: Array2::zeros((m, d)),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.dim()
    }

    /// `(min, max)` over all entries, `(0, 0)` when empty.
    pub fn range(&self) -> (f64, f64) {
        if self.values.is_empty() {
            return (0.0, 0.0);
        }
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Joint min-max normalization onto `[0, 1]`. A constant dual maps to zero.
    pub fn normalize(&self) -> DualVariable {
        let (lo, hi) = self.range();
        let span = hi - lo;
        if !(span > 0.0) || !span.is_finite() {
            return DualVariable::zeros(self.values.nrows(), self.values.ncols());
        }
        DualVariable {
            values: self.values.mapv(|v| ((v - lo) / span).clamp(0.0, 1.0)),
        }
    }
}

/// Applies [`DualVariable::normalize`].
pub fn normalize_dual(d_hat: &DualVariable) -> DualVariable {
    d_hat.normalize()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn affine_map() {
        let d = DualVariable {
            values: array![[-1.0, 0.0, 3.0]],
        };
        assert_eq!(normalize_dual(&d).values, array![[0.0, 0.25, 1.0]]);
    }

    #[test]
    fn constant_becomes_zero() {
        let d = DualVariable {
            values: Array2::from_elem((3, 4), 2.5),
        };
        assert_eq!(d.normalize(), DualVariable::zeros(3, 4));
    }
}
