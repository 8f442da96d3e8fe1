use std::f64::consts::PI;

use crate::error::{CtError, Result};

/// Parallel-beam acquisition. Detector bins are centred on the rotation axis
/// and spaced in pixel units; views cover `[0, angular_range)` uniformly.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScanGeometry {
    pub n_views: usize,
    pub n_detectors: usize,
    pub detector_spacing: f64,
    pub angular_range: f64,
}

impl ScanGeometry {
    /// 180 views over half a turn, enough unit-spaced bins to cover the
    /// image diagonal (odd, so one bin sits on the axis).
    pub fn for_image(n: usize) -> Self {
        let mut k = (n as f64 * std::f64::consts::SQRT_2).ceil() as usize;
        if k.is_multiple_of(2) {
            k += 1;
        }
        ScanGeometry {
            n_views: 180,
            n_detectors: k,
            detector_spacing: 1.0,
            angular_range: PI,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_views == 0 {
            return Err(CtError::Geometry("n_views must be >= 1".into()));
        }
        if self.n_detectors == 0 {
            return Err(CtError::Geometry("n_detectors must be >= 1".into()));
        }
        if !(self.detector_spacing > 0.0) {
            return Err(CtError::Geometry(format!(
                "detector spacing must be > 0, got {}",
                self.detector_spacing
            )));
        }
        if !(self.angular_range > 0.0) {
            return Err(CtError::Geometry(format!(
                "angular range must be > 0, got {}",
                self.angular_range
            )));
        }
        Ok(())
    }

    pub fn angle(&self, view: usize) -> f64 {
        self.angular_range * view as f64 / self.n_views as f64
    }

    /// Signed offset of a detector bin from the axis.
    pub fn detector_offset(&self, bin: usize) -> f64 {
        (bin as f64 - (self.n_detectors as f64 - 1.0) / 2.0) * self.detector_spacing
    }

    /// Fractional bin index of a signed offset.
    pub fn bin_position(&self, offset: f64) -> f64 {
        offset / self.detector_spacing + (self.n_detectors as f64 - 1.0) / 2.0
    }
}
