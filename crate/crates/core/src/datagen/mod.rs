//! Procedural velocity families, source-parameter sampling, normalization
//! and on-disk dataset assembly.

mod dataset;
mod family;
mod sources;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dataset::{
    build_dataset, dataset_dir, verify, Dataset, DatasetManifest, DatasetRequest, Normalization,
    Sample, SampleEntry, SampleMeta, SplitBounds, VerifyReport, MANIFEST_FILE, MANIFEST_VERSION,
};
pub use family::{generate_velocity, generate_velocity_with_fault, FamilyKind, FamilySpec, Fault};
pub use sources::{
    sample_sources, DatasetKind, FIXED_FREQUENCY, FIXED_LOCATIONS, FREQUENCY_RANGE,
    LOCATION_WINDOWS, N_SOURCES,
};

/// Affine map of `[lo, hi]` onto `[-1, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: f64,
    pub hi: f64,
}

impl Bounds {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "normalization bounds need lo < hi, got [{lo}, {hi}]"
            )));
        }
        Ok(Self { lo, hi })
    }

    /// Symmetric bounds `[-a, a]`.
    pub fn symmetric(a: f64) -> Result<Self> {
        Self::new(-a, a)
    }

    pub fn normalize(&self, x: f64) -> f64 {
        2.0 * (x - self.lo) / (self.hi - self.lo) - 1.0
    }

    pub fn denormalize(&self, y: f64) -> f64 {
        (y + 1.0) * 0.5 * (self.hi - self.lo) + self.lo
    }
}

pub fn normalize(x: &[f32], lo: f64, hi: f64) -> Result<Vec<f32>> {
    let b = Bounds::new(lo, hi)?;
    Ok(x.iter().map(|&v| b.normalize(v as f64) as f32).collect())
}

pub fn denormalize(y: &[f32], lo: f64, hi: f64) -> Result<Vec<f32>> {
    let b = Bounds::new(lo, hi)?;
    Ok(y.iter().map(|&v| b.denormalize(v as f64) as f32).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_midpoint() {
        let b = Bounds::new(1500.0, 4500.0).unwrap();
        assert_eq!(b.normalize(1500.0), -1.0);
        assert_eq!(b.normalize(4500.0), 1.0);
        assert_eq!(b.normalize(3000.0), 0.0);
        assert!(Bounds::new(1.0, 1.0).is_err());
        assert!(normalize(&[1.0], 2.0, 1.0).is_err());
    }
}
