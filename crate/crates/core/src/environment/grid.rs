use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Tensor lattice with the same origin, spacing and point count along each axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin: f64,
    pub spacing: f64,
    pub points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { origin: -4.0, spacing: 0.1, points: 81 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub spec: GridSpec,
    pub dim: usize,
}

impl Grid {
    pub fn new(spec: GridSpec, dim: usize) -> Result<Self> {
        if spec.points == 0 {
            return Err(SimError::Config("grid must have at least one point".into()));
        }
        if !(spec.spacing.is_finite() && spec.spacing > 0.0) || !spec.origin.is_finite() {
            return Err(SimError::Config("grid origin and spacing must be finite, spacing > 0".into()));
        }
        if dim == 0 || dim > 3 {
            return Err(SimError::Config(format!("dimension {dim} not in 1..=3")));
        }
        Ok(Grid { spec, dim })
    }

    pub fn len(&self) -> usize {
        self.spec.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn node(&self, mut flat: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim];
        for xi in x.iter_mut() {
            let i = flat % self.spec.points;
            flat /= self.spec.points;
            *xi = self.spec.origin + i as f64 * self.spec.spacing;
        }
        x
    }

    /// Nearest node index; exact ties go to the lower index. The flag reports
    /// whether any coordinate lay outside the grid extent and was clamped.
    pub fn nearest(&self, x: &[f64]) -> (usize, bool) {
        let last = (self.spec.points - 1) as f64;
        let mut flat = 0usize;
        let mut stride = 1usize;
        let mut clamped = false;
        for &xi in x.iter().take(self.dim) {
            let u = (xi - self.spec.origin) / self.spec.spacing;
            let mut i = (u - 0.5).ceil();
            if !(u >= 0.0 && u <= last) {
                clamped = true;
            }
            i = i.clamp(0.0, last);
            flat += i as usize * stride;
            stride *= self.spec.points;
        }
        (flat, clamped)
    }
}
