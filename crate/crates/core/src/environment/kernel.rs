use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Spatial covariance g(x, y) of one environment slice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum CovarianceKernel {
    Zero,
    Constant { gamma: f64 },
    SquaredExponential { variance: f64, length_scale: f64 },
}

impl Default for CovarianceKernel {
    fn default() -> Self {
        CovarianceKernel::Zero
    }
}

impl CovarianceKernel {
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            CovarianceKernel::Zero => 0.0,
            CovarianceKernel::Constant { gamma } => gamma,
            CovarianceKernel::SquaredExponential { variance, length_scale } => {
                let r2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                variance * (-r2 / (2.0 * length_scale * length_scale)).exp()
            }
        }
    }

    /// ‖ḡ‖_∞, the supremum of g(x, x). All supported kernels are stationary.
    pub fn diagonal_sup(&self) -> f64 {
        match *self {
            CovarianceKernel::Zero => 0.0,
            CovarianceKernel::Constant { gamma } => gamma,
            CovarianceKernel::SquaredExponential { variance, .. } => variance,
        }
    }

    /// True when every slice is spatially constant.
    pub fn is_spatially_constant(&self) -> bool {
        !matches!(self, CovarianceKernel::SquaredExponential { .. })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |path: &str, message: &str| SimError::Validation {
            path: format!("environment.kernel.{path}"),
            message: message.to_string(),
        };
        match *self {
            CovarianceKernel::Zero => Ok(()),
            CovarianceKernel::Constant { gamma } => {
                if !(gamma.is_finite() && gamma >= 0.0) {
                    return Err(bad("gamma", "must be finite and non-negative"));
                }
                Ok(())
            }
            CovarianceKernel::SquaredExponential { variance, length_scale } => {
                if !(variance.is_finite() && variance >= 0.0) {
                    return Err(bad("variance", "must be finite and non-negative"));
                }
                if !(length_scale.is_finite() && length_scale > 0.0) {
                    return Err(bad("length_scale", "must be finite and positive"));
                }
                Ok(())
            }
        }
    }
}
