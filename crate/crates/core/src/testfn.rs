//! Test functions φ with closed-form Laplacian and heat evolution.

use serde::{Deserialize, Serialize};

/// φ on ℝ^d. `Cosine` depends on the first coordinate only; `GaussianBump` is
/// isotropic with the same center on every axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum TestFunction {
    Constant { value: f64 },
    Cosine {
        #[serde(default = "unit")]
        amplitude: f64,
        wavenumber: f64,
    },
    GaussianBump {
        #[serde(default = "unit")]
        amplitude: f64,
        center: f64,
        width: f64,
    },
}

fn unit() -> f64 {
    1.0
}

impl TestFunction {
    pub fn one() -> Self {
        TestFunction::Constant { value: 1.0 }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            TestFunction::Constant { value } => value,
            TestFunction::Cosine { amplitude, wavenumber } => amplitude * (wavenumber * x[0]).cos(),
            TestFunction::GaussianBump { amplitude, center, width } => {
                let r2: f64 = x.iter().map(|v| (v - center) * (v - center)).sum();
                amplitude * (-r2 / (2.0 * width * width)).exp()
            }
        }
    }

    pub fn laplacian(&self, x: &[f64]) -> f64 {
        match *self {
            TestFunction::Constant { .. } => 0.0,
            TestFunction::Cosine { wavenumber, .. } => -wavenumber * wavenumber * self.eval(x),
            TestFunction::GaussianBump { center, width, .. } => {
                let r2: f64 = x.iter().map(|v| (v - center) * (v - center)).sum();
                let s2 = width * width;
                self.eval(x) * (r2 / (s2 * s2) - x.len() as f64 / s2)
            }
        }
    }

    /// S_t φ = E φ(x + B_t) for a standard d-dimensional Brownian motion.
    pub fn heat_evolve(&self, t: f64, dim: usize) -> TestFunction {
        match *self {
            TestFunction::Constant { value } => TestFunction::Constant { value },
            TestFunction::Cosine { amplitude, wavenumber } => TestFunction::Cosine {
                amplitude: amplitude * (-wavenumber * wavenumber * t / 2.0).exp(),
                wavenumber,
            },
            TestFunction::GaussianBump { amplitude, center, width } => {
                let s2 = width * width;
                TestFunction::GaussianBump {
                    amplitude: amplitude * (s2 / (s2 + t)).powf(dim as f64 / 2.0),
                    center,
                    width: (s2 + t).sqrt(),
                }
            }
        }
    }

    pub fn sup_norm(&self) -> f64 {
        match *self {
            TestFunction::Constant { value } => value.abs(),
            TestFunction::Cosine { amplitude, .. } | TestFunction::GaussianBump { amplitude, .. } => amplitude.abs(),
        }
    }
}
