use std::fmt::Debug;

use serde::{Deserialize, Serialize};

use super::FieldJet;

/// A smooth, non-random B(t, x) with B(0, ·) = 0 used as a degenerate environment.
pub trait DeterministicField: Send + Sync + Debug {
    fn value(&self, t: f64, x: &[f64]) -> f64;
    fn gradient(&self, t: f64, x: &[f64], out: &mut [f64]);
    fn laplacian(&self, t: f64, x: &[f64]) -> f64;
    /// Bound L with |B(t, x) − B(s, x)| ≤ L|t − s|, if known.
    fn time_lipschitz(&self) -> Option<f64> {
        None
    }
}

/// Built-in fields selectable from a config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum BuiltinField {
    /// B ≡ 0.
    Zero,
    /// B(t, x) = rate·t.
    Linear { rate: f64 },
    /// B(t, x) = amplitude·t·sin(wavenumber·x₁).
    SineProduct { amplitude: f64, wavenumber: f64 },
}

impl DeterministicField for BuiltinField {
    fn value(&self, t: f64, x: &[f64]) -> f64 {
        match *self {
            BuiltinField::Zero => 0.0,
            BuiltinField::Linear { rate } => rate * t,
            BuiltinField::SineProduct { amplitude, wavenumber } => amplitude * t * (wavenumber * x[0]).sin(),
        }
    }

    fn gradient(&self, t: f64, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|g| *g = 0.0);
        if let BuiltinField::SineProduct { amplitude, wavenumber } = *self {
            out[0] = amplitude * t * wavenumber * (wavenumber * x[0]).cos();
        }
    }

    fn laplacian(&self, t: f64, x: &[f64]) -> f64 {
        match *self {
            BuiltinField::SineProduct { amplitude, wavenumber } => {
                -amplitude * t * wavenumber * wavenumber * (wavenumber * x[0]).sin()
            }
            _ => 0.0,
        }
    }

    fn time_lipschitz(&self) -> Option<f64> {
        Some(match *self {
            BuiltinField::Zero => 0.0,
            BuiltinField::Linear { rate } => rate.abs(),
            BuiltinField::SineProduct { amplitude, .. } => amplitude.abs(),
        })
    }
}

/// Degenerate environment ξ_k(x) = √n·(B(k/n, x) − B((k−1)/n, x))·1{|·| < ½}.
#[derive(Clone, Debug)]
pub struct DeterministicEnvironment {
    n: usize,
    dim: usize,
    field: std::sync::Arc<dyn DeterministicField>,
    exact: bool,
}

impl DeterministicEnvironment {
    pub fn new(n: usize, dim: usize, field: std::sync::Arc<dyn DeterministicField>) -> Self {
        let exact = field.time_lipschitz().is_some_and(|l| l / (n as f64) < 0.5);
        DeterministicEnvironment { n, dim, field, exact }
    }

    pub fn field(&self) -> &dyn DeterministicField {
        self.field.as_ref()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn increment(&self, k: usize, x: &[f64]) -> f64 {
        let n = self.n as f64;
        super::field::truncated_increment(
            self.field.value(k as f64 / n, x) - self.field.value((k - 1) as f64 / n, x),
        )
    }

    pub fn xi(&self, k: usize, x: &[f64]) -> f64 {
        (self.n as f64).sqrt() * self.increment(k, x)
    }

    pub fn cumulative(&self, m: usize, x: &[f64]) -> f64 {
        if self.exact {
            self.field.value(m as f64 / self.n as f64, x) - self.field.value(0.0, x)
        } else {
            (1..=m).map(|i| self.increment(i, x)).sum()
        }
    }

    pub fn jet(&self, m: usize, x: &[f64]) -> FieldJet {
        let t = m as f64 / self.n as f64;
        let mut g = [0.0; 3];
        self.field.gradient(t, x, &mut g[..self.dim]);
        FieldJet { value: self.field.value(t, x), gradient: g, laplacian: self.field.laplacian(t, x) }
    }
}
