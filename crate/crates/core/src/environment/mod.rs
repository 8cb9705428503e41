//! Random environments ξ_k(x): i.i.d. in time, Gaussian and spatially correlated,
//! bounded by √n/2, plus smooth and deterministic variants with derivatives.

mod deterministic;
mod field;
mod grid;
mod kernel;
mod smooth;

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use deterministic::{BuiltinField, DeterministicEnvironment, DeterministicField};
pub use field::{
    branch_probabilities, eval_field, field_from_smooth_increments, truncated_increment, CumulativeField,
    CumulativeKind, EnvironmentField, FieldSampler, FieldValues,
};
pub use grid::{Grid, GridSpec};
pub use kernel::CovarianceKernel;
pub use smooth::{SmoothRealization, SpectralBasis};

use crate::error::{Result, SimError};

/// B, ∇B and ΔB at one point. Only the first `dim` gradient entries are used.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FieldJet {
    pub value: f64,
    pub gradient: [f64; 3],
    pub laplacian: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum EnvironmentMode {
    Random,
    SmoothGaussian {
        #[serde(default = "default_order")]
        order: usize,
    },
    Deterministic { field: BuiltinField },
}

fn default_order() -> usize {
    64
}

impl Default for EnvironmentMode {
    fn default() -> Self {
        EnvironmentMode::Random
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentConfig {
    pub n: usize,
    #[serde(default)]
    pub nu: f64,
    #[serde(default = "one")]
    pub dim: usize,
    #[serde(default)]
    pub kernel: CovarianceKernel,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub mode: EnvironmentMode,
    /// Clip bound for |ξ|; defaults to √n/2 and may not exceed it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
}

fn one() -> usize {
    1
}

impl EnvironmentConfig {
    pub fn new(n: usize, nu: f64, kernel: CovarianceKernel) -> Self {
        EnvironmentConfig {
            n,
            nu,
            dim: 1,
            kernel,
            grid: GridSpec::default(),
            mode: EnvironmentMode::Random,
            bound: None,
        }
    }

    pub fn deterministic(n: usize, field: BuiltinField) -> Self {
        EnvironmentConfig {
            n,
            nu: 0.0,
            dim: 1,
            kernel: CovarianceKernel::Zero,
            grid: GridSpec::default(),
            mode: EnvironmentMode::Deterministic { field },
            bound: None,
        }
    }

    pub fn bound(&self) -> f64 {
        self.bound.unwrap_or((self.n as f64).sqrt() / 2.0)
    }

    /// b = ν + ‖ḡ‖_∞/2.
    pub fn growth_rate(&self) -> f64 {
        self.nu + self.kernel.diagonal_sup() / 2.0
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |path: &str, message: String| SimError::Validation {
            path: format!("environment.{path}"),
            message,
        };
        if self.n == 0 {
            return Err(bad("n", "must be positive".into()));
        }
        if !self.nu.is_finite() {
            return Err(bad("nu", "must be finite".into()));
        }
        if self.dim == 0 || self.dim > 3 {
            return Err(bad("dim", format!("{} not in 1..=3", self.dim)));
        }
        self.kernel.validate()?;
        Grid::new(self.grid.clone(), self.dim).map_err(|e| bad("grid", e.to_string()))?;
        if let Some(b) = self.bound {
            let max = (self.n as f64).sqrt() / 2.0;
            if !(b.is_finite() && b >= 0.0 && b <= max) {
                return Err(bad("bound", format!("must lie in [0, sqrt(n)/2 = {max}]")));
            }
        }
        if let EnvironmentMode::SmoothGaussian { order } = self.mode {
            if order < 2 {
                return Err(bad("mode.order", "must be at least 2".into()));
            }
        }
        Ok(())
    }
}

/// Read access to one realized environment.
pub trait Environment: Send + Sync {
    fn n(&self) -> usize;
    fn dim(&self) -> usize;
    /// ξ_k(x) for k ≥ 1.
    fn xi(&self, k: usize, x: &[f64]) -> f64;
    /// Bⁿ_{m/n}(x) = n^{-1/2} Σ_{k ≤ m} ξ_k(x).
    fn cumulative(&self, m: usize, x: &[f64]) -> f64;
    /// Limit field with derivatives at lattice time m/n, where available.
    fn jet(&self, _m: usize, _x: &[f64]) -> Option<FieldJet> {
        None
    }
}

/// Lattice slices ξ_1..ξ_K with cached running sums.
#[derive(Clone, Debug)]
pub struct LatticeRealization {
    n: usize,
    dim: usize,
    slices: Vec<EnvironmentField>,
    cumulative: CumulativeField,
    clipped: u64,
}

impl LatticeRealization {
    pub fn from_slices(n: usize, dim: usize, grid: Arc<Grid>, slices: Vec<EnvironmentField>, clipped: u64) -> Self {
        let cumulative = CumulativeField::from_slices(n, grid, &slices);
        LatticeRealization { n, dim, slices, cumulative, clipped }
    }

    pub fn slices(&self) -> &[EnvironmentField] {
        &self.slices
    }

    pub fn cumulative_field(&self) -> &CumulativeField {
        &self.cumulative
    }

    pub fn clipped(&self) -> u64 {
        self.clipped
    }

    pub fn clamp_count(&self) -> u64 {
        self.slices.iter().map(|s| s.clamp_count()).sum()
    }

    pub fn generations(&self) -> usize {
        self.slices.len()
    }
}

impl Environment for LatticeRealization {
    fn n(&self) -> usize {
        self.n
    }
    fn dim(&self) -> usize {
        self.dim
    }
    #[inline]
    fn xi(&self, k: usize, x: &[f64]) -> f64 {
        self.slices[k - 1].eval(x)
    }
    fn cumulative(&self, m: usize, x: &[f64]) -> f64 {
        self.cumulative.eval(m, x)
    }
}

impl Environment for SmoothRealization {
    fn n(&self) -> usize {
        SmoothRealization::n(self)
    }
    fn dim(&self) -> usize {
        self.basis().dim
    }
    fn xi(&self, k: usize, x: &[f64]) -> f64 {
        SmoothRealization::xi(self, k, x)
    }
    fn cumulative(&self, m: usize, x: &[f64]) -> f64 {
        SmoothRealization::cumulative(self, m, x)
    }
    fn jet(&self, m: usize, x: &[f64]) -> Option<FieldJet> {
        Some(SmoothRealization::jet(self, m, x))
    }
}

impl Environment for DeterministicEnvironment {
    fn n(&self) -> usize {
        DeterministicEnvironment::n(self)
    }
    fn dim(&self) -> usize {
        DeterministicEnvironment::dim(self)
    }
    fn xi(&self, k: usize, x: &[f64]) -> f64 {
        DeterministicEnvironment::xi(self, k, x)
    }
    fn cumulative(&self, m: usize, x: &[f64]) -> f64 {
        DeterministicEnvironment::cumulative(self, m, x)
    }
    fn jet(&self, m: usize, x: &[f64]) -> Option<FieldJet> {
        Some(DeterministicEnvironment::jet(self, m, x))
    }
}

/// Any realized environment.
#[derive(Clone, Debug)]
pub enum EnvironmentRealization {
    Lattice(LatticeRealization),
    Smooth(SmoothRealization),
    Deterministic(DeterministicEnvironment),
}

impl Environment for EnvironmentRealization {
    fn n(&self) -> usize {
        match self {
            Self::Lattice(e) => e.n,
            Self::Smooth(e) => Environment::n(e),
            Self::Deterministic(e) => e.n(),
        }
    }
    fn dim(&self) -> usize {
        match self {
            Self::Lattice(e) => e.dim,
            Self::Smooth(e) => Environment::dim(e),
            Self::Deterministic(e) => e.dim(),
        }
    }
    #[inline]
    fn xi(&self, k: usize, x: &[f64]) -> f64 {
        match self {
            Self::Lattice(e) => e.xi(k, x),
            Self::Smooth(e) => Environment::xi(e, k, x),
            Self::Deterministic(e) => Environment::xi(e, k, x),
        }
    }
    fn cumulative(&self, m: usize, x: &[f64]) -> f64 {
        match self {
            Self::Lattice(e) => Environment::cumulative(e, m, x),
            Self::Smooth(e) => Environment::cumulative(e, m, x),
            Self::Deterministic(e) => Environment::cumulative(e, m, x),
        }
    }
    fn jet(&self, m: usize, x: &[f64]) -> Option<FieldJet> {
        match self {
            Self::Lattice(_) => None,
            Self::Smooth(e) => Some(e.jet(m, x)),
            Self::Deterministic(e) => Some(e.jet(m, x)),
        }
    }
}

enum FactoryKind {
    Random(FieldSampler),
    Smooth(Arc<SpectralBasis>),
    Deterministic(Arc<dyn DeterministicField>),
}

/// Pre-processed config (Cholesky factor, spectral basis) that realizes
/// independent environments cheaply.
pub struct EnvironmentFactory {
    config: EnvironmentConfig,
    grid: Arc<Grid>,
    kind: FactoryKind,
}

impl EnvironmentFactory {
    pub fn new(config: &EnvironmentConfig) -> Result<Self> {
        config.validate()?;
        let grid = Arc::new(Grid::new(config.grid.clone(), config.dim)?);
        let kind = match &config.mode {
            EnvironmentMode::Random => {
                let mean = config.nu / (config.n as f64).sqrt();
                FactoryKind::Random(FieldSampler::new(grid.clone(), &config.kernel, mean, config.bound())?)
            }
            EnvironmentMode::SmoothGaussian { order } => {
                FactoryKind::Smooth(Arc::new(SpectralBasis::new(&config.kernel, config.dim, *order)?))
            }
            EnvironmentMode::Deterministic { field } => FactoryKind::Deterministic(Arc::new(field.clone())),
        };
        Ok(EnvironmentFactory { config: config.clone(), grid, kind })
    }

    /// Deterministic environment from a user-supplied field.
    pub fn with_field(n: usize, dim: usize, field: Arc<dyn DeterministicField>) -> Result<Self> {
        let mut config = EnvironmentConfig::deterministic(n, BuiltinField::Zero);
        config.dim = dim;
        config.validate()?;
        let grid = Arc::new(Grid::new(config.grid.clone(), dim)?);
        Ok(EnvironmentFactory { config, grid, kind: FactoryKind::Deterministic(field) })
    }

    pub fn config(&self) -> &EnvironmentConfig {
        &self.config
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Realizes ξ_1..ξ_generations. Deterministic environments draw nothing.
    pub fn realize<R: Rng + ?Sized>(&self, generations: usize, rng: &mut R) -> EnvironmentRealization {
        let n = self.config.n;
        match &self.kind {
            FactoryKind::Random(sampler) => {
                let mut clipped = 0;
                let slices = (1..=generations)
                    .map(|k| {
                        let (s, c) = sampler.sample(k, rng);
                        clipped += c;
                        s
                    })
                    .collect();
                EnvironmentRealization::Lattice(LatticeRealization::from_slices(
                    n,
                    self.config.dim,
                    self.grid.clone(),
                    slices,
                    clipped,
                ))
            }
            FactoryKind::Smooth(basis) => EnvironmentRealization::Smooth(SmoothRealization::sample(
                n,
                self.config.nu,
                basis.clone(),
                generations,
                rng,
            )),
            FactoryKind::Deterministic(f) => {
                EnvironmentRealization::Deterministic(DeterministicEnvironment::new(n, self.config.dim, f.clone()))
            }
        }
    }
}

/// One slice ξ_k drawn from `config` (random mode). Rebuilds the sampler on each
/// call; use [`EnvironmentFactory`] or [`FieldSampler`] in loops.
pub fn sample_field_step<R: Rng + ?Sized>(config: &EnvironmentConfig, k: usize, rng: &mut R) -> Result<EnvironmentField> {
    config.validate()?;
    if config.mode != EnvironmentMode::Random {
        return Err(SimError::Config("sample_field_step needs random mode".into()));
    }
    let grid = Arc::new(Grid::new(config.grid.clone(), config.dim)?);
    let sampler = FieldSampler::new(grid, &config.kernel, config.nu / (config.n as f64).sqrt(), config.bound())?;
    Ok(sampler.sample(k, rng).0)
}

/// Samples B̃ of a smooth realization on the grid at m = 0..=levels.
pub fn smooth_samples_on_grid(real: &SmoothRealization, grid: Arc<Grid>) -> Result<CumulativeField> {
    let nodes: Vec<Vec<f64>> = (0..grid.len()).map(|i| grid.node(i)).collect();
    let samples = (0..=real.levels())
        .map(|m| FieldValues::Grid(nodes.iter().map(|x| real.value(m, x)).collect()))
        .collect();
    CumulativeField::from_smooth_samples(Environment::n(real), grid, samples)
}
