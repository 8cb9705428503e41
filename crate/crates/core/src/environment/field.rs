use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::grid::Grid;
use crate::error::{Result, SimError};

/// Values of a field on a grid. Spatially constant fields store one number.
#[derive(Clone, Debug, PartialEq)]
pub enum FieldValues {
    Uniform(f64),
    Grid(Vec<f64>),
}

impl FieldValues {
    #[inline]
    pub fn at(&self, i: usize) -> f64 {
        match self {
            FieldValues::Uniform(v) => *v,
            FieldValues::Grid(v) => v[i],
        }
    }

    /// Elementwise `self + scale * other`.
    pub fn add_scaled(&self, other: &FieldValues, scale: f64) -> FieldValues {
        match (self, other) {
            (FieldValues::Uniform(a), FieldValues::Uniform(b)) => FieldValues::Uniform(a + scale * b),
            (FieldValues::Grid(a), FieldValues::Uniform(b)) => {
                FieldValues::Grid(a.iter().map(|x| x + scale * b).collect())
            }
            (FieldValues::Uniform(a), FieldValues::Grid(b)) => {
                FieldValues::Grid(b.iter().map(|y| a + scale * y).collect())
            }
            (FieldValues::Grid(a), FieldValues::Grid(b)) => {
                FieldValues::Grid(a.iter().zip(b).map(|(x, y)| x + scale * y).collect())
            }
        }
    }
}

/// One time slice ξ_k of the environment on a grid, evaluated off-grid at the
/// nearest node. Out-of-extent queries are clamped and counted.
#[derive(Debug)]
pub struct EnvironmentField {
    pub k: usize,
    grid: Arc<Grid>,
    values: FieldValues,
    clamps: AtomicU64,
}

impl Clone for EnvironmentField {
    fn clone(&self) -> Self {
        EnvironmentField {
            k: self.k,
            grid: self.grid.clone(),
            values: self.values.clone(),
            clamps: AtomicU64::new(self.clamps.load(Ordering::Relaxed)),
        }
    }
}

impl EnvironmentField {
    pub fn new(k: usize, grid: Arc<Grid>, values: FieldValues) -> Result<Self> {
        if let FieldValues::Grid(v) = &values {
            if v.len() != grid.len() {
                return Err(SimError::Config(format!(
                    "field has {} values but grid has {} nodes",
                    v.len(),
                    grid.len()
                )));
            }
        }
        Ok(EnvironmentField { k, grid, values, clamps: AtomicU64::new(0) })
    }

    pub fn uniform(k: usize, grid: Arc<Grid>, value: f64) -> Self {
        EnvironmentField { k, grid, values: FieldValues::Uniform(value), clamps: AtomicU64::new(0) }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &FieldValues {
        &self.values
    }

    pub fn node_value(&self, i: usize) -> f64 {
        self.values.at(i)
    }

    /// Value at the nearest grid node.
    pub fn eval(&self, x: &[f64]) -> f64 {
        match &self.values {
            FieldValues::Uniform(v) => {
                if self.grid.nearest(x).1 {
                    self.clamps.fetch_add(1, Ordering::Relaxed);
                }
                *v
            }
            FieldValues::Grid(v) => {
                let (i, clamped) = self.grid.nearest(x);
                if clamped {
                    self.clamps.fetch_add(1, Ordering::Relaxed);
                }
                v[i]
            }
        }
    }

    pub fn clamp_count(&self) -> u64 {
        self.clamps.load(Ordering::Relaxed)
    }
}

/// Free-function form of [`EnvironmentField::eval`].
pub fn eval_field(field: &EnvironmentField, x: &[f64]) -> f64 {
    field.eval(x)
}

enum SamplerKind {
    Deterministic,
    Constant { sd: f64 },
    Correlated { factor: DMatrix<f64> },
}

/// Draws independent Gaussian slices with a fixed mean and covariance on a grid,
/// clipped to a symmetric bound.
pub struct FieldSampler {
    grid: Arc<Grid>,
    mean: f64,
    bound: f64,
    kind: SamplerKind,
}

const JITTER_STEPS: [f64; 4] = [0.0, 1e-12, 1e-11, 1e-10];

pub(crate) fn cholesky_with_jitter(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let scale = cov.diagonal().iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(1e-300);
    for jitter in JITTER_STEPS {
        let mut m = cov.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += jitter * scale;
        }
        if let Some(ch) = m.cholesky() {
            return Ok(ch.l());
        }
    }
    let min_pivot = cov.clone().symmetric_eigenvalues().min();
    Err(SimError::KernelNotPsd { min_pivot })
}

impl FieldSampler {
    pub fn new(
        grid: Arc<Grid>,
        kernel: &super::kernel::CovarianceKernel,
        mean: f64,
        bound: f64,
    ) -> Result<Self> {
        use super::kernel::CovarianceKernel as K;
        kernel.validate()?;
        let kind = match *kernel {
            K::Zero => SamplerKind::Deterministic,
            K::Constant { gamma } if gamma == 0.0 => SamplerKind::Deterministic,
            K::Constant { gamma } => SamplerKind::Constant { sd: gamma.sqrt() },
            K::SquaredExponential { .. } => {
                let g = grid.len();
                let nodes: Vec<Vec<f64>> = (0..g).map(|i| grid.node(i)).collect();
                let cov = DMatrix::from_fn(g, g, |i, j| kernel.eval(&nodes[i], &nodes[j]));
                SamplerKind::Correlated { factor: cholesky_with_jitter(&cov)? }
            }
        };
        Ok(FieldSampler { grid, mean, bound, kind })
    }

    /// Sampler for an arbitrary covariance matrix on the grid nodes.
    pub fn from_covariance(grid: Arc<Grid>, cov: DMatrix<f64>, mean: f64, bound: f64) -> Result<Self> {
        if cov.nrows() != grid.len() || cov.ncols() != grid.len() {
            return Err(SimError::Config("covariance shape does not match grid".into()));
        }
        let factor = cholesky_with_jitter(&cov)?;
        Ok(FieldSampler { grid, mean, bound, kind: SamplerKind::Correlated { factor } })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    fn clip(&self, v: f64, clipped: &mut u64) -> f64 {
        if v > self.bound {
            *clipped += 1;
            self.bound
        } else if v < -self.bound {
            *clipped += 1;
            -self.bound
        } else {
            v
        }
    }

    /// Returns the slice and the number of clipped grid values.
    pub fn sample<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> (EnvironmentField, u64) {
        let mut clipped = 0;
        let values = match &self.kind {
            SamplerKind::Deterministic => FieldValues::Uniform(self.clip(self.mean, &mut clipped)),
            SamplerKind::Constant { sd } => {
                let z: f64 = rng.sample(StandardNormal);
                FieldValues::Uniform(self.clip(self.mean + sd * z, &mut clipped))
            }
            SamplerKind::Correlated { factor } => {
                let g = factor.nrows();
                let z = DVector::from_fn(g, |_, _| rng.sample::<f64, _>(StandardNormal));
                let v = factor * z;
                FieldValues::Grid(v.iter().map(|&x| self.clip(self.mean + x, &mut clipped)).collect())
            }
        };
        (
            EnvironmentField { k, grid: self.grid.clone(), values, clamps: AtomicU64::new(0) },
            clipped,
        )
    }
}

/// Which process a [`CumulativeField`] holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CumulativeKind {
    /// Running sums Bⁿ of lattice slices.
    Lattice,
    /// Samples of a smooth field B̃ at lattice times, before truncation.
    Smooth,
}

/// A field indexed by lattice time m = 0, 1, … on a grid.
#[derive(Clone, Debug)]
pub struct CumulativeField {
    pub n: usize,
    pub kind: CumulativeKind,
    grid: Arc<Grid>,
    levels: Vec<FieldValues>,
}

impl CumulativeField {
    /// Bⁿ_m = n^{-1/2} Σ_{k ≤ m} ξ_k. `slices[k - 1]` is ξ_k.
    pub fn from_slices(n: usize, grid: Arc<Grid>, slices: &[EnvironmentField]) -> Self {
        let s = 1.0 / (n as f64).sqrt();
        let mut levels = Vec::with_capacity(slices.len() + 1);
        levels.push(FieldValues::Uniform(0.0));
        for sl in slices {
            let next = levels.last().unwrap().add_scaled(sl.values(), s);
            levels.push(next);
        }
        CumulativeField { n, kind: CumulativeKind::Lattice, grid, levels }
    }

    /// Wraps samples B̃_{m/n} on the grid, m = 0, 1, …
    pub fn from_smooth_samples(n: usize, grid: Arc<Grid>, samples: Vec<FieldValues>) -> Result<Self> {
        for v in &samples {
            if let FieldValues::Grid(g) = v {
                if g.len() != grid.len() {
                    return Err(SimError::Config("sample length does not match grid".into()));
                }
            }
        }
        Ok(CumulativeField { n, kind: CumulativeKind::Smooth, grid, levels: samples })
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn level(&self, m: usize) -> &FieldValues {
        &self.levels[m]
    }

    pub fn eval(&self, m: usize, x: &[f64]) -> f64 {
        match &self.levels[m] {
            FieldValues::Uniform(v) => *v,
            FieldValues::Grid(v) => v[self.grid.nearest(x).0],
        }
    }
}

/// Truncated increment of a smooth field: returns ξ_j/√n.
#[inline]
pub fn truncated_increment(inc: f64) -> f64 {
    if inc.abs() < 0.5 {
        inc
    } else {
        0.0
    }
}

/// ξ_j on the grid from the smooth field samples: √n·(B̃_j − B̃_{j−1})·1{|·| < ½}.
pub fn field_from_smooth_increments(smooth: &CumulativeField, j: usize) -> Result<EnvironmentField> {
    if smooth.kind != CumulativeKind::Smooth {
        return Err(SimError::Config("field_from_smooth_increments needs smooth samples".into()));
    }
    if j == 0 || j >= smooth.len() {
        return Err(SimError::Domain(format!("generation {j} outside 1..{}", smooth.len())));
    }
    let sn = (smooth.n as f64).sqrt();
    let values = match (&smooth.levels[j], &smooth.levels[j - 1]) {
        (FieldValues::Uniform(a), FieldValues::Uniform(b)) => {
            FieldValues::Uniform(sn * truncated_increment(a - b))
        }
        (a, b) => FieldValues::Grid(
            (0..smooth.grid.len()).map(|i| sn * truncated_increment(a.at(i) - b.at(i))).collect(),
        ),
    };
    EnvironmentField::new(j, smooth.grid.clone(), values)
}

/// Up/down probabilities ½ ± ξ/(4√n).
pub fn branch_probabilities(xi: f64, n: usize) -> Result<(f64, f64)> {
    let sn = (n as f64).sqrt();
    if !(xi.abs() <= sn / 2.0 * (1.0 + 1e-12)) {
        return Err(SimError::Domain(format!("|xi| = {} exceeds sqrt(n)/2 = {}", xi.abs(), sn / 2.0)));
    }
    let d = xi / (4.0 * sn);
    Ok((0.5 + d, 0.5 - d))
}
