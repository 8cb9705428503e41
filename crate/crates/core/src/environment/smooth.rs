//! Smooth Gaussian fields with analytic spatial derivatives.
//!
//! B̃_t(x) = νt + Σ_j c_j (a_j(t) cos(ω_j·x) + b_j(t) sin(ω_j·x)) with a_j, b_j
//! independent standard Brownian motions in t. The frequencies and weights are a
//! Gauss–Hermite discretization of the kernel's spectral measure, so
//! Cov(B̃_t(x), B̃_s(y)) ≈ (t∧s) g(x, y).

use std::num::NonZeroUsize;

use gauss_quad::GaussHermite;
use rand::Rng;
use rand_distr::StandardNormal;

use super::kernel::CovarianceKernel;
use super::FieldJet;
use crate::error::{Result, SimError};

#[derive(Clone, Debug)]
pub struct SpectralBasis {
    pub dim: usize,
    /// Frequencies, `dim` entries per term.
    pub freqs: Vec<f64>,
    pub amps: Vec<f64>,
}

impl SpectralBasis {
    /// `order` is the total term budget; in d > 1 each axis gets ⌈order^{1/d}⌉ nodes.
    pub fn new(kernel: &CovarianceKernel, dim: usize, order: usize) -> Result<Self> {
        kernel.validate()?;
        match *kernel {
            CovarianceKernel::Zero => Ok(SpectralBasis { dim, freqs: vec![], amps: vec![] }),
            CovarianceKernel::Constant { gamma } => {
                Ok(SpectralBasis { dim, freqs: vec![0.0; dim], amps: vec![gamma.sqrt()] })
            }
            CovarianceKernel::SquaredExponential { variance, length_scale } => {
                if order < 2 {
                    return Err(SimError::Config("spectral order must be at least 2".into()));
                }
                let per_axis = ((order as f64).powf(1.0 / dim as f64).ceil() as usize).max(2);
                let gh = GaussHermite::new(NonZeroUsize::new(per_axis).unwrap());
                // ω ~ N(0, ℓ^{-2} I): node x ↦ √2 x / ℓ, weight w/√π.
                let axis: Vec<(f64, f64)> = gh
                    .as_node_weight_pairs()
                    .iter()
                    .map(|&(x, w)| (std::f64::consts::SQRT_2 * x / length_scale, w / std::f64::consts::PI.sqrt()))
                    .collect();
                let terms = per_axis.pow(dim as u32);
                let mut freqs = Vec::with_capacity(terms * dim);
                let mut amps = Vec::with_capacity(terms);
                for t in 0..terms {
                    let mut rem = t;
                    let mut w = 1.0;
                    for _ in 0..dim {
                        let (om, wt) = axis[rem % per_axis];
                        rem /= per_axis;
                        freqs.push(om);
                        w *= wt;
                    }
                    amps.push((variance * w).sqrt());
                }
                Ok(SpectralBasis { dim, freqs, amps })
            }
        }
    }

    pub fn terms(&self) -> usize {
        self.amps.len()
    }

    /// Covariance implied by the truncated expansion.
    pub fn covariance(&self, x: &[f64], y: &[f64]) -> f64 {
        (0..self.terms())
            .map(|j| {
                let ph: f64 = (0..self.dim).map(|i| self.freqs[j * self.dim + i] * (x[i] - y[i])).sum();
                self.amps[j] * self.amps[j] * ph.cos()
            })
            .sum()
    }

    #[inline]
    fn phase(&self, j: usize, x: &[f64]) -> f64 {
        let mut p = 0.0;
        for i in 0..self.dim {
            p += self.freqs[j * self.dim + i] * x[i];
        }
        p
    }
}

/// One realization of B̃ at lattice times m/n, m = 0..=levels.
#[derive(Clone, Debug)]
pub struct SmoothRealization {
    n: usize,
    nu: f64,
    basis: std::sync::Arc<SpectralBasis>,
    /// Per lattice time: a_j then b_j, 2·terms entries.
    coeffs: Vec<Vec<f64>>,
    /// Largest m with no truncation possible on any slice ≤ m.
    exact_upto: usize,
}

impl SmoothRealization {
    pub fn sample<R: Rng + ?Sized>(
        n: usize,
        nu: f64,
        basis: std::sync::Arc<SpectralBasis>,
        levels: usize,
        rng: &mut R,
    ) -> Self {
        let t = basis.terms();
        let sd = 1.0 / (n as f64).sqrt();
        let mut coeffs = Vec::with_capacity(levels + 1);
        coeffs.push(vec![0.0; 2 * t]);
        let mut exact_upto = 0;
        let mut exact = true;
        for m in 1..=levels {
            let prev = &coeffs[m - 1];
            let mut next = Vec::with_capacity(2 * t);
            let mut bound = nu.abs() / n as f64;
            for (j, p) in prev.iter().enumerate() {
                let d = sd * rng.sample::<f64, _>(StandardNormal);
                bound += basis.amps[j % t] * d.abs();
                next.push(p + d);
            }
            if exact && bound < 0.5 {
                exact_upto = m;
            } else {
                exact = false;
            }
            coeffs.push(next);
        }
        SmoothRealization { n, nu, basis, coeffs, exact_upto }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn levels(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn basis(&self) -> &SpectralBasis {
        &self.basis
    }

    /// B̃_{m/n}(x).
    pub fn value(&self, m: usize, x: &[f64]) -> f64 {
        let t = self.basis.terms();
        let c = &self.coeffs[m];
        let mut v = self.nu * m as f64 / self.n as f64;
        for j in 0..t {
            let (s, co) = self.basis.phase(j, x).sin_cos();
            v += self.basis.amps[j] * (c[j] * co + c[t + j] * s);
        }
        v
    }

    /// B̃_{m/n}(x) − B̃_{(m−1)/n}(x), from coefficient increments.
    pub fn increment(&self, m: usize, x: &[f64]) -> f64 {
        let t = self.basis.terms();
        let (c1, c0) = (&self.coeffs[m], &self.coeffs[m - 1]);
        let mut v = self.nu / self.n as f64;
        for j in 0..t {
            let (s, co) = self.basis.phase(j, x).sin_cos();
            v += self.basis.amps[j] * ((c1[j] - c0[j]) * co + (c1[t + j] - c0[t + j]) * s);
        }
        v
    }

    pub fn xi(&self, k: usize, x: &[f64]) -> f64 {
        (self.n as f64).sqrt() * super::field::truncated_increment(self.increment(k, x))
    }

    /// Bⁿ_{m/n}(x) = Σ_{i ≤ m} ξ_i(x)/√n.
    pub fn cumulative(&self, m: usize, x: &[f64]) -> f64 {
        if m <= self.exact_upto {
            self.value(m, x)
        } else {
            (1..=m).map(|i| super::field::truncated_increment(self.increment(i, x))).sum()
        }
    }

    pub fn jet(&self, m: usize, x: &[f64]) -> FieldJet {
        let d = self.basis.dim;
        let t = self.basis.terms();
        let c = &self.coeffs[m];
        let mut jet = FieldJet { value: self.nu * m as f64 / self.n as f64, gradient: [0.0; 3], laplacian: 0.0 };
        for j in 0..t {
            let (s, co) = self.basis.phase(j, x).sin_cos();
            let a = self.basis.amps[j];
            let (cj, sj) = (c[j], c[t + j]);
            let f = cj * co + sj * s;
            let df = -cj * s + sj * co;
            jet.value += a * f;
            let mut w2 = 0.0;
            for i in 0..d {
                let om = self.basis.freqs[j * d + i];
                jet.gradient[i] += a * om * df;
                w2 += om * om;
            }
            jet.laplacian -= a * w2 * f;
        }
        jet
    }
}
