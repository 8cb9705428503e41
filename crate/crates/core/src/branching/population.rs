use rand::Rng;
use rand_distr::{Distribution, Geometric, StandardNormal};

use crate::environment::{branch_probabilities, Environment};
use crate::error::{Result, SimError};
use crate::testfn::TestFunction;

/// Particles of the branching system at generation k; each carries mass 1/n.
#[derive(Clone, Debug, PartialEq)]
pub struct PopulationState {
    pub k: usize,
    pub n: usize,
    pub dim: usize,
    /// `dim` coordinates per particle.
    pub positions: Vec<f64>,
    /// Total mass after each generation, starting with generation 0.
    pub mass_history: Vec<f64>,
}

impl PopulationState {
    /// `count` particles at `x`.
    pub fn at_point(n: usize, x: &[f64], count: usize) -> Self {
        let mut positions = Vec::with_capacity(count * x.len());
        for _ in 0..count {
            positions.extend_from_slice(x);
        }
        PopulationState {
            k: 0,
            n,
            dim: x.len(),
            positions,
            mass_history: vec![count as f64 / n as f64],
        }
    }

    pub fn count(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn mass(&self) -> f64 {
        self.count() as f64 / self.n as f64
    }

    pub fn is_extinct(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    /// ⟨X, φ⟩ = (1/n) Σ φ(x_i).
    pub fn integrate(&self, phi: &TestFunction) -> f64 {
        self.positions.chunks_exact(self.dim).map(|x| phi.eval(x)).sum::<f64>() / self.n as f64
    }
}

/// Geometric offspring count with P(N = m) = p_up^m p_down.
pub fn offspring_count<R: Rng + ?Sized>(xi: f64, n: usize, rng: &mut R) -> Result<u64> {
    let (_, p_down) = branch_probabilities(xi, n)?;
    let g = Geometric::new(p_down).map_err(|e| SimError::Domain(e.to_string()))?;
    Ok(g.sample(rng))
}

/// One generation: every particle moves by N(0, I/n), then is replaced by a
/// geometric number of offspring at its new position, with ξ_{k+1} evaluated there.
pub fn step_population<E: Environment + ?Sized, R: Rng + ?Sized>(
    state: &mut PopulationState,
    env: &E,
    rng: &mut R,
) -> Result<()> {
    let d = state.dim;
    let sd = 1.0 / (state.n as f64).sqrt();
    let k = state.k + 1;
    let mut next = Vec::with_capacity(state.positions.len());
    let mut x = [0.0f64; 3];
    for p in state.positions.chunks_exact(d) {
        for i in 0..d {
            x[i] = p[i] + sd * rng.sample::<f64, _>(StandardNormal);
        }
        let xi = env.xi(k, &x[..d]);
        let children = offspring_count(xi, state.n, rng)?;
        for _ in 0..children {
            next.extend_from_slice(&x[..d]);
        }
    }
    state.positions = next;
    state.k = k;
    state.mass_history.push(state.mass());
    Ok(())
}
