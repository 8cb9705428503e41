use rand::Rng;
use rand_distr::StandardNormal;

use crate::environment::{branch_probabilities, Environment};
use crate::error::Result;

/// Discrete snake: lifetime level m (height m/n) and the tip path at lattice
/// ages 0, 1/n, …, m/n. Entry 0 is the root.
#[derive(Clone, Debug, PartialEq)]
pub struct SnakeState {
    pub step: u64,
    pub level: usize,
    pub dim: usize,
    /// `dim` coordinates per age, `level + 1` ages.
    pub path: Vec<f64>,
}

impl SnakeState {
    pub fn new(root: &[f64]) -> Self {
        SnakeState { step: 0, level: 0, dim: root.len(), path: root.to_vec() }
    }

    pub fn root(&self) -> &[f64] {
        &self.path[..self.dim]
    }

    pub fn tip(&self) -> &[f64] {
        &self.path[self.level * self.dim..(self.level + 1) * self.dim]
    }

    pub fn at_age(&self, j: usize) -> &[f64] {
        &self.path[j * self.dim..(j + 1) * self.dim]
    }
}

/// What one contour step did.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepOutcome {
    pub up: bool,
    pub forced: bool,
}

/// One step of the snake reflected at levels 0 and `top`. At interior level m
/// the lifetime goes up with probability ½ + ξ_m(tip)/4√n; forced moves draw no
/// direction variate. Up-moves append tip + N(0, I/n); down-moves erase the tip.
pub fn snake_step<E: Environment + ?Sized, R: Rng + ?Sized>(
    state: &mut SnakeState,
    env: &E,
    top: usize,
    rng: &mut R,
) -> Result<StepOutcome> {
    let m = state.level;
    let outcome = if m == 0 {
        StepOutcome { up: true, forced: true }
    } else if m >= top {
        StepOutcome { up: false, forced: true }
    } else {
        let xi = env.xi(m, state.tip());
        let (p_up, _) = branch_probabilities(xi, env.n())?;
        StepOutcome { up: rng.random::<f64>() < p_up, forced: false }
    };
    let d = state.dim;
    if outcome.up {
        let sd = 1.0 / (env.n() as f64).sqrt();
        let base = m * d;
        for i in 0..d {
            let v = state.path[base + i] + sd * rng.sample::<f64, _>(StandardNormal);
            state.path.push(v);
        }
        state.level += 1;
    } else {
        state.path.truncate(m * d);
        state.level -= 1;
    }
    state.step += 1;
    Ok(outcome)
}
