//! Gauss–Hermite expectations against isotropic Gaussians.

use std::num::NonZeroUsize;

use gauss_quad::GaussHermite;

use crate::error::{Result, SimError};

/// Nodes and weights for E f(Z), Z ~ N(0, 1).
#[derive(Clone, Debug)]
pub struct GaussianQuadrature {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussianQuadrature {
    pub fn new(order: usize) -> Result<Self> {
        if order < 2 {
            return Err(SimError::Config(format!("quadrature order {order} < 2")));
        }
        let gh = GaussHermite::new(NonZeroUsize::new(order).unwrap());
        let sp = std::f64::consts::PI.sqrt();
        let (nodes, weights) = gh
            .as_node_weight_pairs()
            .iter()
            .map(|&(x, w)| (std::f64::consts::SQRT_2 * x, w / sp))
            .unzip();
        Ok(GaussianQuadrature { nodes, weights })
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Σ_i w_i f(center + sd·z_i) over the tensor grid in `center.len()` dimensions.
    pub fn expect<F: FnMut(&[f64]) -> f64>(&self, center: &[f64], sd: f64, mut f: F) -> f64 {
        let d = center.len();
        let q = self.nodes.len();
        let mut x = [0.0f64; 3];
        let total = q.pow(d as u32);
        let mut acc = 0.0;
        for t in 0..total {
            let mut rem = t;
            let mut w = 1.0;
            for i in 0..d {
                let j = rem % q;
                rem /= q;
                x[i] = center[i] + sd * self.nodes[j];
                w *= self.weights[j];
            }
            acc += w * f(&x[..d]);
        }
        acc
    }

    /// Expectations of two functions sharing the same evaluation points.
    pub fn expect_pair<F: FnMut(&[f64]) -> (f64, f64)>(&self, center: &[f64], sd: f64, mut f: F) -> (f64, f64) {
        let d = center.len();
        let q = self.nodes.len();
        let mut x = [0.0f64; 3];
        let total = q.pow(d as u32);
        let (mut a, mut b) = (0.0, 0.0);
        for t in 0..total {
            let mut rem = t;
            let mut w = 1.0;
            for i in 0..d {
                let j = rem % q;
                rem /= q;
                x[i] = center[i] + sd * self.nodes[j];
                w *= self.weights[j];
            }
            let (u, v) = f(&x[..d]);
            a += w * u;
            b += w * v;
        }
        (a, b)
    }
}
