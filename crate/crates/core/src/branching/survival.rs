use serde::{Deserialize, Serialize};
use twofloat::TwoFloat;

use crate::error::{Result, SimError};

/// h(b, δ) = b/(1 − e^{−bδ}), and 1/δ at b = 0.
pub fn survival_rate_h(b: f64, delta: f64) -> f64 {
    if b == 0.0 {
        1.0 / delta
    } else {
        b / -(-b * delta).exp_m1()
    }
}

/// Geometric Galton–Watson chain with P(N = m) = q^m p, p = ½ − b/4n, q = ½ + b/4n.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurvivalOracleParams {
    pub b_n: f64,
    pub n: usize,
    pub k: usize,
}

impl SurvivalOracleParams {
    pub fn new(b_n: f64, n: usize, k: usize) -> Self {
        SurvivalOracleParams { b_n, n, k }
    }

    fn check(&self) -> Result<()> {
        if self.n == 0 {
            return Err(SimError::Domain("n must be positive".into()));
        }
        if !(self.b_n.is_finite() && self.b_n.abs() < 2.0 * self.n as f64) {
            return Err(SimError::Domain(format!("|b_n| = {} must be below 2n", self.b_n.abs())));
        }
        Ok(())
    }
}

/// P(M_k > 0 | M_0 = 1) = 1 − f_k(0) for f(s) = p/(1 − q s), in double-double
/// arithmetic. The iteration runs on u = 1 − s, where it reads
/// u ↦ q u/(p + q u) and involves no cancellation even when u is tiny.
pub fn exact_survival_geometric(params: SurvivalOracleParams) -> Result<f64> {
    params.check()?;
    let shift = TwoFloat::from(params.b_n) / TwoFloat::from(4.0 * params.n as f64);
    let half = TwoFloat::from(0.5);
    let p = half - shift;
    let q = half + shift;
    let mut u = TwoFloat::from(1.0);
    for _ in 0..params.k {
        let qu = q * u;
        u = qu / (p + qu);
    }
    Ok(u.hi() + u.lo())
}

/// P(M_j > 0 | M_0 = 1) for j = 0..=k from one pass of the same iteration.
pub fn survival_sequence(params: SurvivalOracleParams) -> Result<Vec<f64>> {
    params.check()?;
    let shift = TwoFloat::from(params.b_n) / TwoFloat::from(4.0 * params.n as f64);
    let half = TwoFloat::from(0.5);
    let p = half - shift;
    let q = half + shift;
    let mut u = TwoFloat::from(1.0);
    let mut out = Vec::with_capacity(params.k + 1);
    out.push(1.0);
    for _ in 0..params.k {
        let qu = q * u;
        u = qu / (p + qu);
        out.push(u.hi() + u.lo());
    }
    Ok(out)
}

/// Closed form 1/(dᵏ + (1 − dᵏ)/(1 − d)) with d = p/q, evaluated with
/// expm1/ln1p so that it stays accurate near criticality.
pub fn survival_closed_form(params: SurvivalOracleParams) -> Result<f64> {
    params.check()?;
    let n = params.n as f64;
    let k = params.k as f64;
    if params.b_n == 0.0 {
        return Ok(1.0 / (k + 1.0));
    }
    let q = 0.5 + params.b_n / (4.0 * n);
    // 1 − d = (q − p)/q = (b/2n)/q
    let one_minus_d = params.b_n / (2.0 * n) / q;
    let k_ln_d = k * (-one_minus_d).ln_1p();
    let d_k = k_ln_d.exp();
    let one_minus_d_k = -k_ln_d.exp_m1();
    Ok(1.0 / (d_k + one_minus_d_k / one_minus_d))
}
