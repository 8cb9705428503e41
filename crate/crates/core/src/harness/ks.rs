use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Kolmogorov–Smirnov statistic and asymptotic p-value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n_a: usize,
    pub n_b: usize,
}

impl KsResult {
    pub fn rejects(&self, level: f64) -> bool {
        self.p_value < level
    }
}

/// Q_KS(λ) = 2 Σ_{k≥1} (−1)^{k−1} e^{−2k²λ²}.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let term = sign * (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 * sum.abs().max(1e-300) {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn p_value(d: f64, ne: f64) -> f64 {
    let s = ne.sqrt();
    kolmogorov_q((s + 0.12 + 0.11 / s) * d)
}

fn sorted(xs: &[f64]) -> Result<Vec<f64>> {
    if xs.iter().any(|x| x.is_nan()) {
        return Err(SimError::Domain("NaN in KS sample".into()));
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    Ok(v)
}

/// Two-sample statistic sup|F_a − F_b|, with ties stepped together.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.len() < 50 || b.len() < 50 {
        return Err(SimError::Precondition(format!(
            "KS needs at least 50 points per sample, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (a, b) = (sorted(a)?, sorted(b)?);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(KsResult { statistic: d, p_value: p_value(d, na * nb / (na + nb)), n_a: a.len(), n_b: b.len() })
}

/// One-sample statistic against a continuous CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(a: &[f64], cdf: F) -> Result<KsResult> {
    if a.len() < 50 {
        return Err(SimError::Precondition(format!("KS needs at least 50 points, got {}", a.len())));
    }
    let a = sorted(a)?;
    let n = a.len() as f64;
    let d = a
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    Ok(KsResult { statistic: d, p_value: p_value(d, n), n_a: a.len(), n_b: 0 })
}
