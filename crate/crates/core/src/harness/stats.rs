use serde::{Deserialize, Serialize};

/// Point estimate with standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
    pub count: usize,
}

impl Estimate {
    /// Sample mean with SE = sample sd/√R.
    pub fn mean_of(xs: &[f64]) -> Estimate {
        let r = xs.len();
        if r == 0 {
            return Estimate { value: f64::NAN, se: f64::NAN, count: 0 };
        }
        let mean = xs.iter().sum::<f64>() / r as f64;
        let se = if r > 1 { (sample_variance(xs, mean) / r as f64).sqrt() } else { 0.0 };
        Estimate { value: mean, se, count: r }
    }

    /// Proportion with SE = √(p̂(1−p̂)/R).
    pub fn proportion(successes: usize, total: usize) -> Estimate {
        let p = successes as f64 / total as f64;
        Estimate { value: p, se: (p * (1.0 - p) / total as f64).sqrt(), count: total }
    }

    pub fn scaled(self, c: f64) -> Estimate {
        Estimate { value: self.value * c, se: self.se * c.abs(), count: self.count }
    }

    /// |value − target| ≤ k·SE.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.se
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn sample_variance(xs: &[f64], mean: f64) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Sample variance with a delta-method SE, assuming finite fourth moment.
pub fn variance_estimate(xs: &[f64]) -> Estimate {
    let r = xs.len() as f64;
    let m = mean(xs);
    let v = sample_variance(xs, m);
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / r;
    let se = ((m4 - v * v).max(0.0) / r).sqrt();
    Estimate { value: v, se, count: xs.len() }
}

/// Median of a copy of `xs`.
pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Pass/fail/informational outcome of one check.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Informational,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Verdict {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

// JSON writes non-finite floats as null.
fn nan_if_null<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

/// One row of an experiment summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub statistic: String,
    #[serde(deserialize_with = "nan_if_null")]
    pub estimate: f64,
    #[serde(deserialize_with = "nan_if_null")]
    pub stderr: f64,
    /// NaN (null in JSON) when there is no target.
    #[serde(deserialize_with = "nan_if_null")]
    pub target: f64,
    pub target_note: String,
    pub tolerance: String,
    pub verdict: Verdict,
}

impl SummaryStats {
    pub fn new(statistic: impl Into<String>, estimate: f64, stderr: f64, target: f64) -> Self {
        SummaryStats {
            statistic: statistic.into(),
            estimate,
            stderr,
            target,
            target_note: String::new(),
            tolerance: String::new(),
            verdict: Verdict::Informational,
        }
    }

    pub fn note(mut self, note: impl Into<String>) -> Self {
        self.target_note = note.into();
        self
    }

    pub fn rule(mut self, tolerance: impl Into<String>, ok: bool) -> Self {
        self.tolerance = tolerance.into();
        self.verdict = Verdict::from_bool(ok);
        self
    }

    pub fn informational(mut self, tolerance: impl Into<String>) -> Self {
        self.tolerance = tolerance.into();
        self.verdict = Verdict::Informational;
        self
    }
}
