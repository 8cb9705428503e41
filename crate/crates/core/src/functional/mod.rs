//! The approximating functional F_n of the snake, its Doob decomposition
//! F_n = F_n(0) + M + A, the bracket ⟨M⟩, and the limit targets of A.

use serde::{Deserialize, Serialize};

use crate::environment::{branch_probabilities, Environment, FieldJet};
use crate::error::{Result, SimError};
use crate::quadrature::GaussianQuadrature;
use crate::snake::{ContourRecord, LocalTimeLedger};

/// First index of the sum defining F_n.
///
/// `Zero` sums l = 0..nY−1, so that F_n = Y when B ≡ 0 and the boundary
/// compensator terms are +1/n at level 0 and −1/n at level 1.
/// `One` sums l = 1..nY−1, giving F_n = Y − 1/n when B ≡ 0.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SumStart {
    #[default]
    Zero,
    One,
}

impl SumStart {
    fn first(self) -> usize {
        match self {
            SumStart::Zero => 0,
            SumStart::One => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionalConfig {
    #[serde(default)]
    pub start: SumStart,
    #[serde(default = "default_order")]
    pub quadrature_order: usize,
    /// Recompute F_n from the full lattice path at every state. When off, F_n is
    /// accumulated from the increments, which is O(1) per step.
    #[serde(default = "yes")]
    pub replay: bool,
}

fn yes() -> bool {
    true
}

fn default_order() -> usize {
    20
}

impl Default for FunctionalConfig {
    fn default() -> Self {
        FunctionalConfig { start: SumStart::Zero, quadrature_order: 20, replay: true }
    }
}

/// F_n of a lattice path with `dim` coordinates per age:
/// (1/n) Σ_l exp(−Bⁿ_{l/n}(path((l+1)/n))), l from `start` to level − 1.
pub fn f_n<E: Environment + ?Sized>(path: &[f64], dim: usize, env: &E, start: SumStart) -> f64 {
    let level = path.len() / dim - 1;
    let mut acc = 0.0;
    for l in start.first()..level {
        let x = &path[(l + 1) * dim..(l + 2) * dim];
        acc += (-env.cumulative(l, x)).exp();
    }
    acc / env.n() as f64
}

/// Conditional first and second moments of the next increment V_{k+1}.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConditionalMoments {
    pub mean: f64,
    pub second: f64,
}

/// E(V_{k+1} | F_k) and E(V_{k+1}² | F_k) at a state with the given level and
/// tip: the up-move appends (1/n)e^{−B_m(tip + η)}, the down-move erases
/// (1/n)e^{−B_{m−1}(tip)}, with forced moves at 0 and `top`.
pub fn conditional_moments<E: Environment + ?Sized>(
    level: usize,
    tip: &[f64],
    top: usize,
    env: &E,
    quad: &GaussianQuadrature,
    start: SumStart,
) -> Result<ConditionalMoments> {
    let n = env.n() as f64;
    let (p_up, p_down) = if level == 0 {
        (1.0, 0.0)
    } else if level >= top {
        (0.0, 1.0)
    } else {
        branch_probabilities(env.xi(level, tip), env.n())?
    };
    let first = start.first();
    let (mut up1, mut up2) = (0.0, 0.0);
    if p_up > 0.0 && level >= first {
        let (e1, e2) = if level == 0 {
            (1.0, 1.0)
        } else {
            quad.expect_pair(tip, 1.0 / n.sqrt(), |x| {
                let e = (-env.cumulative(level, x)).exp();
                (e, e * e)
            })
        };
        up1 = e1 / n;
        up2 = e2 / (n * n);
    }
    let mut down1 = 0.0;
    if p_down > 0.0 && level >= 1 && level - 1 >= first {
        down1 = (-env.cumulative(level - 1, tip)).exp() / n;
    }
    Ok(ConditionalMoments { mean: p_up * up1 - p_down * down1, second: p_up * up2 + p_down * down1 * down1 })
}

/// Per-state series: index k refers to state k of the record (k = 0..N),
/// increments at index k are for the step k−1 → k (index 0 holds zeros).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FunctionalSeries {
    pub f: Vec<f64>,
    pub v: Vec<f64>,
    pub compensator: Vec<f64>,
    pub martingale_increment: Vec<f64>,
    pub a: Vec<f64>,
    pub m: Vec<f64>,
    pub bracket: Vec<f64>,
}

impl FunctionalSeries {
    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    /// max_k |F(k) − F(0) − M_k − A_k| / max(1, |F(k)|).
    pub fn reconstruction_error(&self) -> f64 {
        let f0 = self.f.first().copied().unwrap_or(0.0);
        self.f
            .iter()
            .zip(self.m.iter().zip(&self.a))
            .map(|(f, (m, a))| (f - f0 - m - a).abs() / f.abs().max(1.0))
            .fold(0.0, f64::max)
    }

    /// CSV rows (k, F_n, A_n, M_n, bracket) every `stride` states.
    pub fn write_csv<W: std::io::Write>(&self, w: W, stride: usize) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["k", "F_n", "A_n", "M_n", "bracket"])?;
        for k in (0..self.f.len()).step_by(stride.max(1)) {
            out.write_record([
                k.to_string(),
                format!("{:e}", self.f[k]),
                format!("{:e}", self.a[k]),
                format!("{:e}", self.m[k]),
                format!("{:e}", self.bracket[k]),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Running sums M = Σ(V − E(V|F)), A = Σ E(V|F) and ⟨M⟩ = Σ (E(V²|F) − E(V|F)²).
/// Inputs are per step (length N); `f` holds F_n at states 0..N when available.
pub fn decompose(v: &[f64], compensators: &[f64], second_moments: &[f64], f: Vec<f64>) -> Result<FunctionalSeries> {
    if v.len() != compensators.len() || v.len() != second_moments.len() {
        return Err(SimError::Domain("increment and compensator sequences differ in length".into()));
    }
    let len = v.len() + 1;
    if !f.is_empty() && f.len() != len {
        return Err(SimError::Domain("F_n series must have one more entry than the increments".into()));
    }
    let mut s = FunctionalSeries {
        f,
        v: Vec::with_capacity(len),
        compensator: Vec::with_capacity(len),
        martingale_increment: Vec::with_capacity(len),
        a: Vec::with_capacity(len),
        m: Vec::with_capacity(len),
        bracket: Vec::with_capacity(len),
    };
    for vec in [&mut s.v, &mut s.compensator, &mut s.martingale_increment, &mut s.a, &mut s.m, &mut s.bracket] {
        vec.push(0.0);
    }
    let (mut a, mut m, mut b) = (0.0, 0.0, 0.0);
    for k in 0..v.len() {
        let c = compensators[k];
        let dm = v[k] - c;
        a += c;
        m += dm;
        b += (second_moments[k] - c * c).max(0.0);
        s.v.push(v[k]);
        s.compensator.push(c);
        s.martingale_increment.push(dm);
        s.a.push(a);
        s.m.push(m);
        s.bracket.push(b);
    }
    Ok(s)
}

/// ⟨M⟩ from a decomposed series.
pub fn bracket(series: &FunctionalSeries) -> &[f64] {
    &series.bracket
}

/// Decomposes F_n along a recorded run. F_n is recomputed at every state by
/// replaying the lattice path; the increments V are computed from the step.
pub fn functional_series<E: Environment + ?Sized>(
    record: &ContourRecord,
    env: &E,
    config: &FunctionalConfig,
) -> Result<FunctionalSeries> {
    let quad = GaussianQuadrature::new(config.quadrature_order)?;
    let d = record.dim;
    let n = env.n() as f64;
    let first = config.start.first();
    let steps = record.steps();
    let mut v = Vec::with_capacity(steps);
    let mut comp = Vec::with_capacity(steps);
    let mut second = Vec::with_capacity(steps);
    let mut f = Vec::with_capacity(steps + 1);
    let mut path: Vec<f64> = record.tip(0).to_vec();
    f.push(f_n(&path, d, env, config.start));
    for k in 0..steps {
        let m = record.level(k);
        let tip = record.tip(k);
        let cm = conditional_moments(m, tip, record.top, env, &quad, config.start)?;
        comp.push(cm.mean);
        second.push(cm.second);
        let inc = if record.up(k) {
            if m >= first {
                (-env.cumulative(m, record.tip(k + 1))).exp() / n
            } else {
                0.0
            }
        } else if m - 1 >= first {
            -(-env.cumulative(m - 1, tip)).exp() / n
        } else {
            0.0
        };
        v.push(inc);
        if !config.replay {
            f.push(f[k] + inc);
            continue;
        }
        let m_next = record.level(k + 1);
        if m_next > m {
            path.extend_from_slice(record.tip(k + 1));
        } else {
            path.truncate((m_next + 1) * d);
        }
        f.push(f_n(&path, d, env, config.start));
    }
    decompose(&v, &comp, &second, f)
}

/// e^{−B}(−½ΔB + ½|∇B|²).
pub fn drift_integrand(jet: &FieldJet, dim: usize) -> f64 {
    let g2: f64 = jet.gradient[..dim].iter().map(|g| g * g).sum();
    (-jet.value).exp() * (0.5 * g2 - 0.5 * jet.laplacian)
}

/// The non-martingale terms of the limit decomposition of F evaluated on a run
/// up to state ⌊tn²⌋.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitTarget {
    /// Trapezoid of e^{−B_{Y_s}(Ŵ_s)}(−½ΔB + ½|∇B|²) over [0, t].
    pub drift: f64,
    /// ℓ⁰_t.
    pub local_time_zero: f64,
    /// (1/n)·Σ e^{−B_{K₁}(Ŵ)} over visits to level nK₁ before t.
    pub top_term: f64,
}

impl LimitTarget {
    /// drift + ℓ⁰ − top term.
    pub fn total(&self) -> f64 {
        self.drift + self.local_time_zero - self.top_term
    }

    /// Same with the drift weighted by ½.
    pub fn total_half_drift(&self) -> f64 {
        0.5 * self.drift + self.local_time_zero - self.top_term
    }
}

pub fn limit_target<E: Environment + ?Sized>(
    record: &ContourRecord,
    ledger: &LocalTimeLedger,
    env: &E,
    t: f64,
) -> Result<LimitTarget> {
    let n = record.n;
    let n2 = (n * n) as f64;
    let steps = ((t * n2 + 1e-9).floor() as usize).min(record.steps());
    let d = record.dim;
    let jet = |k: usize| {
        env.jet(record.level(k), record.tip(k))
            .ok_or_else(|| SimError::Unsupported("limit target needs a smooth or deterministic field".into()))
    };
    let mut drift = 0.0;
    let mut prev = drift_integrand(&jet(0)?, d);
    let mut top = 0.0;
    for k in 0..steps {
        let cur = drift_integrand(&jet(k + 1)?, d);
        drift += 0.5 * (prev + cur) / n2;
        prev = cur;
        if record.level(k) == record.top {
            top += (-jet(k)?.value).exp() / n as f64;
        }
    }
    Ok(LimitTarget { drift, local_time_zero: ledger.local_time_after_steps(0, steps as u64), top_term: top })
}

/// ∫₀ᵗ e^{−2B_{Y_s}(Ŵ_s)} ds by the trapezoid rule on the lattice path.
pub fn bracket_target<E: Environment + ?Sized>(record: &ContourRecord, env: &E, t: f64) -> Result<f64> {
    let n2 = (record.n * record.n) as f64;
    let steps = ((t * n2 + 1e-9).floor() as usize).min(record.steps());
    let g = |k: usize| -> Result<f64> {
        let j = env
            .jet(record.level(k), record.tip(k))
            .ok_or_else(|| SimError::Unsupported("bracket target needs a smooth or deterministic field".into()))?;
        Ok((-2.0 * j.value).exp())
    };
    let mut acc = 0.0;
    let mut prev = g(0)?;
    for k in 0..steps {
        let cur = g(k + 1)?;
        acc += 0.5 * (prev + cur) / n2;
        prev = cur;
    }
    Ok(acc)
}

/// Realized quadratic variation of Y − ℓ⁰ + ℓ^{K₁} over the first ⌊tn²⌋ steps,
/// where ℓ^{K₁} is (1/n) per visit to the top level. Forced reflections
/// cancel against the local-time increments, so only interior steps count.
pub fn tanaka_quadratic_variation(record: &ContourRecord, t: f64) -> f64 {
    let n = record.n as f64;
    let steps = ((t * n * n + 1e-9).floor() as usize).min(record.steps());
    let mut qv = 0.0;
    for k in 0..steps {
        let (a, b) = (record.level(k), record.level(k + 1));
        let mut dz = (b as f64 - a as f64) / n;
        if a == 0 {
            dz -= 1.0 / n;
        }
        if a == record.top {
            dz += 1.0 / n;
        }
        qv += dz * dz;
    }
    qv
}
