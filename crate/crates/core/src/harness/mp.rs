use std::io::Write;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::runner::{run_replicates, MonteCarlo};
use super::stats::{Estimate, SummaryStats};
use crate::branching::{simulate_forward, InitialCondition};
use crate::environment::{CovarianceKernel, EnvironmentConfig, EnvironmentFactory};
use crate::error::{Result, SimError};
use crate::snake::{run_snake, Horizon, OccupationAccumulator, SnakeConfig};
use crate::testfn::TestFunction;

/// Above this many atoms the pair sum is estimated from a uniform subsample.
pub const PAIR_CAP: usize = 1000;

/// ⟨X, φ⟩, ⟨X, Δφ⟩, ⟨X, φ²⟩ and ∫∫ g φφ dX dX for one atomic measure with
/// atoms of mass 1/n.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OccupationSnapshot {
    pub phi: f64,
    pub lap: f64,
    pub phi_sq: f64,
    pub pair: f64,
}

pub fn snapshot<R: Rng + ?Sized>(
    atoms: &[f64],
    dim: usize,
    n: usize,
    phi: &TestFunction,
    kernel: &CovarianceKernel,
    rng: &mut R,
) -> OccupationSnapshot {
    let inv = 1.0 / n as f64;
    let count = atoms.len() / dim;
    let vals: Vec<f64> = atoms.chunks_exact(dim).map(|x| phi.eval(x)).collect();
    let sum: f64 = vals.iter().sum();
    let lap: f64 = atoms.chunks_exact(dim).map(|x| phi.laplacian(x)).sum();
    let sq: f64 = vals.iter().map(|v| v * v).sum();
    let pair = if count == 0 || *kernel == CovarianceKernel::Zero {
        0.0
    } else if kernel.is_spatially_constant() {
        let z = vec![0.0; dim];
        kernel.eval(&z, &z) * sum * sum
    } else {
        let x = |i: usize| &atoms[i * dim..(i + 1) * dim];
        let diag: f64 = (0..count).map(|i| kernel.eval(x(i), x(i)) * vals[i] * vals[i]).sum();
        let off = if count <= PAIR_CAP {
            let mut s = 0.0;
            for i in 0..count {
                for j in 0..i {
                    s += kernel.eval(x(i), x(j)) * vals[i] * vals[j];
                }
            }
            2.0 * s
        } else {
            let pick = index::sample(rng, count, PAIR_CAP).into_vec();
            let mut s = 0.0;
            for a in 0..pick.len() {
                for b in 0..a {
                    let (i, j) = (pick[a], pick[b]);
                    s += kernel.eval(x(i), x(j)) * vals[i] * vals[j];
                }
            }
            let m = PAIR_CAP as f64;
            let c = count as f64;
            2.0 * s * (c * (c - 1.0)) / (m * (m - 1.0))
        };
        diag + off
    };
    OccupationSnapshot { phi: sum * inv, lap: lap * inv, phi_sq: sq * inv, pair: pair * inv * inv }
}

/// One replicate's occupation trajectory on a time grid.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OccupationPath {
    pub times: Vec<f64>,
    pub snapshots: Vec<OccupationSnapshot>,
}

impl OccupationPath {
    pub fn push(&mut self, t: f64, s: OccupationSnapshot) {
        self.times.push(t);
        self.snapshots.push(s);
    }

    /// Drift ½⟨X,Δφ⟩ + c·b⟨X,φ⟩ integrated by trapezoid, and M_t.
    pub fn martingale(&self, growth_rate: f64, factor: f64) -> Vec<f64> {
        let f = |s: &OccupationSnapshot| 0.5 * s.lap + factor * growth_rate * s.phi;
        let mut m = Vec::with_capacity(self.times.len());
        let mut drift = 0.0;
        for j in 0..self.times.len() {
            if j > 0 {
                let dt = self.times[j] - self.times[j - 1];
                drift += 0.5 * dt * (f(&self.snapshots[j - 1]) + f(&self.snapshots[j]));
            }
            m.push(self.snapshots[j].phi - self.snapshots[0].phi - drift);
        }
        m
    }

    /// Trapezoid of 2⟨X,φ²⟩ + ∫∫gφφ dXdX.
    pub fn qv_target(&self) -> f64 {
        let f = |s: &OccupationSnapshot| 2.0 * s.phi_sq + s.pair;
        (1..self.times.len())
            .map(|j| 0.5 * (self.times[j] - self.times[j - 1]) * (f(&self.snapshots[j - 1]) + f(&self.snapshots[j])))
            .sum()
    }
}

/// Forward system from `initial`, observed after every generation up to time `t_max`.
pub fn forward_paths(
    config: &EnvironmentConfig,
    initial: &InitialCondition,
    t_max: f64,
    phi: &TestFunction,
    mc: &MonteCarlo,
) -> Result<(Vec<OccupationPath>, usize)> {
    let factory = EnvironmentFactory::new(config)?;
    let n = config.n;
    let k_max = crate::branching::generations(n, t_max);
    let res = run_replicates(mc, |_, rng| {
        let mut snaps = Vec::with_capacity(k_max + 1);
        let mut aux = rng.clone();
        aux.set_stream(u64::MAX - rng.get_stream());
        simulate_forward(&factory, initial, k_max, rng, |s| {
            snaps.push((s.k, snapshot(&s.positions, s.dim, n, phi, &config.kernel, &mut aux)));
        })?;
        let mut path = OccupationPath::default();
        for (k, s) in snaps {
            path.push(k as f64 / n as f64, s);
        }
        Ok(path)
    });
    let failures = res.failure_count();
    Ok((res.require_some()?.values, failures))
}

/// Snake occupation X^{n,r}_{0,t}, t = m/n, from runs stopped at τ^{n,0}_r.
pub fn snake_paths(
    config: &EnvironmentConfig,
    snake: &SnakeConfig,
    r: f64,
    t_max: f64,
    max_steps: u64,
    phi: &TestFunction,
    mc: &MonteCarlo,
) -> Result<(Vec<OccupationPath>, usize)> {
    let factory = EnvironmentFactory::new(config)?;
    let n = config.n;
    let top = snake.top(n)?;
    let m_max = crate::branching::generations(n, t_max).min(top);
    let res = run_replicates(mc, |_, rng| {
        let env = factory.realize(top, rng);
        let run = run_snake(snake, Horizon::LocalTime { c0: r, max_steps }, &env, rng)?;
        if run.truncated {
            return Err(SimError::NotReached { level: 0, needed: 0, found: 0 });
        }
        let acc = OccupationAccumulator::build(&run.record, &run.ledger, 0.0, r, 0.0)?;
        let mut path = OccupationPath::default();
        for m in 0..=m_max {
            path.push(m as f64 / n as f64, snapshot(&acc.atoms[m], acc.dim, n, phi, &config.kernel, rng));
        }
        Ok(path)
    });
    let failures = res.failure_count();
    Ok((res.require_some()?.values, failures))
}

/// Zero-mean residuals of M^φ for one choice of the factor on the growth term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MpVariant {
    pub drift_factor: f64,
    pub per_time: Vec<Estimate>,
    /// max_t |mean M_t| / SE.
    pub worst_z: f64,
    pub zero_mean_ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MartingaleTestReport {
    pub times: Vec<f64>,
    pub growth_rate: f64,
    /// ½ on both drift terms, as in the stated martingale problem.
    pub halved: MpVariant,
    /// ½ on the Laplacian only.
    pub unhalved: MpVariant,
    pub lag1_autocorrelation: f64,
    /// Σ_j ΔM_j ΔM_{j+1} per replicate.
    pub orthogonality: Estimate,
    pub orthogonality_ok: bool,
    pub qv_realized: Estimate,
    pub qv_target: Estimate,
    /// Per-replicate realized − target.
    pub qv_difference: Estimate,
    pub qv_ok: bool,
    /// Which growth-term factor leaves a residual consistent with zero.
    pub consistent_variant: String,
}

const ZERO_MEAN_SE: f64 = 4.0;

fn variant(paths: &[OccupationPath], b: f64, factor: f64) -> (MpVariant, Vec<Vec<f64>>) {
    let ms: Vec<Vec<f64>> = paths.iter().map(|p| p.martingale(b, factor)).collect();
    let len = ms[0].len();
    let per_time: Vec<Estimate> =
        (0..len).map(|j| Estimate::mean_of(&ms.iter().map(|m| m[j]).collect::<Vec<_>>())).collect();
    let worst_z = per_time
        .iter()
        .map(|e| if e.se > 0.0 { e.value.abs() / e.se } else if e.value == 0.0 { 0.0 } else { f64::INFINITY })
        .fold(0.0, f64::max);
    let ok = per_time.iter().all(|e| e.within(0.0, ZERO_MEAN_SE));
    (MpVariant { drift_factor: factor, per_time, worst_z, zero_mean_ok: ok }, ms)
}

/// Martingale-problem residuals of the occupation trajectories.
pub fn mp_residual_test(paths: &[OccupationPath], growth_rate: f64) -> Result<MartingaleTestReport> {
    if paths.is_empty() {
        return Err(SimError::Precondition("no trajectories".into()));
    }
    let times = paths[0].times.clone();
    if times.len() < 2 || paths.iter().any(|p| p.times != times) {
        return Err(SimError::Precondition("trajectories must share a time grid of ≥ 2 points".into()));
    }
    if paths.iter().flat_map(|p| &p.snapshots).any(|s| !(s.phi.is_finite() && s.lap.is_finite() && s.pair.is_finite())) {
        return Err(SimError::Domain("non-finite occupation value".into()));
    }
    let (halved, ms) = variant(paths, growth_rate, 0.5);
    let (unhalved, _) = variant(paths, growth_rate, 1.0);

    let mut realized = Vec::with_capacity(paths.len());
    let mut cross = Vec::with_capacity(paths.len());
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for m in &ms {
        let inc: Vec<f64> = m.windows(2).map(|w| w[1] - w[0]).collect();
        realized.push(inc.iter().map(|d| d * d).sum::<f64>());
        let mut c = 0.0;
        for w in inc.windows(2) {
            c += w[0] * w[1];
            sxx += w[0] * w[0];
            syy += w[1] * w[1];
        }
        sxy += c;
        cross.push(c);
    }
    let lag1 = if sxx > 0.0 && syy > 0.0 { sxy / (sxx * syy).sqrt() } else { 0.0 };
    let targets: Vec<f64> = paths.iter().map(|p| p.qv_target()).collect();
    let diffs: Vec<f64> = realized.iter().zip(&targets).map(|(a, b)| a - b).collect();
    let qv_realized = Estimate::mean_of(&realized);
    let qv_target = Estimate::mean_of(&targets);
    let qv_difference = Estimate::mean_of(&diffs);
    let qv_ok = qv_difference.value.abs() <= 0.1 * qv_target.value.abs() + 3.0 * qv_difference.se;
    let orthogonality = Estimate::mean_of(&cross);
    let consistent_variant = match (halved.zero_mean_ok, unhalved.zero_mean_ok) {
        (true, true) => "both",
        (true, false) => "halved",
        (false, true) => "unhalved",
        (false, false) => "neither",
    }
    .to_string();
    Ok(MartingaleTestReport {
        times,
        growth_rate,
        halved,
        unhalved,
        lag1_autocorrelation: lag1,
        orthogonality_ok: orthogonality.within(0.0, ZERO_MEAN_SE),
        orthogonality,
        qv_realized,
        qv_target,
        qv_difference,
        qv_ok,
        consistent_variant,
    })
}

impl MartingaleTestReport {
    /// Final-time residual of the variant the verdict uses.
    pub fn final_residual(&self) -> Estimate {
        *self.halved.per_time.last().expect("non-empty grid")
    }

    pub fn summary(&self, label: &str) -> Vec<SummaryStats> {
        let fin = self.final_residual();
        let alt = *self.unhalved.per_time.last().expect("non-empty grid");
        vec![
            SummaryStats::new(format!("{label}.zero_mean"), fin.value, fin.se, 0.0)
                .note("martingale residual at the final time; all grid times checked")
                .rule(format!("|mean| <= 4 SE at every time (worst z {:.2})", self.halved.worst_z), self.halved.zero_mean_ok),
            SummaryStats::new(format!("{label}.zero_mean_unhalved"), alt.value, alt.se, 0.0)
                .note("growth term without the factor 1/2")
                .informational(format!("worst z {:.2}; consistent variant: {}", self.unhalved.worst_z, self.consistent_variant)),
            SummaryStats::new(format!("{label}.orthogonality"), self.orthogonality.value, self.orthogonality.se, 0.0)
                .note(format!("lag-1 increment autocorrelation {:.4}", self.lag1_autocorrelation))
                .rule("|mean| <= 4 SE", self.orthogonality_ok),
            SummaryStats::new(format!("{label}.quadratic_variation"), self.qv_realized.value, self.qv_difference.se, self.qv_target.value)
                .note("realized sum of squared increments vs 2∫<X,φ²> + ∫∫gφφ dXdX")
                .rule("|realized - target| <= 10% target + 3 SE", self.qv_ok),
        ]
    }

    /// Rows t, mean, se (halved), mean, se (unhalved).
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "mean_halved", "se_halved", "mean_unhalved", "se_unhalved"])?;
        for (j, t) in self.times.iter().enumerate() {
            let (a, b) = (self.halved.per_time[j], self.unhalved.per_time[j]);
            out.write_record([t.to_string(), a.value.to_string(), a.se.to_string(), b.value.to_string(), b.se.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}
