use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::exit::{first_exit, ExitInterval};
use super::potential::{site_values, PotentialProfile};
use crate::environment::{EnvironmentConfig, EnvironmentFactory};
use crate::error::{Result, SimError};
use crate::harness::runner::{run_replicates, MonteCarlo};
use crate::harness::stats::{median, Estimate};
use crate::rng::derive_seed;

/// Default Euler step as a fraction of the squared distance, in W units, to
/// the nearer neighbouring site. For V ≡ 0 this is Δu = 10⁻²/n².
pub const DEFAULT_RESOLUTION: f64 = 1e-2;

/// Stopping times σ_m at which the diffusion has moved by 1/n since the previous
/// stop, and the embedded walk Z̃_m = nZ(σ_m).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSchedule {
    pub n: usize,
    pub sigma: Vec<f64>,
    pub walk: Vec<i64>,
}

fn lattice_index(n: usize, s: f64) -> usize {
    let n2 = (n * n) as f64;
    (n2 * s + 1e-9).floor().max(0.0) as usize
}

impl EmbeddingSchedule {
    pub fn steps(&self) -> usize {
        self.walk.len() - 1
    }

    pub fn check_invariants(&self) -> Result<()> {
        if self.sigma.first() != Some(&0.0) || self.walk.first() != Some(&0) {
            return Err(SimError::Validation { path: "schedule".into(), message: "must start at 0".into() });
        }
        if self.sigma.len() != self.walk.len() {
            return Err(SimError::Validation { path: "schedule".into(), message: "length mismatch".into() });
        }
        for m in 1..self.walk.len() {
            if !(self.sigma[m] > self.sigma[m - 1]) {
                return Err(SimError::Validation {
                    path: format!("schedule.sigma[{m}]"),
                    message: "not strictly increasing".into(),
                });
            }
            if (self.walk[m] - self.walk[m - 1]).abs() != 1 {
                return Err(SimError::Validation {
                    path: format!("schedule.walk[{m}]"),
                    message: "step is not ±1".into(),
                });
            }
        }
        Ok(())
    }

    /// σ_{⌊n²s⌋}.
    pub fn sigma_at(&self, s: f64) -> f64 {
        self.sigma[lattice_index(self.n, s).min(self.steps())]
    }

    /// max over s = it/G, i = 0..=G, of |σ_{⌊n²s⌋} − s|.
    pub fn sigma_deviation(&self, t: f64, grid_points: usize) -> f64 {
        let g = grid_points.max(1);
        (0..=g)
            .map(|i| {
                let s = t * i as f64 / g as f64;
                (self.sigma_at(s) - s).abs()
            })
            .fold(0.0, f64::max)
    }

    /// sup over s ∈ [0, t] of |σ_{⌊n²s⌋} − s|, using that σ_{⌊n²s⌋} is
    /// constant between lattice times.
    pub fn sigma_deviation_sup(&self, t: f64) -> f64 {
        let n2 = (self.n * self.n) as f64;
        let last = lattice_index(self.n, t).min(self.steps());
        (0..=last)
            .map(|j| {
                let a = j as f64 / n2;
                let b = ((j + 1) as f64 / n2).min(t);
                (self.sigma[j] - a).abs().max((self.sigma[j] - b).abs())
            })
            .fold(0.0, f64::max)
    }

    /// Rows (n, replicate, m, sigma, walk).
    pub fn write_csv<W: Write>(&self, out: &mut csv::Writer<W>, replicate: u64) -> Result<()> {
        for (m, (s, z)) in self.sigma.iter().zip(&self.walk).enumerate() {
            out.write_record([
                self.n.to_string(),
                replicate.to_string(),
                m.to_string(),
                format!("{s:.12e}"),
                z.to_string(),
            ])?;
        }
        Ok(())
    }
}

/// Drives a Brownian path through the scale function and stops it each time
/// the diffusion Z = A⁻¹(W(T⁻¹)) reaches a neighbouring site (z ± 1/n).
/// `resolution` scales the Euler step to the local site width in W units.
pub fn embed_rwre<R: Rng + ?Sized>(
    profile: &PotentialProfile,
    steps: usize,
    resolution: f64,
    rng: &mut R,
) -> Result<EmbeddingSchedule> {
    if !(resolution > 0.0) || !resolution.is_finite() {
        return Err(SimError::Config(format!("resolution must be positive, got {resolution}")));
    }
    let n = profile.n();
    let nf = n as f64;
    let a = |j: i64| profile.scale_at_site(j) / nf;
    let mut sigma = Vec::with_capacity(steps + 1);
    let mut walk = Vec::with_capacity(steps + 1);
    sigma.push(0.0);
    walk.push(0i64);
    let mut j = 0i64;
    let mut t = 0.0;
    for _ in 0..steps {
        let mid = a(j);
        let iv = ExitInterval {
            lo: a(j - 1),
            hi: a(j + 1),
            mid,
            rate_lo: (-2.0 * profile.v_hat_segment(j - 1)).exp(),
            rate_hi: (-2.0 * profile.v_hat_segment(j)).exp(),
            guard: Some((a(j - 2), a(j + 2))),
        };
        let width = (mid - iv.lo).min(iv.hi - mid);
        let du = resolution * width * width;
        let exit = first_exit(mid, &iv, du, rng)?;
        t += exit.clock;
        j += if exit.upper { 1 } else { -1 };
        sigma.push(t);
        walk.push(j);
    }
    Ok(EmbeddingSchedule { n, sigma, walk })
}

/// The same walk sampled directly from its transition law.
pub fn direct_rwre<R: Rng + ?Sized>(profile: &PotentialProfile, steps: usize, rng: &mut R) -> Vec<i64> {
    let mut walk = Vec::with_capacity(steps + 1);
    let mut j = 0i64;
    walk.push(j);
    for _ in 0..steps {
        let p = profile.up_probability(j);
        j += if rng.random::<f64>() < p { 1 } else { -1 };
        walk.push(j);
    }
    walk
}

/// Draws the site variables for one potential from an environment config:
/// ξ(i) = ξ_i(0), i < nK₁.
pub fn sample_profile<R: Rng + ?Sized>(factory: &EnvironmentFactory, k1: usize, rng: &mut R) -> Result<PotentialProfile> {
    let cfg = factory.config();
    let sites = cfg.n * k1;
    let env = factory.realize(sites, rng);
    let xi = site_values(&env, sites, &vec![0.0; cfg.dim]);
    PotentialProfile::build(&xi, cfg.n, k1, cfg.bound())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SigmaConfig {
    pub n_list: Vec<usize>,
    pub t: f64,
    pub k1: usize,
    /// Environment law; its `n` is replaced by each entry of `n_list`.
    pub environment: EnvironmentConfig,
    #[serde(default = "default_resolution")]
    pub resolution: f64,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
}

fn default_resolution() -> f64 {
    DEFAULT_RESOLUTION
}

fn default_grid_points() -> usize {
    200
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaRow {
    pub n: usize,
    pub median: f64,
    pub mean: Estimate,
    pub failures: usize,
}

/// For each n, the median over replicates of max_s |σ_{⌊n²s⌋} − s| on a grid
/// of s ∈ [0, t].
pub fn sigma_convergence_report(cfg: &SigmaConfig, mc: &MonteCarlo) -> Result<Vec<SigmaRow>> {
    if cfg.n_list.is_empty() {
        return Err(SimError::Validation { path: "sigma.n_list".into(), message: "must not be empty".into() });
    }
    if !(cfg.t >= 0.0) {
        return Err(SimError::Validation { path: "sigma.t".into(), message: "must be ≥ 0".into() });
    }
    let mut rows = Vec::with_capacity(cfg.n_list.len());
    for &n in &cfg.n_list {
        let mut env = cfg.environment.clone();
        env.n = n;
        let factory = EnvironmentFactory::new(&env)?;
        let steps = lattice_index(n, cfg.t);
        let res = run_replicates(&mc.with_seed(derive_seed(mc.seed, n as u64)), |_, rng| {
            let profile = sample_profile(&factory, cfg.k1, rng)?;
            let schedule = embed_rwre(&profile, steps, cfg.resolution, rng)?;
            Ok(schedule.sigma_deviation(cfg.t, cfg.grid_points))
        })
        .require_some()?;
        rows.push(SigmaRow {
            n,
            median: median(&res.values),
            mean: Estimate::mean_of(&res.values),
            failures: res.failure_count(),
        });
    }
    Ok(rows)
}
