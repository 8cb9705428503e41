use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::population::{step_population, PopulationState};
use crate::environment::{CovarianceKernel, Environment, EnvironmentConfig, EnvironmentFactory, EnvironmentMode};
use crate::error::{Result, SimError};
use crate::harness::runner::{run_replicates, MonteCarlo};
use crate::harness::stats::Estimate;
use crate::testfn::TestFunction;

/// Starting configuration: `count` particles at `position`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialCondition {
    pub count: usize,
    pub position: Vec<f64>,
}

impl InitialCondition {
    pub fn single(dim: usize) -> Self {
        InitialCondition { count: 1, position: vec![0.0; dim] }
    }

    pub fn at_origin(count: usize, dim: usize) -> Self {
        InitialCondition { count, position: vec![0.0; dim] }
    }
}

/// ⌊nδ⌋, tolerant of δ values like 0.3 that are not exact in binary.
pub fn generations(n: usize, delta: f64) -> usize {
    (n as f64 * delta + 1e-9).floor().max(0.0) as usize
}

/// Runs the forward system for `k_max` generations in a fresh environment,
/// calling `observe` after generation 0 and after each step.
pub fn simulate_forward<R, F>(
    factory: &EnvironmentFactory,
    initial: &InitialCondition,
    k_max: usize,
    rng: &mut R,
    mut observe: F,
) -> Result<PopulationState>
where
    R: Rng + ?Sized,
    F: FnMut(&PopulationState),
{
    let n = factory.config().n;
    let env = factory.realize(k_max, rng);
    let mut state = PopulationState::at_point(n, &initial.position, initial.count);
    observe(&state);
    while state.k < k_max {
        if state.is_extinct() {
            state.k += 1;
            state.mass_history.push(0.0);
        } else {
            step_population(&mut state, &env, rng)?;
        }
        observe(&state);
    }
    Ok(state)
}

fn check_dim(config: &EnvironmentConfig, initial: &InitialCondition) -> Result<()> {
    if initial.position.len() != config.dim {
        return Err(SimError::Validation {
            path: "initial.position".into(),
            message: format!("expected {} coordinates", config.dim),
        });
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SurvivalEstimate {
    pub estimate: Estimate,
    pub generations: usize,
    pub failures: usize,
}

/// Fraction of replicates, each started from one particle, alive after ⌊nδ⌋ generations.
pub fn estimate_survival_mc(config: &EnvironmentConfig, delta: f64, mc: &MonteCarlo) -> Result<SurvivalEstimate> {
    if mc.replicates < 100 {
        return Err(SimError::Precondition("survival estimate needs at least 100 replicates".into()));
    }
    let factory = EnvironmentFactory::new(config)?;
    let k = generations(config.n, delta);
    let initial = InitialCondition::single(config.dim);
    let res = run_replicates(mc, |_, rng| {
        let s = simulate_forward(&factory, &initial, k, rng, |_| {})?;
        Ok(!s.is_extinct())
    })
    .require_some()?;
    let alive = res.values.iter().filter(|&&a| a).count();
    Ok(SurvivalEstimate {
        estimate: Estimate::proportion(alive, res.values.len()),
        generations: k,
        failures: res.failure_count(),
    })
}

/// E over one slice value of the conditional offspring mean (½+ξ/4√n)/(½−ξ/4√n),
/// for the marginal law of ξ at a point (Gaussian, clipped).
pub fn exact_offspring_mean(config: &EnvironmentConfig) -> Result<f64> {
    config.validate()?;
    let n = config.n as f64;
    let ratio = |x: f64| (0.5 + x / (4.0 * n.sqrt())) / (0.5 - x / (4.0 * n.sqrt()));
    let bound = config.bound();
    let clip = |x: f64| x.clamp(-bound, bound);
    let mean = config.nu / n.sqrt();
    let var = match config.mode {
        EnvironmentMode::Random => config.kernel.diagonal_sup(),
        _ => return Err(SimError::Unsupported("exact offspring mean needs random mode".into())),
    };
    if var == 0.0 || matches!(config.kernel, CovarianceKernel::Zero) {
        return Ok(ratio(clip(mean)));
    }
    let sd = var.sqrt();
    let normal = Normal::new(mean, sd).map_err(|e| SimError::Domain(e.to_string()))?;
    // Composite Simpson over the unclipped part, atoms at ±bound for the tails.
    let (a, b) = ((-bound).max(mean - 12.0 * sd), bound.min(mean + 12.0 * sd));
    let mut inner = 0.0;
    if b > a {
        let m = 20_000;
        let h = (b - a) / m as f64;
        let dens = |x: f64| (-(x - mean) * (x - mean) / (2.0 * var)).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt());
        for i in 0..=m {
            let x = a + i as f64 * h;
            let w = if i == 0 || i == m { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            inner += w * ratio(x) * dens(x);
        }
        inner *= h / 3.0;
    }
    let lower = normal.cdf(-bound);
    let upper = 1.0 - normal.cdf(bound);
    Ok(inner + lower * ratio(-bound) + upper * ratio(bound))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TailCheck {
    pub level: f64,
    pub probability: Estimate,
    pub bound: f64,
    pub ok: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MassMomentReport {
    pub initial_mass: f64,
    pub generations: usize,
    pub growth_rate_b: f64,
    pub mean_final_mass: Estimate,
    /// X_0·(E N)^k from the exact one-step mean.
    pub exact_mean_final_mass: f64,
    /// X_0·(1 + b/n)^k.
    pub mean_bound: f64,
    pub mean_bound_ok: bool,
    pub exact_mean_ok: bool,
    pub tails: Vec<TailCheck>,
    /// Mean mass per generation.
    pub mean_trajectory: Vec<f64>,
    /// (1/δ) log(mean final mass / initial mass).
    pub empirical_growth_rate: Estimate,
    pub failures: usize,
}

/// Mean of the final mass and tail probabilities of the running maximum, with
/// their supermartingale bounds.
pub fn mass_moment_report(
    config: &EnvironmentConfig,
    initial: &InitialCondition,
    delta: f64,
    levels: &[f64],
    mc: &MonteCarlo,
) -> Result<MassMomentReport> {
    if mc.replicates < 100 {
        return Err(SimError::Precondition("mass report needs at least 100 replicates".into()));
    }
    check_dim(config, initial)?;
    let factory = EnvironmentFactory::new(config)?;
    let k = generations(config.n, delta);
    let n = config.n as f64;
    let res = run_replicates(mc, |_, rng| {
        let s = simulate_forward(&factory, initial, k, rng, |_| {})?;
        Ok(s.mass_history)
    })
    .require_some()?;
    let r = res.values.len();
    let finals: Vec<f64> = res.values.iter().map(|h| h[k]).collect();
    let mean_final = Estimate::mean_of(&finals);
    let x0 = initial.count as f64 / n;
    let b = config.growth_rate();
    let delta_eff = k as f64 / n;
    let mean_bound = x0 * (1.0 + b / n).powi(k as i32);
    let exact = x0 * exact_offspring_mean(config)?.powi(k as i32);
    let tails = levels
        .iter()
        .map(|&a| {
            let hits = res.values.iter().filter(|h| h.iter().any(|&m| m >= a)).count();
            let probability = Estimate::proportion(hits, r);
            let bound = x0 * (b * delta_eff).exp().max(1.0) / a;
            TailCheck { level: a, probability, bound, ok: probability.value <= bound + 3.0 * probability.se }
        })
        .collect();
    let mean_trajectory = (0..=k).map(|j| res.values.iter().map(|h| h[j]).sum::<f64>() / r as f64).collect();
    let growth = if delta_eff > 0.0 && mean_final.value > 0.0 {
        Estimate {
            value: (mean_final.value / x0).ln() / delta_eff,
            se: mean_final.se / mean_final.value / delta_eff,
            count: r,
        }
    } else {
        Estimate { value: f64::NAN, se: f64::NAN, count: r }
    };
    Ok(MassMomentReport {
        initial_mass: x0,
        generations: k,
        growth_rate_b: b,
        mean_final_mass: mean_final,
        exact_mean_final_mass: exact,
        mean_bound,
        mean_bound_ok: mean_final.value <= mean_bound + 3.0 * mean_final.se,
        exact_mean_ok: mean_final.within(exact, 3.0),
        tails,
        mean_trajectory,
        empirical_growth_rate: growth,
        failures: res.failure_count(),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SemigroupReport {
    pub generations: usize,
    pub lhs: Estimate,
    /// X_0(S_δ f).
    pub heat_value: f64,
    /// (1 + b/n)^k X_0(S_δ f).
    pub bound: f64,
    pub bound_ok: bool,
    pub failures: usize,
}

/// E X_{⌊nδ⌋/n}(f) against (1 + b/n)^{⌊nδ⌋} X_0(S_δ f) for a Gaussian bump f.
pub fn semigroup_bound_check(
    config: &EnvironmentConfig,
    initial: &InitialCondition,
    f: &TestFunction,
    delta: f64,
    mc: &MonteCarlo,
) -> Result<SemigroupReport> {
    if matches!(f, TestFunction::Cosine { .. }) {
        return Err(SimError::Unsupported("semigroup check needs a Gaussian bump or constant".into()));
    }
    check_dim(config, initial)?;
    let factory = EnvironmentFactory::new(config)?;
    let k = generations(config.n, delta);
    let n = config.n as f64;
    let res = run_replicates(mc, |_, rng| {
        let s = simulate_forward(&factory, initial, k, rng, |_| {})?;
        Ok(s.integrate(f))
    })
    .require_some()?;
    let lhs = Estimate::mean_of(&res.values);
    let heat = f.heat_evolve(k as f64 / n, config.dim);
    let heat_value = initial.count as f64 / n * heat.eval(&initial.position);
    let bound = (1.0 + config.growth_rate() / n).powi(k as i32) * heat_value;
    Ok(SemigroupReport {
        generations: k,
        lhs,
        heat_value,
        bound,
        bound_ok: lhs.value <= bound + 3.0 * lhs.se,
        failures: res.failure_count(),
    })
}

/// Convenience: one generation count and environment realization for callers
/// that drive the forward system themselves.
pub fn realize_for_horizon<R: Rng + ?Sized>(
    factory: &EnvironmentFactory,
    delta: f64,
    rng: &mut R,
) -> (usize, crate::environment::EnvironmentRealization) {
    let k = generations(factory.config().n, delta);
    (k, factory.realize(k, rng))
}

#[allow(dead_code)]
fn _assert_env_object_safe(_: &dyn Environment) {}
