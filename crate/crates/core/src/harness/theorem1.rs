use std::io::Write;

use serde::{Deserialize, Serialize};

use super::ks::{ks_two_sample, KsResult};
use super::runner::{run_replicates, MonteCarlo};
use super::stats::{Estimate, SummaryStats};
use crate::branching::{generations, simulate_forward, InitialCondition};
use crate::environment::{EnvironmentConfig, EnvironmentFactory};
use crate::error::{Result, SimError};
use crate::rng::derive_seed;
use crate::snake::{occupation_measure, run_snake, Horizon, SnakeConfig};
use crate::testfn::TestFunction;

/// Snake occupation X^{n,r}_{0,t}(φ) against the forward system started from
/// ⌊rn⌋ particles, under one environment law.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Theorem1Config {
    pub environment: EnvironmentConfig,
    /// Must equal `environment` when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snake_environment: Option<EnvironmentConfig>,
    pub k1: f64,
    pub r: f64,
    pub times: Vec<f64>,
    #[serde(default = "TestFunction::one")]
    pub phi: TestFunction,
    #[serde(default = "default_max_steps")]
    pub max_steps: u64,
}

fn default_max_steps() -> u64 {
    200_000_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Row {
    pub t: f64,
    pub snake: Estimate,
    pub forward: Estimate,
    pub ks: KsResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Report {
    pub rows: Vec<Theorem1Row>,
    pub snake_failures: usize,
    pub forward_failures: usize,
}

impl Theorem1Report {
    pub fn all_pass(&self, level: f64) -> bool {
        self.rows.iter().all(|r| !r.ks.rejects(level))
    }

    pub fn summary(&self, label: &str, level: f64) -> Vec<SummaryStats> {
        self.rows
            .iter()
            .map(|r| {
                SummaryStats::new(format!("{label}.ks_t{}", r.t), r.ks.statistic, 0.0, 0.0)
                    .note(format!(
                        "snake mean {:.4}±{:.4}, forward mean {:.4}±{:.4}, p={:.4}",
                        r.snake.value, r.snake.se, r.forward.value, r.forward.se, r.ks.p_value
                    ))
                    .rule(format!("KS p-value >= {level}"), !r.ks.rejects(level))
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "snake_mean", "snake_se", "forward_mean", "forward_se", "ks", "p_value"])?;
        for r in &self.rows {
            out.write_record([
                r.t.to_string(),
                r.snake.value.to_string(),
                r.snake.se.to_string(),
                r.forward.value.to_string(),
                r.forward.se.to_string(),
                r.ks.statistic.to_string(),
                r.ks.p_value.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn theorem1_representation_check(cfg: &Theorem1Config, mc: &MonteCarlo) -> Result<Theorem1Report> {
    if let Some(se) = &cfg.snake_environment {
        if se != &cfg.environment {
            return Err(SimError::Validation {
                path: "theorem1.snake_environment".into(),
                message: "snake and forward environments must share one law".into(),
            });
        }
    }
    let bad = |path: &str, message: &str| SimError::Validation { path: format!("theorem1.{path}"), message: message.into() };
    if cfg.times.is_empty() {
        return Err(bad("times", "must not be empty"));
    }
    if cfg.times.iter().any(|&t| !(t >= 0.0) || t > cfg.k1) {
        return Err(bad("times", "every t must lie in [0, K1]"));
    }
    if !(cfg.r > 0.0) {
        return Err(bad("r", "must be positive"));
    }
    let n = cfg.environment.n;
    let factory = EnvironmentFactory::new(&cfg.environment)?;
    let snake = SnakeConfig::new(cfg.k1, cfg.environment.dim);
    let top = snake.top(n)?;
    let count = generations(n, cfg.r);
    if count == 0 {
        return Err(bad("r", "floor(r n) must be at least 1"));
    }
    let phi = &cfg.phi;

    let snake_res = run_replicates(&mc.with_seed(derive_seed(mc.seed, 1)), |_, rng| {
        let env = factory.realize(top, rng);
        let run = run_snake(&snake, Horizon::LocalTime { c0: cfg.r, max_steps: cfg.max_steps }, &env, rng)?;
        if run.truncated {
            return Err(SimError::Precondition(format!("snake did not reach tau within {} steps", cfg.max_steps)));
        }
        cfg.times
            .iter()
            .map(|&t| occupation_measure(&run.record, &run.ledger, 0.0, cfg.r, 0.0, t, phi))
            .collect::<Result<Vec<f64>>>()
    })
    .require_some()?;

    let gens: Vec<usize> = cfg.times.iter().map(|&t| generations(n, t)).collect();
    let k_max = gens.iter().copied().max().unwrap_or(0);
    let initial = InitialCondition::at_origin(count, cfg.environment.dim);
    let fwd_res = run_replicates(&mc.with_seed(derive_seed(mc.seed, 2)), |_, rng| {
        let mut at = vec![0.0; k_max + 1];
        simulate_forward(&factory, &initial, k_max, rng, |s| at[s.k] = s.integrate(phi))?;
        Ok(gens.iter().map(|&k| at[k]).collect::<Vec<f64>>())
    })
    .require_some()?;

    let mut rows = Vec::with_capacity(cfg.times.len());
    for (j, &t) in cfg.times.iter().enumerate() {
        let a: Vec<f64> = snake_res.values.iter().map(|v| v[j]).collect();
        let b: Vec<f64> = fwd_res.values.iter().map(|v| v[j]).collect();
        rows.push(Theorem1Row {
            t,
            snake: Estimate::mean_of(&a),
            forward: Estimate::mean_of(&b),
            ks: ks_two_sample(&a, &b)?,
        });
    }
    Ok(Theorem1Report { rows, snake_failures: snake_res.failures.len(), forward_failures: fwd_res.failures.len() })
}
