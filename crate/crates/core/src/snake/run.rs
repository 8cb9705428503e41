use rand::Rng;
use serde::{Deserialize, Serialize};

use super::record::{ContourRecord, LocalTimeLedger};
use super::state::{snake_step, SnakeState};
use crate::environment::Environment;
use crate::error::{Result, SimError};

/// Reflection height K₁ (nK₁ must be a positive integer) and root position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnakeConfig {
    pub k1: f64,
    #[serde(default = "origin")]
    pub root: Vec<f64>,
}

fn origin() -> Vec<f64> {
    vec![0.0]
}

impl SnakeConfig {
    pub fn new(k1: f64, dim: usize) -> Self {
        SnakeConfig { k1, root: vec![0.0; dim] }
    }

    /// nK₁ as an integer level.
    pub fn top(&self, n: usize) -> Result<usize> {
        let t = self.k1 * n as f64;
        let r = t.round();
        if !(self.k1 > 0.0) || (t - r).abs() > 1e-9 || r < 1.0 {
            return Err(SimError::Validation {
                path: "snake.k1".into(),
                message: format!("n*K1 = {t} must be a positive integer"),
            });
        }
        Ok(r as usize)
    }
}

/// When a run stops.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Horizon {
    /// A fixed number of steps.
    Steps { steps: u64 },
    /// τ^{n,0}_{c₀}: the first return to 0 after ⌊c₀n⌋ complete excursions,
    /// abandoned after `max_steps`.
    LocalTime { c0: f64, max_steps: u64 },
}

#[derive(Clone, Debug)]
pub struct SnakeRun {
    pub record: ContourRecord,
    pub ledger: LocalTimeLedger,
    /// Budget exhausted before the stopping rule fired.
    pub truncated: bool,
}

/// Runs the snake, calling `on_step(state_before, state_after)` after each step.
pub fn run_snake_with<E, R, F>(config: &SnakeConfig, horizon: Horizon, env: &E, rng: &mut R, mut on_step: F) -> Result<SnakeRun>
where
    E: Environment + ?Sized,
    R: Rng + ?Sized,
    F: FnMut(&SnakeState, bool),
{
    let n = env.n();
    let top = config.top(n)?;
    if config.root.len() != env.dim() {
        return Err(SimError::Validation {
            path: "snake.root".into(),
            message: format!("expected {} coordinates", env.dim()),
        });
    }
    let mut state = SnakeState::new(&config.root);
    let mut record = ContourRecord::new(n, top, &config.root);
    let mut ledger = LocalTimeLedger::new(n, top);
    let (budget, excursions) = match horizon {
        Horizon::Steps { steps } => {
            if steps == 0 {
                return Err(SimError::Precondition("step count must be positive".into()));
            }
            (steps, None)
        }
        Horizon::LocalTime { c0, max_steps } => {
            if !(c0 > 0.0) {
                return Err(SimError::Precondition("c0 must be positive".into()));
            }
            (max_steps, Some(super::record::lattice_floor(c0, n) as u64))
        }
    };
    let mut zero_visits: u64 = 1;
    let mut truncated = false;
    loop {
        if let Some(e) = excursions {
            if state.level == 0 && zero_visits > e {
                let last = record.steps() as u64;
                ledger.record_upcrossing(0, last);
                ledger.pending_terminal = Some(last);
                break;
            }
        }
        if state.step >= budget {
            truncated = excursions.is_some();
            break;
        }
        let before = state.level;
        let out = snake_step(&mut state, env, top, rng)?;
        if out.up {
            ledger.record_upcrossing(before, state.step - 1);
        }
        if state.level == 0 {
            zero_visits += 1;
        }
        record.push(state.level, state.tip());
        on_step(&state, out.up);
    }
    Ok(SnakeRun { record, ledger, truncated })
}

pub fn run_snake<E: Environment + ?Sized, R: Rng + ?Sized>(
    config: &SnakeConfig,
    horizon: Horizon,
    env: &E,
    rng: &mut R,
) -> Result<SnakeRun> {
    run_snake_with(config, horizon, env, rng, |_, _| {})
}
