use std::panic::{catch_unwind, AssertUnwindSafe};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::rng::{replicate_rng, SimRng};

/// Replicate count, master seed and worker count for one Monte Carlo job.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarlo {
    pub replicates: u64,
    pub seed: u64,
    /// 0 selects rayon's default.
    #[serde(default)]
    pub workers: usize,
}

impl MonteCarlo {
    pub fn new(replicates: u64, seed: u64) -> Self {
        MonteCarlo { replicates, seed, workers: 0 }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        MonteCarlo { seed, ..self.clone() }
    }
}

/// Successful replicate values in index order, plus failures.
#[derive(Debug)]
pub struct ReplicateResults<T> {
    pub values: Vec<T>,
    pub failures: Vec<(u64, String)>,
}

impl<T> ReplicateResults<T> {
    pub fn failure_count(&self) -> usize {
        self.failures.len()
    }

    /// Error out if every replicate failed.
    pub fn require_some(self) -> Result<Self> {
        if self.values.is_empty() && !self.failures.is_empty() {
            let (index, message) = self.failures[0].clone();
            return Err(SimError::ReplicatePanic { index, message });
        }
        Ok(self)
    }
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = p.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = p.downcast_ref::<String>() {
        s.clone()
    } else {
        "panic".into()
    }
}

/// Runs `f(index, rng)` for every replicate. Each replicate gets its own stream
/// derived from (seed, index); outputs come back in index order so any
/// downstream reduction is independent of the worker count.
pub fn run_replicates<T, F>(mc: &MonteCarlo, f: F) -> ReplicateResults<T>
where
    T: Send,
    F: Fn(u64, &mut SimRng) -> Result<T> + Sync,
{
    let job = |i: u64| -> std::result::Result<T, String> {
        let mut rng = replicate_rng(mc.seed, i);
        match catch_unwind(AssertUnwindSafe(|| f(i, &mut rng))) {
            Ok(Ok(v)) => Ok(v),
            Ok(Err(e)) => Err(e.to_string()),
            Err(p) => Err(panic_message(p)),
        }
    };
    let outcomes: Vec<std::result::Result<T, String>> = if mc.workers == 1 {
        (0..mc.replicates).map(job).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(mc.workers).build();
        match pool {
            Ok(pool) => pool.install(|| (0..mc.replicates).into_par_iter().map(job).collect()),
            Err(_) => (0..mc.replicates).map(job).collect(),
        }
    };
    let mut values = Vec::with_capacity(outcomes.len());
    let mut failures = Vec::new();
    for (i, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(v) => values.push(v),
            Err(m) => failures.push((i as u64, m)),
        }
    }
    ReplicateResults { values, failures }
}
