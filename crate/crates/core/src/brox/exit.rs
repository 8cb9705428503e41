use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::harness::runner::{run_replicates, MonteCarlo};
use crate::harness::stats::{median, Estimate};

/// Interval (lo, hi) with clock rate `rate_lo` below `mid` and `rate_hi` above.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ExitInterval {
    pub lo: f64,
    pub hi: f64,
    pub mid: f64,
    pub rate_lo: f64,
    pub rate_hi: f64,
    /// Positions that count as skipping a whole neighbour interval.
    pub guard: Option<(f64, f64)>,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Exit {
    pub upper: bool,
    pub clock: f64,
}

/// Skip the bridge test when both endpoints sit this many step-SDs from a
/// barrier; the crossing probability is then below e^{−50}.
const BRIDGE_CUTOFF: f64 = 5.0;

/// First exit of a Brownian path started at `w0` from the interval, on an Euler
/// grid of spacing `du`. Between grid points a crossing is detected with the
/// Brownian-bridge probability exp(−2ab/du); the crossing step is charged by
/// linear interpolation when the endpoint is outside and by half a step when
/// only the bridge crossed.
pub(crate) fn first_exit<R: Rng + ?Sized>(w0: f64, iv: &ExitInterval, du: f64, rng: &mut R) -> Result<Exit> {
    let sd = du.sqrt();
    let far = BRIDGE_CUTOFF * sd;
    let mut w = w0;
    let mut clock = 0.0;
    loop {
        let rate = if w < iv.mid { iv.rate_lo } else { iv.rate_hi };
        let w1 = w + sd * rng.sample::<f64, _>(StandardNormal);
        if let Some((glo, ghi)) = iv.guard {
            if w1 <= glo || w1 >= ghi {
                return Err(SimError::Resolution(format!(
                    "one grid step crossed two sites (step sd {sd:.3e}); refine the time step"
                )));
            }
        }
        if w1 >= iv.hi {
            clock += rate * du * (iv.hi - w) / (w1 - w);
            return Ok(Exit { upper: true, clock });
        }
        if w1 <= iv.lo {
            clock += rate * du * (w - iv.lo) / (w - w1);
            return Ok(Exit { upper: false, clock });
        }
        let (a_hi, b_hi) = (iv.hi - w, iv.hi - w1);
        let (a_lo, b_lo) = (w - iv.lo, w1 - iv.lo);
        if a_hi.min(b_hi) < far || a_lo.min(b_lo) < far {
            let p_hi = (-2.0 * a_hi * b_hi / du).exp();
            let p_lo = (-2.0 * a_lo * b_lo / du).exp();
            let u: f64 = rng.random();
            if u < p_hi {
                clock += 0.5 * rate * du;
                return Ok(Exit { upper: true, clock });
            }
            if u < p_hi + p_lo {
                clock += 0.5 * rate * du;
                return Ok(Exit { upper: false, clock });
            }
        }
        clock += rate * du;
        w = w1;
    }
}

/// Exit time θ = inf{t : |W(t)| = 1} of one Brownian path.
pub fn sample_exit_time<R: Rng + ?Sized>(dt: f64, rng: &mut R) -> Result<f64> {
    if !(dt > 0.0) || dt >= 1.0 {
        return Err(SimError::Config(format!("exit-time step must be in (0, 1), got {dt}")));
    }
    let iv = ExitInterval { lo: -1.0, hi: 1.0, mid: 0.0, rate_lo: 1.0, rate_hi: 1.0, guard: None };
    Ok(first_exit(0.0, &iv, dt, rng)?.clock)
}

/// Monte Carlo summary of θ.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExitTimeReport {
    pub mean: Estimate,
    pub median: f64,
    pub min: f64,
    pub samples: Vec<f64>,
}

pub fn exit_time_stats(mc: &MonteCarlo, dt: f64) -> Result<ExitTimeReport> {
    if mc.replicates < 1000 {
        return Err(SimError::Precondition(format!("need at least 1000 replicates, got {}", mc.replicates)));
    }
    let res = run_replicates(mc, |_, rng| sample_exit_time(dt, rng)).require_some()?;
    let samples = res.values;
    Ok(ExitTimeReport {
        mean: Estimate::mean_of(&samples),
        median: median(&samples),
        min: samples.iter().copied().fold(f64::INFINITY, f64::min),
        samples,
    })
}
