use rand::Rng;
use rand_distr::StandardNormal;

use super::potential::PotentialProfile;
use crate::error::{Result, SimError};

/// Driving Brownian path W at time u and the clock T(u) = ∫₀ᵘ e^{−2V̂(A⁻¹(W))}.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TimeChangeState {
    pub u: f64,
    pub w: f64,
    pub clock: f64,
}

impl TimeChangeState {
    /// Clock rate at the current W.
    pub fn rate(&self, profile: &PotentialProfile) -> f64 {
        (-2.0 * profile.v_hat_at(profile.scale_inv(self.w))).exp()
    }

    /// Advances W by `dw` over `du`, charging the clock at the left endpoint.
    /// Returns the rate that was charged.
    pub fn step(&mut self, profile: &PotentialProfile, dw: f64, du: f64) -> f64 {
        let rate = self.rate(profile);
        self.clock += rate * du;
        self.u += du;
        self.w += dw;
        rate
    }

    /// Z at the current state, A⁻¹(W).
    pub fn z(&self, profile: &PotentialProfile) -> f64 {
        profile.scale_inv(self.w)
    }
}

/// Z(t) = A⁻¹(W(T⁻¹(t))) at each of `times` (sorted, within [0, t_max]).
/// W is refined until the clock passes t_max.
pub fn simulate_bmre<R: Rng + ?Sized>(
    profile: &PotentialProfile,
    t_max: f64,
    du: f64,
    times: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !(du > 0.0) || !du.is_finite() {
        return Err(SimError::Config(format!("time step must be positive, got {du}")));
    }
    if !(t_max > 0.0) {
        return Err(SimError::Config(format!("t_max must be positive, got {t_max}")));
    }
    if times.windows(2).any(|w| w[1] < w[0]) || times.iter().any(|&t| t < 0.0 || t > t_max) {
        return Err(SimError::Precondition("times must be sorted within [0, t_max]".into()));
    }
    let sd = du.sqrt();
    let mut state = TimeChangeState::default();
    let mut out = Vec::with_capacity(times.len());
    let mut next = 0;
    while next < times.len() {
        let t = times[next];
        if t <= state.clock {
            out.push(state.z(profile));
            next += 1;
            continue;
        }
        let before = state;
        let dw = sd * rng.sample::<f64, _>(StandardNormal);
        let rate = state.step(profile, dw, du);
        while next < times.len() && times[next] <= state.clock {
            let frac = (times[next] - before.clock) / (rate * du);
            out.push(profile.scale_inv(before.w + frac * dw));
            next += 1;
        }
    }
    Ok(out)
}
