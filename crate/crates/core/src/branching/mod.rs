//! The branching Brownian particle system in random environment and the exact
//! survival oracle of its total-mass chain.

mod moments;
mod population;
mod survival;

pub use moments::{
    estimate_survival_mc, exact_offspring_mean, generations, mass_moment_report, realize_for_horizon,
    semigroup_bound_check, simulate_forward, InitialCondition, MassMomentReport, SemigroupReport,
    SurvivalEstimate, TailCheck,
};
pub use population::{offspring_count, step_population, PopulationState};
pub use survival::{exact_survival_geometric, survival_closed_form, survival_sequence, survival_rate_h, SurvivalOracleParams};
