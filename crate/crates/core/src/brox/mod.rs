//! Reflected diffusion in a random potential: the potential built from site
//! variables, the diffusion as a time-changed Brownian motion, the embedded
//! random walk and its first-passage diagnostics.

pub mod bmre;
pub mod embed;
pub mod exit;
pub mod potential;

pub use bmre::{simulate_bmre, TimeChangeState};
pub use embed::{
    direct_rwre, embed_rwre, sample_profile, sigma_convergence_report, EmbeddingSchedule, SigmaConfig, SigmaRow,
    DEFAULT_RESOLUTION,
};
pub use exit::{exit_time_stats, sample_exit_time, ExitTimeReport};
pub use potential::{site_increment, site_values, tent, PotentialProfile};
