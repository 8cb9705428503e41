//! Monte Carlo orchestration and statistics.

pub mod experiment;
pub mod ks;
pub mod mp;
pub mod runner;
pub mod stats;
pub mod theorem1;

pub use experiment::{run_experiment, CsvTable, ExperimentResult, ExperimentSpec, HorizonParams, EXPERIMENTS};
pub use ks::{ks_one_sample, ks_two_sample, KsResult};
pub use mp::{forward_paths, mp_residual_test, snake_paths, MartingaleTestReport, OccupationPath, OccupationSnapshot};
pub use runner::{run_replicates, MonteCarlo, ReplicateResults};
pub use stats::{Estimate, SummaryStats, Verdict};
pub use theorem1::{theorem1_representation_check, Theorem1Config, Theorem1Report};
