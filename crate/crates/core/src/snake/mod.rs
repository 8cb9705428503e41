//! The discrete snake reflected at 0 and K₁: contour and tip dynamics, local
//! times, occupation measures and excursion-reversal transforms.

mod displacement;
mod occupation;
mod record;
mod reversal;
mod run;
mod state;

pub use displacement::{displacement_count, displacement_count_bruteforce};
pub use occupation::{occupation_identity_report, occupation_measure, OccupationAccumulator, OccupationIdentity};
pub use record::{inverse_local_time, local_time, ContourRecord, LocalTimeLedger};
pub use reversal::{full_reversal, reversal_permutation, reverse_transform, ContourStatistics};
pub use run::{run_snake, run_snake_with, Horizon, SnakeConfig, SnakeRun};
pub use state::{snake_step, SnakeState, StepOutcome};
