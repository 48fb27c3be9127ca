//! Ensemble integration of `dX = sigma(X) dB + b(X) dt` on shared Brownian
//! paths, and the functionals that compare two coupled flows.

mod coupled;
mod dump;
mod ensemble;
mod noise;
mod step;

pub use coupled::{
    probe_gaps, run_coupled, uniqueness_probe, CoupledOptions, CoupledRun, Lane, LaneResult, ProbeReport,
    ProbeVariant,
};
pub use dump::{read_trajectories, write_trajectories, TrajectoryHeader};
pub use ensemble::{
    integrate, moment_report, path_average, psi_functional, psi_stability, sup_distance, sup_distance_interpolated,
    truncated_square_distance, FlowEnsemble, IntegrateOptions, RecordPolicy, StartPoints,
};
pub use noise::{BrownianStore, TimeGrid};
pub use step::{Scheme, OVERFLOW_NORM};

#[cfg(test)]
mod tests;
