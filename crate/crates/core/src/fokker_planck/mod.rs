//! The generator `L phi = 1/2 a^{ij} d_ij phi + b^i d_i phi`, its flux-form
//! adjoint and the Fokker-Planck equation `d_t u = L* u` on a box.

mod duality;
mod generator;
mod solve;
mod sparse;

pub use duality::{
    duality_check, restrict, uniqueness_experiment, uniqueness_refinement, Discretization, DualityReport, DualityRow,
    RefinementReport, TestFunction, UniquenessReport, GRID_BUDGET, REFINEMENT_RATIO,
};
pub use generator::{Boundary, GeneratorGrid, PECLET_SWITCH};
pub use solve::{
    grid_moments, l1_distance, solve, step_adjoint, AdjointStepper, FpeScheme, SolveOptions, WeakSolutionPath,
    BOX_NOTE, SOLVER_TOLERANCE,
};
pub use sparse::{bicgstab, dot, Csr, SolveStats};
