//! Ground truth for validation: a whole-domain finite-difference solver,
//! exact absorbing-chain quantities of small lattices, analytic fixtures and
//! distribution comparators.

mod dense;
mod fixtures;
mod reference;
mod stats;

pub use dense::{exact_absorption_row, exact_chain, exact_expected_steps, ExactChain, DEFAULT_DENSE_CAP};
pub use fixtures::{analytic_plate_capacitance, random_block_grid, random_exp_grid, CubeSymmetry};
pub use reference::{
    build_mesh, graded_axis, reference_capacitance, reference_row, reference_solve, AxisMesh, OracleOptions,
    ReferenceSolution,
};
pub use stats::{compare_distribution, DistributionReport, MIN_SAMPLES};
