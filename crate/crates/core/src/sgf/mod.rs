//! Finite-difference surface Green's functions of transition cubes.

mod cache;
mod green;
mod sparse;
mod system;

pub use cache::{CacheStats, ProfileKey, SgfCache};
pub use green::{
    expected_steps, sample_panel, solve_absorption_row, solve_absorption_row_with, solve_interior, solve_sgf,
    solve_sgf_with, DiscreteSGF, PanelDistribution,
};
pub use sparse::{solve_spd_plain, CsrMatrix, SolveStats, SolverOptions};
pub use system::{
    assemble_system, center_nodes, exit_panel, face_axes, panel_geometry, panel_offset, panel_point, ConductorPanel,
    FdSystem, DIRECTIONS,
};
