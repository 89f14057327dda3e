//! Floating random walk (FRW) capacitance extraction for structures with
//! arbitrary, non-stratified dielectrics.
//!
//! The walk engine hops between conductor-free transition cubes. Each hop is
//! sampled from the discrete surface Green's function of a finite-difference
//! lattice over the cube, either from a cached solve (stratified cubes), a
//! fresh sparse solve, or by simulating the absorbing Markov chain of the
//! stencil directly ([`microwalk`]), which needs no linear algebra at all.

pub mod engine;
pub mod error;
pub mod geometry;
pub mod microwalk;
pub mod oracle;
pub mod rng;
pub mod sgf;

pub use error::{Error, Result};

/// Vacuum permittivity in F/m.
pub const EPS0: f64 = 8.8541878128e-12;

/// Geometry is specified in nanometres.
pub const NM: f64 = 1e-9;
