//! Simulation toolkit for surface-electrode rf lattice traps built from a
//! perforated rf plate: geometry rasterization, Laplace solves,
//! pseudopotential analysis, ion dynamics, two-ion repulsion and coupling
//! scaling estimates.

pub mod analysis;
pub mod coulomb;
pub mod dynamics;
pub mod error;
pub mod fieldsolver;
pub mod geometry;
pub mod grid;
pub mod interp;
pub mod lsq;
pub mod pseudopot;
pub mod scaling;
pub mod units;

pub use error::{Error, Result};
pub use fieldsolver::{gradient, multipole_potential, solve_laplace, SolverOptions};
pub use geometry::{build_lattice_stack, rasterize, BoundaryGrid, ElectrodeStack, RasterOptions};
pub use grid::{GridLayout, ScalarField3D, VectorField3D};
