//! Fixtures shared by the benchmarks.

use latticetrap::analysis::{solve_stack, SolvedStack};
use latticetrap::fieldsolver::SolverOptions;
use latticetrap::geometry::{build_lattice_stack, rasterize, BoundaryGrid, ElectrodeStack, RasterOptions};
use latticetrap::units::mm;

/// 3x3 lattice under a 6 mm top plate.
pub fn small_stack() -> ElectrodeStack {
    build_lattice_stack(ElectrodeStack { lattice_dims: (3, 3), top_plate_height: Some(mm(6.0)), ..ElectrodeStack::reference() })
        .expect("valid stack")
}

pub fn small_raster(stack: &ElectrodeStack) -> RasterOptions {
    RasterOptions { margin: 3.0 * stack.hole_pitch, ..RasterOptions::new(stack, stack.hole_diameter / 8.0) }
}

pub fn small_grid() -> BoundaryGrid {
    let s = small_stack();
    rasterize(&s, &small_raster(&s)).expect("rasterizes")
}

pub fn small_solved() -> SolvedStack {
    let s = small_stack();
    solve_stack(&s, &small_raster(&s), &SolverOptions::default()).expect("solves")
}

/// Two tones plus a slow drift, sampled `n` times at `dt`.
pub fn two_tone(n: usize, dt: f64) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let t = i as f64 * dt;
            (2.0e6 * t).sin() + 0.2 * (7.0e6 * t).cos() + 1e3 * t
        })
        .collect()
}
