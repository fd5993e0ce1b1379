//! Electrostatic potential from a rasterized electrode geometry.
//!
//! The Laplace equation is discretized with the 7-point stencil and solved by
//! multigrid V-cycles (red-black Gauss-Seidel smoothing). Very small grids use
//! red-black SOR instead.

mod io;
mod multigrid;

pub use io::{read_field, write_field, write_vtk, FieldHeader, FIELD_MAGIC};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoundaryGrid;
use crate::grid::{FieldMeta, ScalarField3D, VectorField3D};
use multigrid::{Hierarchy, Level};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverMethod {
    /// Multigrid when the grid coarsens at least twice, SOR otherwise.
    #[default]
    Auto,
    Multigrid,
    Sor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Stop once max |h^2 L phi| / potential scale falls below this.
    pub tol: f64,
    /// Cap on V-cycles (multigrid) or sweeps (SOR).
    pub max_iterations: usize,
    pub method: SolverMethod,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iterations: 400, method: SolverMethod::Auto }
    }
}

/// Convergence record of one solve.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub method: String,
    pub levels: usize,
    /// Normalized residual after each iteration.
    pub history: Vec<f64>,
}

/// Solve the Laplace equation with the given Dirichlet nodes.
pub fn solve_laplace(grid: &BoundaryGrid, opts: &SolverOptions) -> Result<ScalarField3D> {
    solve_laplace_report(grid, opts).map(|(f, _)| f)
}

/// [`solve_laplace`] that also returns the residual history.
pub fn solve_laplace_report(
    grid: &BoundaryGrid,
    opts: &SolverOptions,
) -> Result<(ScalarField3D, SolveReport)> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter(format!("solver tolerance must be positive, got {}", opts.tol)));
    }
    let layout = grid.layout;
    let [nx, ny, nz] = layout.dims;
    let face_has_dirichlet = |k: usize| (0..ny).any(|j| (0..nx).any(|i| grid.is_dirichlet(layout.index(i, j, k))));
    if !face_has_dirichlet(0) {
        return Err(Error::MissingZBoundary("bottom"));
    }
    if !face_has_dirichlet(nz - 1) {
        return Err(Error::MissingZBoundary("top"));
    }

    let fixed = grid.dirichlet_mask();
    let u: Vec<f64> = (0..layout.len())
        .map(|n| if fixed[n] { grid.dirichlet_value(n) } else { 0.0 })
        .collect();
    let h_min = layout.spacing.iter().cloned().fold(f64::INFINITY, f64::min);
    let norm = h_min * h_min / grid.potential_scale();
    let fine = Level::new(layout.dims, layout.spacing, fixed, u, false);

    let use_mg = match opts.method {
        SolverMethod::Multigrid => true,
        SolverMethod::Sor => false,
        SolverMethod::Auto => layout.dims.iter().all(|&n| n >= 17),
    };

    let mut history = Vec::new();
    let (u, levels, method) = if use_mg && !fine.free_faces {
        let (x, levels) = pcg(fine, layout.spacing, opts, norm, &mut history)?;
        (x, levels, "multigrid-pcg")
    } else if use_mg {
        let mut h = Hierarchy::new(fine, layout.spacing, 16);
        let levels = h.depth();
        let mut res = h.levels[0].residual() * norm;
        let mut converged = res <= opts.tol;
        let mut it = 0;
        while !converged && it < opts.max_iterations {
            h.vcycle(0);
            it += 1;
            res = h.levels[0].residual() * norm;
            history.push(res);
            log::debug!("multigrid cycle {it}: residual {res:e}");
            converged = res <= opts.tol;
        }
        if !converged {
            return Err(Error::NotConverged { iterations: it, residual: res, tol: opts.tol });
        }
        (std::mem::take(&mut h.levels[0].u), levels, "multigrid")
    } else {
        let mut lvl = fine;
        let n_max = layout.dims.iter().copied().max().unwrap_or(2).max(2) as f64;
        let omega = 2.0 / (1.0 + (std::f64::consts::PI / n_max).sin());
        let mut res = lvl.residual() * norm;
        let mut converged = res <= opts.tol;
        let mut it = 0;
        let cap = opts.max_iterations.max(1) * 50;
        while !converged && it < cap {
            lvl.smooth_color(0, omega);
            lvl.smooth_color(1, omega);
            it += 1;
            res = lvl.residual() * norm;
            history.push(res);
            converged = res <= opts.tol;
        }
        if !converged {
            return Err(Error::NotConverged { iterations: it, residual: res, tol: opts.tol });
        }
        (lvl.u, 1, "sor")
    };

    let iterations = history.len();
    let residual = history.last().copied().unwrap_or(0.0);
    let mut field = ScalarField3D::new(layout, u)?;
    field.meta = FieldMeta { tolerance: opts.tol, residual, iterations };
    Ok((field, SolveReport { method: method.into(), levels, history }))
}

/// Conjugate gradients on the free nodes, preconditioned by one V-cycle.
/// Needs a symmetric operator, i.e. no zero-flux faces.
fn pcg(
    fine: Level,
    spacing: [f64; 3],
    opts: &SolverOptions,
    norm: f64,
    history: &mut Vec<f64>,
) -> Result<(Vec<f64>, usize)> {
    let n = fine.u.len();
    let mut x = fine.u.clone();
    let mut r = vec![0.0; n];
    let mut q = vec![0.0; n];
    // r = -L x with x holding the Dirichlet values
    fine.apply(&x, &mut r);
    r.iter_mut().for_each(|v| *v = -*v);
    let mut mg_fine = fine;
    mg_fine.u.iter_mut().for_each(|v| *v = 0.0);
    mg_fine.f = vec![0.0; n];
    let mut h = Hierarchy::new(mg_fine, spacing, 16);
    let levels = h.depth();
    let max_abs = |v: &[f64]| v.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let mut res = max_abs(&r) * norm;
    if res <= opts.tol {
        return Ok((x, levels));
    }
    let mut p = h.precondition(&r).to_vec();
    let mut rho: f64 = r.iter().zip(&p).map(|(a, b)| a * b).sum();
    let mut it = 0;
    while it < opts.max_iterations {
        let pq = h.levels[0].apply(&p, &mut q);
        let alpha = rho / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        it += 1;
        res = max_abs(&r) * norm;
        history.push(res);
        log::debug!("pcg iteration {it}: residual {res:e}");
        if res <= opts.tol {
            break;
        }
        let z = h.precondition(&r);
        let rho_new: f64 = r.iter().zip(z).map(|(a, b)| a * b).sum();
        let beta = rho_new / rho;
        rho = rho_new;
        for (pi, zi) in p.iter_mut().zip(z) {
            *pi = zi + beta * *pi;
        }
    }
    // confirm with the true residual rather than the recurrence
    h.levels[0].apply(&x, &mut q);
    res = max_abs(&q) * norm;
    if let Some(last) = history.last_mut() {
        *last = res;
    }
    if res > opts.tol * 10.0 || it >= opts.max_iterations && res > opts.tol {
        return Err(Error::NotConverged { iterations: it, residual: res, tol: opts.tol });
    }
    Ok((x, levels))
}

/// Gradient of a sampled scalar field: central differences in the interior,
/// second-order one-sided differences on the faces.
pub fn gradient(field: &ScalarField3D) -> Result<VectorField3D> {
    let layout = field.layout;
    for (axis, &n) in layout.dims.iter().enumerate() {
        if n < 3 {
            return Err(Error::DegenerateExtent { axis, extent: n, min: 3 });
        }
    }
    let strides = [1, layout.dims[0], layout.dims[0] * layout.dims[1]];
    let v = &field.values;
    let mut components = [vec![0.0; v.len()], vec![0.0; v.len()], vec![0.0; v.len()]];
    for (n, _) in v.iter().enumerate() {
        let ijk = layout.ijk(n);
        for a in 0..3 {
            components[a][n] = axis_derivative(v, n, ijk[a], layout.dims[a], strides[a], layout.spacing[a]);
        }
    }
    Ok(VectorField3D { layout, components })
}

#[inline]
pub(crate) fn axis_derivative(v: &[f64], n: usize, i: usize, len: usize, stride: usize, h: f64) -> f64 {
    if i == 0 {
        (-3.0 * v[n] + 4.0 * v[n + stride] - v[n + 2 * stride]) / (2.0 * h)
    } else if i + 1 == len {
        (3.0 * v[n] - 4.0 * v[n - stride] + v[n - 2 * stride]) / (2.0 * h)
    } else {
        (v[n + stride] - v[n - stride]) / (2.0 * h)
    }
}

/// Reference multipole potential near a lattice site, in cylindrical
/// coordinates centred on the field null:
/// `V (r^2 - 2 z^2) / r1^2 - alpha V (2 z^3 - 3 z r^2) / r1^3`,
/// with z pointing away from the rf plate.
pub fn multipole_potential(r: f64, z: f64, v_rf: f64, r1: f64, alpha: f64) -> f64 {
    let r2 = r * r;
    v_rf * (r2 - 2.0 * z * z) / (r1 * r1) - alpha * v_rf * (2.0 * z * z * z - 3.0 * z * r2) / (r1 * r1 * r1)
}

/// Cartesian gradient of [`multipole_potential`] at offset `(x, y, z)` from the null.
pub fn multipole_gradient(p: [f64; 3], v_rf: f64, r1: f64, alpha: f64) -> [f64; 3] {
    let [x, y, z] = p;
    let r1_2 = r1 * r1;
    let r1_3 = r1_2 * r1;
    let radial = 2.0 * v_rf / r1_2 + 6.0 * alpha * v_rf * z / r1_3;
    let dz = -4.0 * v_rf * z / r1_2 - alpha * v_rf * (6.0 * z * z - 3.0 * (x * x + y * y)) / r1_3;
    [radial * x, radial * y, dz]
}

/// Hessian of the normalized multipole potential (rf amplitude 1).
pub fn multipole_hessian(p: [f64; 3], r1: f64, alpha: f64) -> [[f64; 3]; 3] {
    let [x, y, z] = p;
    let r1_2 = r1 * r1;
    let c = 6.0 * alpha / (r1_2 * r1);
    let xx = 2.0 / r1_2 + c * z;
    let zz = -4.0 / r1_2 - 2.0 * c * z;
    [[xx, 0.0, c * x], [0.0, xx, c * y], [c * x, c * y, zz]]
}
