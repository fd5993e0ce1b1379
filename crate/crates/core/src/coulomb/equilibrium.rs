use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{DisplacementMethod, DisplacementResult, IonPair};
use crate::dynamics::{DriveConfig, IonSpecies};
use crate::error::{Error, Result};
use crate::fieldsolver::{multipole_gradient, multipole_hessian};
use crate::interp::CubicSpline3D;
use crate::pseudopot::{pseudo_prefactor, PseudoField};
use crate::units::{coulomb_constant, ELEMENTARY_CHARGE};

pub const MAX_IONS: usize = 4;

/// What holds each ion near its well.
#[derive(Clone, Copy, Debug)]
pub enum Confinement<'a> {
    /// Each ion feels only the cubic multipole well centred on its own site.
    /// `z1` is needed when the drive has a top-plate bias.
    Analytic { r1: f64, alpha: f64, z1: Option<f64> },
    /// Solved pseudopotential (eV) computed for `reference`, rescaled by
    /// `Q^2 / m` for each ion. The field must not contain a top-plate term.
    Solved { psi: &'a PseudoField, reference: IonSpecies },
}

/// Inter-ion force law.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum CoulombModel {
    /// Free-space force divided by `s`.
    Screened { s: f64 },
    /// Free-space force plus the images of every ion (including itself) in
    /// a grounded plane at `plane_z`.
    ImageCharges { plane_z: f64 },
    Off,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EquilibriumOptions {
    pub max_iterations: usize,
    /// Residual force over the confining force scale.
    pub tol: f64,
}

impl Default for EquilibriumOptions {
    fn default() -> Self {
        Self { max_iterations: 100, tol: 1e-6 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResult {
    pub positions: Vec<[f64; 3]>,
    /// Positions of each ion alone in its well.
    pub isolated: Vec<[f64; 3]>,
    pub iterations: usize,
    /// Final max force over the confining force scale.
    pub residual: f64,
}

enum Trap {
    Analytic { r1: f64, alpha: f64, bias: f64 },
    Solved { spline: CubicSpline3D, lo: [f64; 3], hi: [f64; 3] },
}

struct System<'a> {
    ions: &'a [IonSpecies],
    wells: &'a [[f64; 3]],
    trap: Trap,
    /// J per (1/m^2) of |grad phi|^2, or J per eV of the reference field, per ion
    k: Vec<f64>,
    coulomb: CoulombModel,
    fd_step: f64,
}

impl System<'_> {
    fn confining_force(&self, i: usize, p: [f64; 3]) -> Result<[f64; 3]> {
        match &self.trap {
            Trap::Analytic { r1, alpha, bias } => {
                let w = self.wells[i];
                let rel = [p[0] - w[0], p[1] - w[1], p[2] - w[2]];
                let g = multipole_gradient(rel, 1.0, *r1, *alpha);
                let h = multipole_hessian(rel, *r1, *alpha);
                let mut f = [0.0; 3];
                for a in 0..3 {
                    f[a] = -2.0 * self.k[i] * (h[a][0] * g[0] + h[a][1] * g[1] + h[a][2] * g[2]);
                }
                f[2] -= self.ions[i].charge * bias;
                Ok(f)
            }
            Trap::Solved { spline, lo, hi } => {
                if (0..3).any(|a| !(p[a] > lo[a] && p[a] < hi[a])) {
                    return Err(Error::EquilibriumNotConverged { iterations: 0, residual: f64::INFINITY });
                }
                Ok(spline.gradient(p).map(|g| -self.k[i] * g))
            }
        }
    }

    fn forces(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.ions.len();
        let pos = |i: usize| [x[3 * i], x[3 * i + 1], x[3 * i + 2]];
        let mut out = DVector::zeros(3 * n);
        let kc = coulomb_constant();
        for i in 0..n {
            let pi = pos(i);
            let f = self.confining_force(i, pi)?;
            for a in 0..3 {
                out[3 * i + a] += f[a];
            }
            let qi = self.ions[i].charge;
            let mut add = |src: [f64; 3], q: f64, s: f64| {
                let r = [pi[0] - src[0], pi[1] - src[1], pi[2] - src[2]];
                let d2 = r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
                let c = kc * qi * q / (s * d2 * d2.sqrt());
                for a in 0..3 {
                    out[3 * i + a] += c * r[a];
                }
            };
            match self.coulomb {
                CoulombModel::Off => {}
                CoulombModel::Screened { s } => {
                    for j in (0..n).filter(|&j| j != i) {
                        add(pos(j), self.ions[j].charge, s);
                    }
                }
                CoulombModel::ImageCharges { plane_z } => {
                    for j in 0..n {
                        let pj = pos(j);
                        if j != i {
                            add(pj, self.ions[j].charge, 1.0);
                        }
                        add([pj[0], pj[1], 2.0 * plane_z - pj[2]], -self.ions[j].charge, 1.0);
                    }
                }
            }
        }
        Ok(out)
    }

    fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let n = x.len();
        let mut j = DMatrix::zeros(n, n);
        for c in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[c] += self.fd_step;
            xm[c] -= self.fd_step;
            let col = (self.forces(&xp)? - self.forces(&xm)?) / (2.0 * self.fd_step);
            j.set_column(c, &col);
        }
        Ok(j)
    }

    fn solve(&self, start: &[[f64; 3]], opts: &EquilibriumOptions, length: f64) -> Result<(Vec<[f64; 3]>, usize, f64)> {
        let mut x = DVector::from_iterator(start.len() * 3, start.iter().flatten().copied());
        let j0 = self.jacobian(&x)?;
        // confining force scale: stiffness times the length scale
        let stiffness = (0..x.len()).map(|i| j0[(i, i)].abs()).fold(0.0, f64::max);
        let scale = stiffness * length;
        let mut f = self.forces(&x)?;
        if f.amax() == 0.0 {
            return Ok((start.to_vec(), 0, 0.0));
        }
        let mut iterations = 0;
        loop {
            let res = f.amax() / scale;
            if iterations >= opts.max_iterations {
                return Err(Error::EquilibriumNotConverged { iterations, residual: res });
            }
            iterations += 1;
            let jac = self.jacobian(&x)?;
            let Some(step) = jac.lu().solve(&(-&f)) else {
                return Err(Error::EquilibriumNotConverged { iterations, residual: res });
            };
            let mut t = 1.0;
            let (xn, fn_) = loop {
                let xn = &x + &step * t;
                match self.forces(&xn) {
                    Ok(fnew) if fnew.norm() < f.norm() || t < 1e-4 => break (xn, fnew),
                    _ if t < 1e-4 => return Err(Error::EquilibriumNotConverged { iterations, residual: res }),
                    _ => t *= 0.5,
                }
            };
            let moved = (&step * t).amax();
            x = xn;
            f = fn_;
            if !x.iter().all(|v| v.is_finite()) {
                return Err(Error::EquilibriumNotConverged { iterations, residual: f64::NAN });
            }
            let res = f.amax() / scale;
            if res < opts.tol && moved < 1e-9 * length {
                let pos = (0..start.len()).map(|i| [x[3 * i], x[3 * i + 1], x[3 * i + 2]]).collect();
                return Ok((pos, iterations, res));
            }
        }
    }
}

fn build<'a>(
    ions: &'a [IonSpecies],
    wells: &'a [[f64; 3]],
    confinement: &Confinement,
    coulomb: CoulombModel,
    drive: &DriveConfig,
) -> Result<System<'a>> {
    drive.validated()?;
    for ion in ions {
        ion.validated()?;
    }
    let (trap, k, fd_step) = match *confinement {
        Confinement::Analytic { r1, alpha, z1 } => {
            if !(r1 > 0.0 && r1.is_finite()) {
                return Err(Error::InvalidParameter(format!("r1 must be positive, got {r1}")));
            }
            let bias = if drive.u_top != 0.0 {
                drive.u_top / z1.ok_or(Error::MissingZ1)?
            } else {
                0.0
            };
            let k = ions.iter().map(|ion| pseudo_prefactor(ion, drive)).collect();
            (Trap::Analytic { r1, alpha, bias }, k, 1e-6 * r1)
        }
        Confinement::Solved { psi, reference } => {
            let l = psi.field.layout;
            let h = l.spacing[0].min(l.spacing[1]).min(l.spacing[2]);
            let margin = 10;
            let mut lo = [usize::MAX; 3];
            let mut hi = [0; 3];
            for w in wells {
                let c = l.nearest(*w);
                for a in 0..3 {
                    lo[a] = lo[a].min(c[a].saturating_sub(margin));
                    hi[a] = hi[a].max((c[a] + margin).min(l.dims[a] - 1));
                }
            }
            let crop = psi.field.crop(lo, hi);
            let cl = crop.layout;
            let a = cl.position(0, 0, 0);
            let b = cl.position(cl.dims[0] - 1, cl.dims[1] - 1, cl.dims[2] - 1);
            let spline = CubicSpline3D::new(&crop)?;
            let ref_ratio = reference.charge * reference.charge / reference.mass;
            let k = ions
                .iter()
                .map(|ion| ELEMENTARY_CHARGE * (ion.charge * ion.charge / ion.mass) / ref_ratio)
                .collect();
            let trap = Trap::Solved { spline, lo: [0, 1, 2].map(|i| a[i] + cl.spacing[i]), hi: [0, 1, 2].map(|i| b[i] - cl.spacing[i]) };
            (trap, k, 1e-4 * h)
        }
    };
    Ok(System { ions, wells, trap, k, coulomb, fd_step })
}

/// Equilibrium of up to four ions, ion `i` assigned to well `wells[i]`.
pub fn n_ion_equilibrium(
    ions: &[IonSpecies],
    wells: &[[f64; 3]],
    confinement: &Confinement,
    coulomb: CoulombModel,
    drive: &DriveConfig,
    opts: &EquilibriumOptions,
) -> Result<EquilibriumResult> {
    let n = ions.len();
    if n == 0 || n > MAX_IONS || wells.len() != n {
        return Err(Error::InvalidParameter(format!("need 1..={MAX_IONS} ions with one well each, got {n} ions and {} wells", wells.len())));
    }
    let mut length = f64::INFINITY;
    for i in 0..n {
        for j in 0..i {
            length = length.min(dist(wells[i], wells[j]));
        }
    }
    if let Confinement::Analytic { r1, .. } = confinement {
        length = length.min(*r1);
    }
    if length == f64::INFINITY {
        return Err(Error::InvalidParameter("cannot infer a length scale".into()));
    }
    let alone = build(ions, wells, confinement, CoulombModel::Off, drive)?;
    let (isolated, _, _) = alone.solve(wells, opts, length)?;
    let sys = build(ions, wells, confinement, coulomb, drive)?;
    let (positions, iterations, residual) = sys.solve(&isolated, opts, length)?;
    for i in 0..n {
        let nearest = (0..n).min_by(|&a, &b| dist(positions[i], wells[a]).total_cmp(&dist(positions[i], wells[b]))).unwrap();
        if nearest != i {
            return Err(Error::Merge(i, nearest));
        }
    }
    Ok(EquilibriumResult { positions, isolated, iterations, residual })
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Which inter-ion force the pair solver uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairForce {
    /// Divide by the pair's scalar screening factor.
    #[default]
    Screened,
    /// Exact images in the ground plane `pair.height` below the wells.
    ImageCharges,
    Off,
}

/// Pair equilibrium. Wells default to `(-d/2, 0, 0)` and `(d/2, 0, 0)`,
/// which suits analytic confinement; solved fields need explicit wells.
pub fn two_ion_equilibrium(
    pair: &IonPair,
    confinement: &Confinement,
    drive: &DriveConfig,
    wells: Option<[[f64; 3]; 2]>,
    force: PairForce,
    opts: &EquilibriumOptions,
) -> Result<DisplacementResult> {
    let wells = match (wells, confinement) {
        (Some(w), _) => w,
        (None, Confinement::Analytic { .. }) => [[-0.5 * pair.d, 0.0, 0.0], [0.5 * pair.d, 0.0, 0.0]],
        (None, Confinement::Solved { .. }) => {
            return Err(Error::InvalidParameter("solved confinement needs explicit well positions".into()))
        }
    };
    let coulomb = match force {
        PairForce::Screened => CoulombModel::Screened { s: pair.s },
        PairForce::ImageCharges => CoulombModel::ImageCharges { plane_z: 0.5 * (wells[0][2] + wells[1][2]) - pair.height },
        PairForce::Off => CoulombModel::Off,
    };
    let ions = [pair.ion1, pair.ion2];
    let r = n_ion_equilibrium(&ions, &wells, confinement, coulomb, drive, opts)?;
    let sep = [0, 1, 2].map(|a| wells[1][a] - wells[0][a]);
    let len = dist(wells[0], wells[1]);
    let u = sep.map(|c| c / len);
    let along = |i: usize| (0..3).map(|a| (r.positions[i][a] - r.isolated[i][a]) * u[a]).sum::<f64>();
    Ok(DisplacementResult { x1: -along(0), x2: along(1), method: DisplacementMethod::Equilibrium })
}
