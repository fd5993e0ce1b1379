//! Ponderomotive pseudopotential, site minima, trap depth and multipole fits.
//!
//! Energies in this module are in eV. Potentials passed in are normalized so
//! the rf electrode sits at 1; the physical amplitude comes from
//! [`DriveConfig::v_rf`].

mod curvature;
mod depth;
mod fit;
mod minimum;

pub use curvature::{curvature_frequencies, CurvatureFrequencies, SiteModel};
pub use depth::trap_depth;
pub use fit::{fit_multipole, fit_multipole_with, fit_z1, locate_null, FitOptions, TrapSite, TRAPSITE_CSV_HEADER};
pub use minimum::{find_minimum, find_site_minimum, SiteSearch};

use crate::dynamics::{DriveConfig, IonSpecies};
use crate::error::{Error, Result};
use crate::fieldsolver::axis_derivative;
use crate::grid::{ScalarField3D, VectorField3D};
use crate::units::ELEMENTARY_CHARGE;

/// Pseudopotential samples (eV) plus an optional mask of nodes inside metal.
#[derive(Clone, Debug, PartialEq)]
pub struct PseudoField {
    pub field: ScalarField3D,
    /// Empty when no node is blocked.
    pub blocked: Vec<bool>,
}

impl PseudoField {
    pub fn new(field: ScalarField3D) -> Self {
        Self { field, blocked: Vec::new() }
    }

    /// Mark electrode nodes; they are excluded from minima and flood fills.
    pub fn with_blocked(mut self, blocked: Vec<bool>) -> Result<Self> {
        if blocked.len() != self.field.values.len() {
            return Err(Error::InvalidParameter(format!(
                "mask has {} entries for {} nodes",
                blocked.len(),
                self.field.values.len()
            )));
        }
        self.blocked = blocked;
        Ok(self)
    }

    #[inline]
    pub fn is_blocked(&self, n: usize) -> bool {
        !self.blocked.is_empty() && self.blocked[n]
    }

    pub fn values(&self) -> &[f64] {
        &self.field.values
    }
}

/// Linear top-plate term: the bias `u_top` adds `Q U (z - z_ref) / z1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TopBias {
    pub z_ref: f64,
    pub z1: f64,
}

/// Joules per normalized |grad phi|^2 (1/m^2).
pub fn pseudo_prefactor(ion: &IonSpecies, drive: &DriveConfig) -> f64 {
    let qv = ion.charge * drive.v_rf;
    qv * qv / (4.0 * ion.mass * drive.omega * drive.omega)
}

fn check_inputs(ion: &IonSpecies, drive: &DriveConfig) -> Result<()> {
    ion.validated()?;
    drive.validated()?;
    Ok(())
}

fn bias_term(drive: &DriveConfig, ion: &IonSpecies, bias: Option<TopBias>) -> Result<Option<(f64, f64)>> {
    if drive.u_top == 0.0 {
        return Ok(None);
    }
    let b = bias.ok_or(Error::MissingZ1)?;
    if !(b.z1 > 0.0 && b.z1.is_finite()) {
        return Err(Error::InvalidParameter(format!("z1 must be positive, got {}", b.z1)));
    }
    Ok(Some((ion.charge * drive.u_top / b.z1 / ELEMENTARY_CHARGE, b.z_ref)))
}

/// Pseudopotential from the gradient of the normalized rf potential.
/// Fails with [`Error::MissingZ1`] when a top-plate bias is set.
pub fn pseudopotential(grad: &VectorField3D, ion: &IonSpecies, drive: &DriveConfig) -> Result<PseudoField> {
    pseudopotential_biased(grad, ion, drive, None)
}

/// Pseudopotential including the linear top-plate term when `u_top != 0`.
pub fn pseudopotential_biased(
    grad: &VectorField3D,
    ion: &IonSpecies,
    drive: &DriveConfig,
    bias: Option<TopBias>,
) -> Result<PseudoField> {
    check_inputs(ion, drive)?;
    let k = pseudo_prefactor(ion, drive) / ELEMENTARY_CHARGE;
    let lin = bias_term(drive, ion, bias)?;
    let layout = grad.layout;
    let values = (0..layout.len())
        .map(|n| {
            let mut v = k * grad.norm_sq(n);
            if let Some((slope, z_ref)) = lin {
                let z = layout.coord(2, n / (layout.dims[0] * layout.dims[1]));
                v += slope * (z - z_ref);
            }
            v
        })
        .collect();
    Ok(PseudoField::new(ScalarField3D::new(layout, values)?))
}

/// Same as [`pseudopotential_biased`] but differentiates the potential on the
/// fly, without holding a full vector field in memory.
pub fn pseudopotential_from_potential(
    phi: &ScalarField3D,
    ion: &IonSpecies,
    drive: &DriveConfig,
    bias: Option<TopBias>,
) -> Result<PseudoField> {
    check_inputs(ion, drive)?;
    let layout = phi.layout;
    for (axis, &n) in layout.dims.iter().enumerate() {
        if n < 3 {
            return Err(Error::DegenerateExtent { axis, extent: n, min: 3 });
        }
    }
    let k = pseudo_prefactor(ion, drive) / ELEMENTARY_CHARGE;
    let lin = bias_term(drive, ion, bias)?;
    let [nx, ny, nz] = layout.dims;
    let strides = [1, nx, nx * ny];
    let v = &phi.values;
    let mut out = Vec::with_capacity(layout.len());
    for kz in 0..nz {
        let z = layout.coord(2, kz);
        let dc = lin.map(|(s, zr)| s * (z - zr)).unwrap_or(0.0);
        for j in 0..ny {
            for i in 0..nx {
                let n = i + nx * (j + ny * kz);
                let gx = axis_derivative(v, n, i, nx, strides[0], layout.spacing[0]);
                let gy = axis_derivative(v, n, j, ny, strides[1], layout.spacing[1]);
                let gz = axis_derivative(v, n, kz, nz, strides[2], layout.spacing[2]);
                out.push(k * (gx * gx + gy * gy + gz * gz) + dc);
            }
        }
    }
    Ok(PseudoField::new(ScalarField3D::new(layout, out)?))
}

/// Closed-form pseudopotential (eV) of the multipole model around a null,
/// `Q^2 V^2 / (m Omega^2 r1^4) [r^2 (1 + 3 alpha z / r1)^2
///  + (2 z + 3 alpha z^2 / r1 - 3 alpha r^2 / (2 r1))^2]`.
pub fn pseudopotential_analytic(
    r: f64,
    z: f64,
    ion: &IonSpecies,
    drive: &DriveConfig,
    r1: f64,
    alpha: f64,
) -> f64 {
    analytic_joules(r, z, ion, drive, r1, alpha) / ELEMENTARY_CHARGE
}

pub(crate) fn analytic_joules(r: f64, z: f64, ion: &IonSpecies, drive: &DriveConfig, r1: f64, alpha: f64) -> f64 {
    let qv = ion.charge * drive.v_rf;
    let pre = qv * qv / (ion.mass * drive.omega * drive.omega * r1.powi(4));
    let radial = r * (1.0 + 3.0 * alpha * z / r1);
    let axial = 2.0 * z + 3.0 * alpha * z * z / r1 - 1.5 * alpha * r * r / r1;
    pre * (radial * radial + axial * axial)
}
