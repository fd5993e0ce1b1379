//! End-to-end site analysis: rasterize and solve a stack, fit each site, and
//! report depth and both secular-frequency routes.

use serde::{Deserialize, Serialize};

use crate::dynamics::{mathieu_parameters, omega_z_biased_with, secular_frequencies, BiasCoefficient, DriveConfig, IonSpecies};
use crate::error::Result;
use crate::fieldsolver::{solve_laplace_report, SolveReport, SolverOptions};
use crate::geometry::{rasterize, top_plate_potentials, ElectrodeStack, RasterOptions};
use crate::grid::ScalarField3D;
use crate::pseudopot::{
    curvature_frequencies, find_site_minimum, fit_multipole_with, fit_z1, pseudopotential_from_potential, trap_depth,
    CurvatureFrequencies, FitOptions, PseudoField, TopBias, TrapSite,
};

/// Normalized potentials of one stack: rf at 1, and the unit top-plate
/// response when the stack has a top plate.
#[derive(Clone, Debug)]
pub struct SolvedStack {
    pub stack: ElectrodeStack,
    pub raster: RasterOptions,
    pub rf: ScalarField3D,
    pub top: Option<ScalarField3D>,
    /// Electrode nodes.
    pub blocked: Vec<bool>,
    pub rf_report: SolveReport,
    pub top_report: Option<SolveReport>,
    pub geometry_hash: String,
}

pub fn solve_stack(stack: &ElectrodeStack, raster: &RasterOptions, solver: &SolverOptions) -> Result<SolvedStack> {
    let grid = rasterize(stack, raster)?;
    let (rf, rf_report) = solve_laplace_report(&grid, solver)?;
    log::info!("rf solve: {} iterations, residual {:e}", rf.meta.iterations, rf.meta.residual);
    let (top, top_report) = if stack.top_plate_height.is_some() {
        let (f, r) = solve_laplace_report(&grid.with_potentials(top_plate_potentials())?, solver)?;
        log::info!("top-plate solve: {} iterations, residual {:e}", f.meta.iterations, f.meta.residual);
        (Some(f), Some(r))
    } else {
        (None, None)
    };
    Ok(SolvedStack {
        stack: stack.clone(),
        raster: *raster,
        blocked: grid.dirichlet_mask(),
        rf,
        top,
        rf_report,
        top_report,
        geometry_hash: stack.content_hash(raster.spacing, raster.margin),
    })
}

/// Everything reported for one site.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteReport {
    pub site: TrapSite,
    /// Pseudopotential minimum (m); differs from the field null when biased.
    pub psi_minimum: [f64; 3],
    pub mathieu_a: f64,
    pub mathieu_q: f64,
    /// From the fitted r1 (rad/s).
    pub analytic_omega_r: f64,
    pub analytic_omega_z: f64,
    /// Biased axial frequency from the fitted constants, when U != 0.
    pub biased_omega_z: Option<f64>,
    pub curvature: CurvatureFrequencies,
}

#[derive(Clone, Debug, Default)]
pub struct AnalysisOptions {
    pub fit: FitOptions,
    /// Half window of the straight-line z1 fit; defaults to a quarter pitch.
    pub z1_window: Option<f64>,
    pub bias_coefficient: BiasCoefficient,
}

/// Fit the multipole constants of `site`, plus z1 when a top-plate solve exists.
pub fn fit_site(solved: &SolvedStack, site: (usize, usize), opts: &AnalysisOptions) -> Result<TrapSite> {
    let mut fit = fit_multipole_with(&solved.rf, &solved.stack, site, &opts.fit)?;
    if let Some(top) = &solved.top {
        let window = opts.z1_window.unwrap_or(0.25 * solved.stack.hole_pitch);
        let p = fit.minimum_position;
        fit.z1 = Some(fit_z1(top, [p[0], p[1]], p[2], window)?);
    }
    Ok(fit)
}

/// Pseudopotential (eV) over the whole grid with electrodes masked. The
/// linear bias term uses `reference` for its z1 and zero level.
pub fn pseudo_field(
    solved: &SolvedStack,
    ion: &IonSpecies,
    drive: &DriveConfig,
    reference: Option<&TrapSite>,
) -> Result<PseudoField> {
    let bias = reference.and_then(|s| s.z1.map(|z1| TopBias { z_ref: s.minimum_position[2], z1 }));
    pseudopotential_from_potential(&solved.rf, ion, drive, bias)?.with_blocked(solved.blocked.clone())
}

/// Full report for `sites`. One pseudopotential grid serves every site.
pub fn analyze_sites(
    solved: &SolvedStack,
    sites: &[(usize, usize)],
    ion: &IonSpecies,
    drive: &DriveConfig,
    opts: &AnalysisOptions,
) -> Result<Vec<SiteReport>> {
    analyze_each(solved, sites, ion, drive, opts)?.into_iter().collect()
}

/// Like [`analyze_sites`] but a failing site does not stop the others. The
/// bias term takes its reference from the first site that fits.
pub fn analyze_each(
    solved: &SolvedStack,
    sites: &[(usize, usize)],
    ion: &IonSpecies,
    drive: &DriveConfig,
    opts: &AnalysisOptions,
) -> Result<Vec<Result<SiteReport>>> {
    ion.validated()?;
    drive.validated()?;
    let fits: Vec<Result<TrapSite>> = sites.iter().map(|&s| fit_site(solved, s, opts)).collect();
    if fits.is_empty() {
        return Ok(Vec::new());
    }
    let first = fits.iter().find_map(|f| f.as_ref().ok());
    let psi = pseudo_field(solved, ion, drive, first)?;
    Ok(fits.into_iter().map(|fit| fit.and_then(|fit| site_report(solved, &psi, fit, ion, drive, opts))).collect())
}

fn site_report(
    solved: &SolvedStack,
    psi: &PseudoField,
    mut fit: TrapSite,
    ion: &IonSpecies,
    drive: &DriveConfig,
    opts: &AnalysisOptions,
) -> Result<SiteReport> {
    let minimum = find_site_minimum(psi, &solved.stack, fit.site)?;
    fit.depth = Some(trap_depth(psi, minimum)?);
    let curvature = curvature_frequencies(&solved.rf, minimum, ion, drive, fit.z1)?;
    let (mathieu_a, mathieu_q) = mathieu_parameters(ion, drive, fit.r1)?;
    let (analytic_omega_r, analytic_omega_z) = secular_frequencies(ion, drive, fit.r1)?;
    let biased_omega_z = match fit.z1 {
        Some(z1) if drive.u_top != 0.0 => Some(omega_z_biased_with(ion, drive, fit.r1, fit.alpha, z1, opts.bias_coefficient)?),
        _ => None,
    };
    Ok(SiteReport {
        psi_minimum: curvature.position,
        site: fit,
        mathieu_a,
        mathieu_q,
        analytic_omega_r,
        analytic_omega_z,
        biased_omega_z,
        curvature,
    })
}

pub const SITE_REPORT_CSV_HEADER: &str = "site_i,site_j,x0_m,y0_m,z0_m,r1_m,r1_err_m,alpha,alpha_err,z1_m,depth_eV,fit_residual,\
a,q,omega_r_analytic,omega_z_analytic,omega_r_curvature,omega_z_curvature,omega_z_biased";

impl SiteReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{}",
            self.site.csv_row(),
            self.mathieu_a,
            self.mathieu_q,
            self.analytic_omega_r,
            self.analytic_omega_z,
            self.curvature.omega_r,
            self.curvature.omega_z,
            self.biased_omega_z.map(|w| format!("{w:e}")).unwrap_or_default()
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::mm;

    fn small_stack() -> ElectrodeStack {
        crate::geometry::build_lattice_stack(ElectrodeStack {
            lattice_dims: (3, 3),
            top_plate_height: Some(mm(6.0)),
            ..ElectrodeStack::reference()
        })
        .unwrap()
    }

    #[test]
    fn small_lattice_pipeline() {
        let stack = small_stack();
        let raster = RasterOptions { margin: 3.0 * stack.hole_pitch, ..RasterOptions::new(&stack, stack.hole_diameter / 8.0) };
        let solved = solve_stack(&stack, &raster, &SolverOptions::default()).unwrap();
        assert!(solved.top.is_some());
        let ion = IonSpecies::strontium88();
        let drive = DriveConfig::reference();
        let rep = analyze_sites(&solved, &[stack.center_site()], &ion, &drive, &AnalysisOptions::default()).unwrap();
        let r = &rep[0];
        assert!(r.site.r1 > 0.0 && r.site.z1.unwrap() > 0.0);
        assert!(r.site.depth.unwrap() > 0.0);
        assert!(r.analytic_omega_z == 2.0 * r.analytic_omega_r);
        let ratio = r.curvature.omega_z / r.curvature.omega_r;
        assert!((ratio - 2.0).abs() < 0.1, "{ratio}");
        // centre site sits on its hole axis
        let c = stack.site_center(stack.center_site()).unwrap();
        assert!((r.psi_minimum[0] - c[0]).abs() < raster.spacing);
        assert!((r.psi_minimum[1] - c[1]).abs() < raster.spacing);
        assert_eq!(r.csv_row().split(',').count(), SITE_REPORT_CSV_HEADER.split(',').count());
    }
}
