use std::f64::consts::PI;
use std::path::PathBuf;

use clap::Args;
use latticetrap::analysis::{fit_site, AnalysisOptions};
use latticetrap::dynamics::{
    extract_secular_frequency, integrate_trajectory, secular_frequencies, write_trajectory_csv, ForceModel,
    MathieuForce, MultipoleForce, SolvedForce, Tickle, TrajectoryOptions,
};
use latticetrap::units::{angular_to_hz, hz_to_angular};
use serde::Serialize;

use super::load_solved;
use crate::config::{OutputFormat, RunConfig, TrajModel, TrajSection};
use crate::error::{CliError, Result};
use crate::output::OutputDir;

/// Spline half width, in grid nodes, around the site for the solved model.
const SPLINE_HALF_WIDTH: usize = 12;

#[derive(Debug, Args)]
pub struct TrajArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides [traj] model.
    #[arg(long, value_enum)]
    pub model: Option<TrajModel>,
    /// Duration in drive periods; overrides [traj].
    #[arg(long)]
    pub periods: Option<f64>,
    /// Directory holding the `solve` output (solved model only).
    #[arg(long)]
    pub field: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct AxisFrequency {
    axis: &'static str,
    omega_rad_s: Option<f64>,
    hz: Option<f64>,
    error: Option<String>,
}

#[derive(Serialize)]
struct TrajSummary {
    model: TrajModel,
    centre_m: [f64; 3],
    duration_s: f64,
    samples: usize,
    escaped_at_s: Option<f64>,
    frequencies: Vec<AxisFrequency>,
    /// Pure-quadrupole prediction (omega_r, omega_z), rad/s, when r1 is known.
    analytic_rad_s: Option<(f64, f64)>,
}

pub fn run(args: &TrajArgs) -> Result<()> {
    let cfg = RunConfig::load(&args.config)?;
    let ion = cfg.ion()?;
    let drive = cfg.drive()?;
    let default = TrajSection::default();
    let sec = cfg.traj.as_ref().unwrap_or(&default);
    let model_kind = args.model.unwrap_or(sec.model);
    let periods = args.periods.unwrap_or(sec.periods);
    let out_dir = cfg.output_dir(args.out.as_deref());
    let out = OutputDir::lock(&out_dir)?;

    let (model, centre, r1, z1): (Box<dyn ForceModel>, [f64; 3], Option<f64>, Option<f64>) = match model_kind {
        TrajModel::Multipole => {
            let t = cfg.trap()?;
            let m = MultipoleForce { centre: [0.0; 3], r1: t.r1, alpha: t.alpha, z1: t.z1, escape_radius: t.r1 };
            (Box::new(m), [0.0; 3], Some(t.r1), t.z1)
        }
        TrajModel::Mathieu => {
            let t = cfg.trap.as_ref().map(|_| cfg.trap()).transpose()?;
            let q = match (sec.mathieu_q, t) {
                (Some(q), _) => q,
                (None, Some(t)) => MultipoleForce::quadrupole(t.r1).axis_q(&ion, &drive)[0],
                (None, None) => return Err(CliError::config("mathieu model needs [traj] mathieu_q or a [trap] section")),
            };
            let a = sec.mathieu_a;
            let escape = t.map(|t| t.r1).unwrap_or(1e-3);
            let m = MathieuForce { a: [a, a, -2.0 * a], q: [q, q, -2.0 * q], escape_radius: escape };
            (Box::new(m), [0.0; 3], t.map(|t| t.r1), t.and_then(|t| t.z1))
        }
        TrajModel::Solved => {
            let field_dir = args.field.clone().unwrap_or_else(|| out_dir.clone());
            let (solved, _) = load_solved(&cfg, &field_dir)?;
            let site = sec.site.unwrap_or(solved.stack.center_site());
            let fit = fit_site(&solved, site, &AnalysisOptions::default())?;
            let m = SolvedForce::around(&solved.rf, fit.minimum_position, SPLINE_HALF_WIDTH, fit.z1)?;
            (Box::new(m), fit.minimum_position, Some(fit.r1), fit.z1)
        }
    };
    if drive.u_top != 0.0 && z1.is_none() {
        return Err(latticetrap::Error::MissingZ1.into());
    }

    let tickle = match (sec.tickle_volt, sec.tickle_hz) {
        (Some(amplitude), Some(f)) => {
            let z1 = z1.ok_or(latticetrap::Error::MissingZ1)?;
            Some(Tickle { amplitude, frequency: hz_to_angular(f), z1 })
        }
        (None, None) => None,
        _ => return Err(CliError::config("tickle needs both tickle_volt and tickle_hz")),
    };
    let x0 = [0, 1, 2].map(|i| centre[i] + sec.offset_um[i] * 1e-6);
    let duration = periods * 2.0 * PI / drive.omega;
    let opts = TrajectoryOptions { stride: sec.stride, tickle, ..Default::default() };
    let traj = integrate_trajectory(model.as_ref(), &ion, &drive, x0, sec.velocity_m_s, duration, &opts)?;

    let frequencies = ["x", "y", "z"]
        .iter()
        .enumerate()
        .map(|(i, &axis)| match extract_secular_frequency(&traj, i) {
            Ok(w) => AxisFrequency { axis, omega_rad_s: Some(w), hz: Some(angular_to_hz(w)), error: None },
            Err(e) => AxisFrequency { axis, omega_rad_s: None, hz: None, error: Some(e.to_string()) },
        })
        .collect();
    let summary = TrajSummary {
        model: model_kind,
        centre_m: centre,
        duration_s: duration,
        samples: traj.t.len(),
        escaped_at_s: traj.escaped_at,
        frequencies,
        analytic_rad_s: r1.map(|r1| secular_frequencies(&ion, &drive, r1)).transpose()?,
    };
    if cfg.wants(OutputFormat::Csv) {
        out.write_csv("traj.csv", |w| write_trajectory_csv(w, &traj))?;
    }
    if cfg.wants(OutputFormat::Json) {
        out.write_json("traj.json", &summary)?;
    }

    match traj.escaped_at {
        Some(t) => println!("ion escaped after {t:.3e} s"),
        None => println!("ion stayed bounded for {duration:.3e} s"),
    }
    for f in &summary.frequencies {
        match (f.hz, &f.error) {
            (Some(hz), _) => println!("{}: secular frequency {:.3} kHz", f.axis, hz * 1e-3),
            (_, Some(e)) => println!("{}: {e}", f.axis),
            _ => {}
        }
    }
    Ok(())
}
