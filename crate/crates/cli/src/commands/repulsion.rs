use std::path::PathBuf;

use clap::Args;
use latticetrap::coulomb::{
    two_ion_displacement_closed, two_ion_equilibrium, write_repulsion_csv, Confinement, DisplacementResult,
    EquilibriumOptions, IonPair,
};
use latticetrap::dynamics::DriveConfig;
use latticetrap::units::hz_to_angular;
use latticetrap::Error;
use serde::Serialize;

use crate::config::{sweep, OutputFormat, RepulsionMethod, RunConfig};
use crate::error::{CliError, Result};
use crate::output::OutputDir;

#[derive(Debug, Args)]
pub struct RepulsionArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct RepulsionReport {
    pair: IonPair,
    r1_m: f64,
    rows: Vec<(f64, DisplacementResult)>,
    skipped: Vec<String>,
}

/// Numerical failures at one sweep point are logged and skipped so the rest
/// of the curve still gets written; anything else aborts.
fn point(r: latticetrap::Result<DisplacementResult>, omega: f64, skipped: &mut Vec<String>) -> Result<Option<DisplacementResult>> {
    match r {
        Ok(d) => Ok(Some(d)),
        Err(e @ (Error::Regime { .. } | Error::Merge(..) | Error::EquilibriumNotConverged { .. } | Error::RankDeficient(_))) => {
            let msg = format!("Omega = {omega:e} rad/s: {e}");
            log::warn!("{msg}");
            skipped.push(msg);
            Ok(None)
        }
        Err(e) => Err(CliError::from(e)),
    }
}

pub fn run(args: &RepulsionArgs) -> Result<()> {
    let cfg = RunConfig::load(&args.config)?;
    let ion1 = cfg.ion()?;
    let drive = cfg.drive()?;
    let trap = cfg.trap()?;
    let setup = cfg.repulsion_setup()?;
    let sec = cfg.repulsion.as_ref().ok_or_else(|| CliError::config("missing [repulsion] section"))?;
    let ion2 = cfg.second_ion(&ion1)?;
    let pair = IonPair::new(ion1, ion2, setup.d, setup.height, setup.screening)?;
    let omegas = sweep(sec.omega_hz_min, sec.omega_hz_max, sec.omega_steps, false)?;
    let out = OutputDir::lock(&cfg.output_dir(args.out.as_deref()))?;

    let confinement = Confinement::Analytic { r1: trap.r1, alpha: trap.alpha, z1: trap.z1 };
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for f in omegas {
        let omega = hz_to_angular(f);
        let d = DriveConfig { omega, ..drive };
        if sec.method != RepulsionMethod::Equilibrium {
            if let Some(r) = point(two_ion_displacement_closed(&pair, &d, trap.r1), omega, &mut skipped)? {
                rows.push((omega, r));
            }
        }
        if sec.method != RepulsionMethod::ClosedForm {
            let r = two_ion_equilibrium(&pair, &confinement, &d, None, sec.force, &EquilibriumOptions::default());
            if let Some(r) = point(r, omega, &mut skipped)? {
                rows.push((omega, r));
            }
        }
    }

    if cfg.wants(OutputFormat::Csv) {
        out.write_csv("repulsion.csv", |w| write_repulsion_csv(w, &rows, pair.s))?;
    }
    if cfg.wants(OutputFormat::Json) {
        out.write_json("repulsion.json", &RepulsionReport { pair, r1_m: trap.r1, rows: rows.clone(), skipped })?;
    }
    println!("screening factor s = {:.4}", pair.s);
    for (omega, r) in &rows {
        println!(
            "Omega/2pi = {:8.1} Hz  x1 = {:.4e} m  x2 = {:.4e} m  ({:?})",
            omega / (2.0 * std::f64::consts::PI),
            r.x1,
            r.x2,
            r.method
        );
    }
    Ok(())
}
