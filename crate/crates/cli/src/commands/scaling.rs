use std::path::PathBuf;

use clap::Args;
use latticetrap::scaling::{log_log_slope, scaling_scan, write_scan_csv, ScalingBase, ScanRow};
use serde::Serialize;

use crate::config::{sweep, OutputFormat, RunConfig};
use crate::error::Result;
use crate::output::OutputDir;

#[derive(Debug, Args)]
pub struct ScalingArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct ScalingReport<'a> {
    base: ScalingBase,
    j_slope: f64,
    rows: &'a [ScanRow],
}

pub fn run(args: &ScalingArgs) -> Result<()> {
    let cfg = RunConfig::load(&args.config)?;
    let stack = cfg.geometry()?.to_stack()?;
    let sec = cfg.scaling()?;
    let coupling = cfg.coupling()?;
    let base = ScalingBase { d: stack.hole_pitch, r1: cfg.trap()?.r1, depth: sec.base_depth_ev, drive: cfg.drive()?, ion: cfg.ion()? };
    let d_values = sweep(sec.d_min_m, sec.d_max_m, sec.steps, true)?;
    let out = OutputDir::lock(&cfg.output_dir(args.out.as_deref()))?;

    let rows = scaling_scan(&base, &d_values, &sec.constraint(), coupling.force_n, coupling.wavelength_nm * 1e-9, sec.mode())?;
    let d: Vec<f64> = rows.iter().map(|r| r.d).collect();
    let j: Vec<f64> = rows.iter().map(|r| r.j_over_h).collect();
    let slope = if rows.len() > 1 { log_log_slope(&d, &j) } else { f64::NAN };

    if cfg.wants(OutputFormat::Csv) {
        out.write_csv("scaling.csv", |w| write_scan_csv(w, &rows))?;
    }
    if cfg.wants(OutputFormat::Json) {
        out.write_json("scaling.json", &ScalingReport { base, j_slope: slope, rows: &rows })?;
    }
    println!("base q = {:.4}; log-log slope of J against d = {slope:.6}", base.q());
    for r in &rows {
        println!(
            "d = {:.3e} m  Omega/2pi = {:.4e} Hz  J/h = {:.4e} Hz  eta = {:.3}  {}",
            r.d,
            r.omega_drive / (2.0 * std::f64::consts::PI),
            r.j_over_h,
            r.eta,
            if r.feasible { "feasible" } else { "infeasible" }
        );
    }
    Ok(())
}
