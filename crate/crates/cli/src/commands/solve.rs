use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use latticetrap::analysis::solve_stack;
use latticetrap::fieldsolver::{write_field, write_vtk, FieldHeader};
use latticetrap::pseudopot::locate_null;

use super::{raster_options, solver_options, SiteNull, SolveSummary, RF_FIELD, SOLVE_SUMMARY, TOP_FIELD};
use crate::config::{OutputFormat, RunConfig};
use crate::error::Result;
use crate::output::OutputDir;

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Grid spacing in metres; overrides [solver].
    #[arg(long)]
    pub spacing: Option<f64>,
    /// Output directory; overrides [output].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write legacy VTK files.
    #[arg(long)]
    pub vtk: bool,
}

pub fn run(args: &SolveArgs) -> Result<()> {
    let cfg = RunConfig::load(&args.config)?;
    let stack = cfg.geometry()?.to_stack()?;
    let raster = raster_options(&cfg, &stack, args.spacing)?;
    let solver = solver_options(&cfg);
    let out = OutputDir::lock(&cfg.output_dir(args.out.as_deref()))?;

    let start = Instant::now();
    let solved = solve_stack(&stack, &raster, &solver)?;
    let elapsed = start.elapsed().as_secs_f64();

    let header = FieldHeader::for_field(&solved.rf, "rf_potential", "V/V").with_hash(&solved.geometry_hash);
    write_field(out.path(RF_FIELD), &solved.rf, &header)?;
    if let Some(top) = &solved.top {
        let header = FieldHeader::for_field(top, "top_plate_potential", "V/V").with_hash(&solved.geometry_hash);
        write_field(out.path(TOP_FIELD), top, &header)?;
    }
    if args.vtk || cfg.wants(OutputFormat::Vtk) {
        write_vtk(out.path("rf.vtk"), &solved.rf, "rf_potential")?;
        if let Some(top) = &solved.top {
            write_vtk(out.path("top.vtk"), top, "top_plate_potential")?;
        }
    }

    let nulls: Vec<SiteNull> = stack
        .sites()
        .map(|site| {
            let null_m = match locate_null(&solved.rf, &stack, site) {
                Ok(p) => Some(p),
                Err(e) => {
                    log::warn!("site {site:?}: {e}");
                    None
                }
            };
            SiteNull { site, null_m }
        })
        .collect();

    let summary = SolveSummary {
        geometry_hash: solved.geometry_hash.clone(),
        spacing_m: raster.spacing,
        margin_m: raster.margin,
        dims: solved.rf.layout.dims,
        rf_residual: solved.rf.meta.residual,
        rf_iterations: solved.rf.meta.iterations,
        top_residual: solved.top.as_ref().map(|f| f.meta.residual),
        top_iterations: solved.top.as_ref().map(|f| f.meta.iterations),
        method: solved.rf_report.method.clone(),
        elapsed_s: elapsed,
        nulls,
    };
    let path = out.write_json(SOLVE_SUMMARY, &summary)?;

    println!(
        "solved {}x{}x{} nodes in {elapsed:.1} s: rf residual {:.2e} after {} iterations",
        summary.dims[0], summary.dims[1], summary.dims[2], summary.rf_residual, summary.rf_iterations
    );
    if let (Some(r), Some(n)) = (summary.top_residual, summary.top_iterations) {
        println!("top plate residual {r:.2e} after {n} iterations");
    }
    for n in &summary.nulls {
        match n.null_m {
            Some(p) => println!("site ({}, {}): null at z = {:.4} mm", n.site.0, n.site.1, p[2] * 1e3),
            None => println!("site ({}, {}): no null found", n.site.0, n.site.1),
        }
    }
    println!("wrote {}", path.display());
    Ok(())
}
