pub mod analyze;
pub mod qm_fit;
pub mod repulsion;
pub mod scaling;
pub mod scan;
pub mod solve;
pub mod stability;
pub mod traj;

use std::path::Path;

use latticetrap::analysis::SolvedStack;
use latticetrap::fieldsolver::{read_field, SolveReport, SolverOptions};
use latticetrap::geometry::{length_from, rasterize, ElectrodeStack, RasterOptions};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, Result};

pub const RF_FIELD: &str = "rf.field";
pub const TOP_FIELD: &str = "top.field";
pub const SOLVE_SUMMARY: &str = "solve.json";

/// Grid settings from `[solver]`, with `spacing` taking precedence.
pub fn raster_options(cfg: &RunConfig, stack: &ElectrodeStack, spacing: Option<f64>) -> Result<RasterOptions> {
    let sec = cfg.solver.as_ref();
    let from_file = match sec {
        Some(s) => length_from("spacing", s.spacing_m, s.spacing_mm)?,
        None => None,
    };
    let spacing = spacing
        .or(from_file)
        .ok_or_else(|| CliError::config("no grid spacing: set [solver] spacing_m or pass --spacing"))?;
    let mut opts = RasterOptions::new(stack, spacing);
    if let Some(s) = sec {
        if let Some(m) = length_from("margin", s.margin_m, s.margin_mm)? {
            opts.margin = m;
        }
        if let Some(n) = s.max_nodes {
            opts.max_nodes = n;
        }
    }
    Ok(opts)
}

pub fn solver_options(cfg: &RunConfig) -> SolverOptions {
    let mut opts = SolverOptions::default();
    if let Some(s) = &cfg.solver {
        opts.tol = s.tol.unwrap_or(opts.tol);
        opts.max_iterations = s.max_iter.unwrap_or(opts.max_iterations);
        opts.method = s.method;
    }
    opts
}

/// Parse `i,j`.
pub fn parse_site(s: &str) -> std::result::Result<(usize, usize), String> {
    let (i, j) = s.split_once(',').ok_or_else(|| format!("expected i,j, got `{s}`"))?;
    let p = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("bad site index `{v}`: {e}"));
    Ok((p(i)?, p(j)?))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SiteNull {
    pub site: (usize, usize),
    /// Grid node of smallest |grad phi| above the site; absent if none was found.
    pub null_m: Option<[f64; 3]>,
}

/// `solve.json`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveSummary {
    pub geometry_hash: String,
    pub spacing_m: f64,
    pub margin_m: f64,
    pub dims: [usize; 3],
    pub rf_residual: f64,
    pub rf_iterations: usize,
    pub top_residual: Option<f64>,
    pub top_iterations: Option<usize>,
    pub method: String,
    pub elapsed_s: f64,
    pub nulls: Vec<SiteNull>,
}

/// Load the fields written by `solve` from `dir` and re-rasterize the
/// configured stack onto their grid. A geometry-hash mismatch is returned as
/// a warning; a grid-shape mismatch is an error.
pub fn load_solved(cfg: &RunConfig, dir: &Path) -> Result<(SolvedStack, Vec<String>)> {
    let stack = cfg.geometry()?.to_stack()?;
    let rf_path = dir.join(RF_FIELD);
    if !rf_path.exists() {
        return Err(CliError::config(format!("{} not found; run `latticetrap solve` first", rf_path.display())));
    }
    let (rf, rf_header) = read_field(&rf_path)?;
    let summary: Option<SolveSummary> = match std::fs::read_to_string(dir.join(SOLVE_SUMMARY)) {
        Ok(s) => Some(serde_json::from_str(&s)?),
        Err(_) => None,
    };
    let mut raster = raster_options(cfg, &stack, Some(rf_header.spacing[0]))?;
    if let Some(s) = &summary {
        raster.margin = s.margin_m;
    }
    let expected = stack.content_hash(raster.spacing, raster.margin);
    let mut warnings = Vec::new();
    if rf_header.geometry_hash.as_deref() != Some(expected.as_str()) {
        let msg = format!(
            "field file {} was solved for geometry hash {}, the config gives {expected}; results may be stale",
            rf_path.display(),
            rf_header.geometry_hash.as_deref().unwrap_or("<none>")
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let grid = rasterize(&stack, &raster)?;
    if grid.layout != rf.layout {
        return Err(CliError::config(format!(
            "field grid {:?} does not match the configured geometry grid {:?}",
            rf.layout.dims, grid.layout.dims
        )));
    }
    let top_path = dir.join(TOP_FIELD);
    let top = if stack.top_plate_height.is_some() && top_path.exists() {
        Some(read_field(&top_path)?.0)
    } else {
        None
    };
    let solved = SolvedStack {
        blocked: grid.dirichlet_mask(),
        geometry_hash: expected,
        stack,
        raster,
        rf,
        top,
        rf_report: SolveReport::default(),
        top_report: None,
    };
    Ok((solved, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn site_parsing() {
        assert_eq!(parse_site("3, 4").unwrap(), (3, 4));
        assert!(parse_site("3").is_err());
        assert!(parse_site("a,1").is_err());
    }
}
