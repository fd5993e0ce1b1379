use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use latticetrap::analysis::{analyze_each, AnalysisOptions, SiteReport, SITE_REPORT_CSV_HEADER};
use latticetrap::dynamics::{BiasCoefficient, DriveConfig, IonSpecies};
use latticetrap::units::angular_to_hz;
use serde::Serialize;

use super::{load_solved, parse_site};
use crate::config::{OutputFormat, RunConfig};
use crate::error::{CliError, Result};
use crate::output::OutputDir;

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Directory holding the `solve` output; defaults to the output directory.
    #[arg(long)]
    pub field: Option<PathBuf>,
    /// Restrict to one site, as `i,j`.
    #[arg(long, value_parser = parse_site)]
    pub site: Option<(usize, usize)>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Coefficient of the top-plate correction to the axial frequency.
    #[arg(long, value_enum, default_value = "as-printed")]
    pub bias_coefficient: CoefficientArg,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum CoefficientArg {
    AsPrinted,
    Derived,
}

impl From<CoefficientArg> for BiasCoefficient {
    fn from(c: CoefficientArg) -> Self {
        match c {
            CoefficientArg::AsPrinted => BiasCoefficient::AsPrinted,
            CoefficientArg::Derived => BiasCoefficient::Derived,
        }
    }
}

#[derive(Serialize)]
struct AnalyzeReport<'a> {
    geometry_hash: &'a str,
    warnings: &'a [String],
    ion: IonSpecies,
    drive: DriveConfig,
    sites: &'a [SiteReport],
    failures: &'a [SiteFailure],
}

#[derive(Serialize)]
struct SiteFailure {
    site: (usize, usize),
    error: String,
}

pub fn run(args: &AnalyzeArgs) -> Result<()> {
    let cfg = RunConfig::load(&args.config)?;
    let ion = cfg.ion()?;
    let drive = cfg.drive()?;
    let out_dir = cfg.output_dir(args.out.as_deref());
    let field_dir = args.field.clone().unwrap_or_else(|| out_dir.clone());
    let out = OutputDir::lock(&out_dir)?;
    let (solved, warnings) = load_solved(&cfg, &field_dir)?;
    let sites = match args.site {
        Some(s) => {
            solved.stack.site_center(s)?;
            vec![s]
        }
        None => solved.stack.sites().collect(),
    };
    let opts = AnalysisOptions { bias_coefficient: args.bias_coefficient.into(), ..Default::default() };
    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for (site, r) in sites.iter().zip(analyze_each(&solved, &sites, &ion, &drive, &opts)?) {
        match r {
            Ok(r) => reports.push(r),
            // a single requested site is all-or-nothing
            Err(e) if args.site.is_some() => return Err(e.into()),
            Err(e) => {
                log::warn!("site {site:?}: {e}");
                failures.push(SiteFailure { site: *site, error: e.to_string() });
            }
        }
    }
    if reports.is_empty() {
        return Err(CliError::from(latticetrap::Error::NoMinimum("no site could be analyzed".into())));
    }

    if cfg.wants(OutputFormat::Json) {
        let report = AnalyzeReport { geometry_hash: &solved.geometry_hash, warnings: &warnings, ion, drive, sites: &reports, failures: &failures };
        out.write_json("sites.json", &report)?;
    }
    if cfg.wants(OutputFormat::Csv) {
        out.write_csv("sites.csv", |w| {
            writeln!(w, "{SITE_REPORT_CSV_HEADER}")?;
            for r in &reports {
                writeln!(w, "{}", r.csv_row())?;
            }
            Ok(())
        })?;
    }

    for r in &reports {
        let s = &r.site;
        let opt = |v: Option<f64>, scale: f64| v.map(|x| format!("{:.4}", x * scale)).unwrap_or_else(|| "-".into());
        println!(
            "site ({}, {}): r1 = {:.3} mm, alpha = {:.2}, z1 = {} mm, depth = {} eV, \
             omega_r/2pi = {:.1} kHz (analytic) {:.1} kHz (curvature), omega_z/2pi = {:.1} kHz (analytic) {:.1} kHz (curvature)",
            s.site.0,
            s.site.1,
            s.r1 * 1e3,
            s.alpha,
            opt(s.z1, 1e3),
            opt(s.depth, 1.0),
            angular_to_hz(r.analytic_omega_r) * 1e-3,
            angular_to_hz(r.curvature.omega_r) * 1e-3,
            angular_to_hz(r.analytic_omega_z) * 1e-3,
            angular_to_hz(r.curvature.omega_z) * 1e-3,
        );
    }
    Ok(())
}
