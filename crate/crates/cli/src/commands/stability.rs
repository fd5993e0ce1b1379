use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use latticetrap::dynamics::{stability_boundary, stability_map, write_stability_csv};
use serde::Serialize;

use crate::config::{sweep, OutputFormat, RunConfig, StabilitySection};
use crate::error::Result;
use crate::output::OutputDir;

#[derive(Debug, Args)]
pub struct StabilityArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct BoundaryPoint {
    a: f64,
    /// Upper q edge of the first stable band; absent when none was found.
    q: Option<f64>,
}

pub fn run(args: &StabilityArgs) -> Result<()> {
    let cfg = RunConfig::load(&args.config)?;
    let default = StabilitySection::default();
    let sec = cfg.stability.as_ref().unwrap_or(&default);
    let a_values = sweep(sec.a_min, sec.a_max, sec.a_steps, false)?;
    let q_values = sweep(sec.q_min, sec.q_max, sec.q_steps, false)?;
    let out = OutputDir::lock(&cfg.output_dir(args.out.as_deref()))?;

    let map = stability_map(&a_values, &q_values, sec.drag);
    let boundary: Vec<BoundaryPoint> = a_values
        .iter()
        .map(|&a| BoundaryPoint {
            a,
            q: stability_boundary(a, sec.drag).inspect_err(|e| log::warn!("a = {a}: {e}")).ok(),
        })
        .collect();

    if cfg.wants(OutputFormat::Csv) {
        out.write_csv("stability.csv", |w| write_stability_csv(w, &map))?;
        out.write_csv("boundary.csv", |w| {
            writeln!(w, "a,q_boundary")?;
            for b in &boundary {
                writeln!(w, "{:e},{}", b.a, b.q.map(|q| format!("{q:e}")).unwrap_or_default())?;
            }
            Ok(())
        })?;
    }
    if cfg.wants(OutputFormat::Json) {
        out.write_json("boundary.json", &boundary)?;
    }
    let stable = map.iter().filter(|p| p.stable).count();
    println!("{stable} of {} grid points stable", map.len());
    for b in &boundary {
        match b.q {
            Some(q) => println!("a = {:.4}: boundary q = {q:.6}", b.a),
            None => println!("a = {:.4}: no stable band", b.a),
        }
    }
    Ok(())
}
