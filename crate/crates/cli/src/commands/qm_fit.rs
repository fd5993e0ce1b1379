use std::path::{Path, PathBuf};

use clap::Args;
use latticetrap::coulomb::{fit_charge_to_mass, ChargeToMassFit};
use latticetrap::units::{hz_to_angular, si_to_e_per_amu};
use serde::Serialize;

use crate::config::{OutputFormat, RunConfig};
use crate::error::{CliError, Result};
use crate::output::OutputDir;

#[derive(Debug, Args)]
pub struct QmFitArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// CSV with header `Omega_Hz,omega_z_Hz`; overrides [qm_fit] data.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct QmReport {
    fit: ChargeToMassFit,
    q_over_m_e_amu: f64,
    std_error_e_amu: f64,
    points: usize,
    u_top_volt: f64,
}

/// `(Omega, omega_z)` pairs in rad/s from a two-column CSV in Hz.
pub fn read_frequency_csv(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("cannot read {}", path.display()), e))?;
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
    let header = lines.next().unwrap_or_default();
    if header.replace(' ', "") != "Omega_Hz,omega_z_Hz" {
        return Err(CliError::config(format!("{}: expected header `Omega_Hz,omega_z_Hz`, got `{header}`", path.display())));
    }
    lines
        .enumerate()
        .map(|(i, l)| {
            let bad = || CliError::config(format!("{}: bad data row {}: `{l}`", path.display(), i + 1));
            let (a, b) = l.split_once(',').ok_or_else(bad)?;
            let a: f64 = a.trim().parse().map_err(|_| bad())?;
            let b: f64 = b.trim().parse().map_err(|_| bad())?;
            Ok((hz_to_angular(a), hz_to_angular(b)))
        })
        .collect()
}

pub fn run(args: &QmFitArgs) -> Result<()> {
    let cfg = RunConfig::load(&args.config)?;
    let drive = cfg.drive()?;
    let trap = cfg.trap()?;
    let sec = cfg.qm_fit.as_ref();
    let data_path = match (&args.data, sec.and_then(|s| s.data.as_ref())) {
        (Some(p), _) => p.clone(),
        (None, Some(p)) => cfg.resolve(p),
        (None, None) => return Err(CliError::config("no data: pass --data or set [qm_fit] data")),
    };
    let data = read_frequency_csv(&data_path)?;
    let u = sec.and_then(|s| s.u_top_volt).unwrap_or(drive.u_top);
    let coefficient = sec.map(|s| s.coefficient).unwrap_or_default();
    let z1 = match trap.z1 {
        Some(z1) => z1,
        // z1 drops out of the model without bias
        None if u == 0.0 => 1.0,
        None => return Err(latticetrap::Error::MissingZ1.into()),
    };
    let out = OutputDir::lock(&cfg.output_dir(args.out.as_deref()))?;

    let fit = fit_charge_to_mass(&data, &drive, trap.r1, trap.alpha, z1, u, coefficient)?;
    let report = QmReport {
        fit,
        q_over_m_e_amu: si_to_e_per_amu(fit.q_over_m),
        std_error_e_amu: si_to_e_per_amu(fit.std_error),
        points: data.len(),
        u_top_volt: u,
    };
    if cfg.wants(OutputFormat::Json) {
        out.write_json("qm_fit.json", &report)?;
    }
    println!(
        "Q/m = {:.4e} +- {:.1e} e/amu ({:.4e} C/kg) from {} points, rms residual {:.3e} rad/s",
        report.q_over_m_e_amu, report.std_error_e_amu, fit.q_over_m, report.points, fit.rms_residual
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        std::fs::write(&p, "# comment\nOmega_Hz, omega_z_Hz\n1000,10\n2000,5\n").unwrap();
        let d = read_frequency_csv(&p).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d[1], (hz_to_angular(2000.0), hz_to_angular(5.0)));
        std::fs::write(&p, "a,b\n1,2\n").unwrap();
        assert_eq!(read_frequency_csv(&p).unwrap_err().exit_code(), 2);
        std::fs::write(&p, "Omega_Hz,omega_z_Hz\n1,x\n").unwrap();
        assert!(read_frequency_csv(&p).is_err());
    }
}
