use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use latticetrap::coulomb::{two_ion_displacement_closed, IonPair};
use latticetrap::dynamics::{omega_z_biased, secular_frequencies, DriveConfig, IonSpecies};
use latticetrap::scaling::{j_coupling, log_log_slope, CouplingParams};
use latticetrap::units::{angular_to_hz, hz_to_angular};

use crate::config::{sweep, RunConfig, TrapConstants};
use crate::error::{CliError, Result};
use crate::output::OutputDir;

#[derive(Debug, Args)]
pub struct ScanArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// V (volts), Omega (Hz) or d (m); overrides [scan].
    #[arg(long)]
    pub variable: Option<String>,
    /// secular, repulsion or j; overrides [scan].
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long)]
    pub from: Option<f64>,
    #[arg(long)]
    pub to: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Geometric spacing.
    #[arg(long)]
    pub log: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variable {
    V,
    Omega,
    D,
}

impl std::str::FromStr for Variable {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "V" | "v" | "v_rf" => Ok(Self::V),
            "Omega" | "omega" => Ok(Self::Omega),
            "d" => Ok(Self::D),
            _ => Err(CliError::config(format!("unknown scan variable `{s}` (expected V, Omega or d)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Secular,
    Repulsion,
    J,
}

impl std::str::FromStr for Target {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "secular" => Ok(Self::Secular),
            "repulsion" => Ok(Self::Repulsion),
            "j" | "J" => Ok(Self::J),
            _ => Err(CliError::config(format!("unknown scan target `{s}` (expected secular, repulsion or j)"))),
        }
    }
}

/// Operating point of one scan row.
#[derive(Debug, Clone, Copy)]
struct Point {
    drive: DriveConfig,
    d: f64,
    r1: f64,
}

struct Context<'a> {
    cfg: &'a RunConfig,
    ion: IonSpecies,
    drive: DriveConfig,
    trap: TrapConstants,
    d0: f64,
}

impl Context<'_> {
    fn point(&self, var: Variable, x: f64) -> Result<Point> {
        let base = Point { drive: self.drive, d: self.d0, r1: self.trap.r1 };
        Ok(match var {
            Variable::V => Point { drive: DriveConfig { v_rf: x, ..self.drive }, ..base },
            Variable::Omega => Point { drive: DriveConfig { omega: hz_to_angular(x), ..self.drive }, ..base },
            // r1 follows d, V stays put and Omega keeps q at its target
            Variable::D => {
                let q = self.cfg.scaling.as_ref().map(|s| s.q_target).unwrap_or(0.3);
                let r1 = self.trap.r1 * x / self.d0;
                let omega = (2.0 * self.ion.charge * self.drive.v_rf / (self.ion.mass * r1 * r1 * q)).sqrt();
                Point { drive: DriveConfig { omega, ..self.drive }, d: x, r1 }
            }
        })
    }

    fn header(&self, target: Target) -> &'static str {
        match target {
            Target::Secular if self.biased() => "omega_r_Hz,omega_z_Hz,omega_z_biased_Hz",
            Target::Secular => "omega_r_Hz,omega_z_Hz",
            Target::Repulsion => "x1_m,x2_m",
            Target::J => "J_over_h_Hz,omega_r_Hz,Omega_Hz",
        }
    }

    fn biased(&self) -> bool {
        self.drive.u_top != 0.0 && self.trap.z1.is_some()
    }

    /// Target columns; `None` where the point is outside the model's regime.
    fn evaluate(&self, target: Target, p: &Point) -> Result<Vec<Option<f64>>> {
        let (wr, wz) = secular_frequencies(&self.ion, &p.drive, p.r1)?;
        Ok(match target {
            Target::Secular => {
                let mut row = vec![Some(angular_to_hz(wr)), Some(angular_to_hz(wz))];
                if self.biased() {
                    let z1 = self.trap.z1.unwrap_or(f64::NAN);
                    row.push(omega_z_biased(&self.ion, &p.drive, p.r1, self.trap.alpha, z1).ok().map(angular_to_hz));
                }
                row
            }
            Target::Repulsion => {
                let setup = self.cfg.repulsion_setup()?;
                let ion2 = self.cfg.second_ion(&self.ion)?;
                let pair = IonPair::new(self.ion, ion2, p.d, setup.height, setup.screening)?;
                match two_ion_displacement_closed(&pair, &p.drive, p.r1) {
                    Ok(r) => vec![Some(r.x1), Some(r.x2)],
                    Err(latticetrap::Error::Regime { ratio, .. }) => {
                        log::warn!("x1/d = {ratio:.3} is outside the closed form's regime; leaving the row blank");
                        vec![None, None]
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            Target::J => {
                let force = self.cfg.coupling()?.force_n;
                let j = j_coupling(&CouplingParams { force, d: p.d, omega: wr, ion: self.ion })?;
                vec![Some(j), Some(angular_to_hz(wr)), Some(angular_to_hz(p.drive.omega))]
            }
        })
    }
}

fn column_name(var: Variable) -> &'static str {
    match var {
        Variable::V => "V_volt",
        Variable::Omega => "Omega_Hz",
        Variable::D => "d_m",
    }
}

pub fn run(args: &ScanArgs) -> Result<()> {
    let cfg = RunConfig::load(&args.config)?;
    let sec = cfg.scan.as_ref();
    let pick = |flag: Option<String>, key: Option<&String>, name: &str| {
        flag.or_else(|| key.cloned()).ok_or_else(|| CliError::config(format!("scan needs a {name}: pass --{name} or set [scan] {name}")))
    };
    let var: Variable = pick(args.variable.clone(), sec.map(|s| &s.variable), "variable")?.parse()?;
    let target: Target = pick(args.target.clone(), sec.map(|s| &s.target), "target")?.parse()?;
    let from = args.from.or(sec.map(|s| s.from)).ok_or_else(|| CliError::config("scan needs --from or [scan] from"))?;
    let to = args.to.or(sec.map(|s| s.to)).ok_or_else(|| CliError::config("scan needs --to or [scan] to"))?;
    let steps = args.steps.or(sec.map(|s| s.steps)).unwrap_or(21);
    let log = args.log || sec.is_some_and(|s| s.log);
    let values = sweep(from, to, steps, log)?;

    let ctx = Context {
        cfg: &cfg,
        ion: cfg.ion()?,
        drive: cfg.drive()?,
        trap: cfg.trap()?,
        d0: match cfg.repulsion.as_ref() {
            Some(_) => cfg.repulsion_setup()?.d,
            None => cfg.geometry()?.to_stack()?.hole_pitch,
        },
    };
    let rows: Vec<(f64, Vec<Option<f64>>)> =
        values.iter().map(|&x| Ok((x, ctx.evaluate(target, &ctx.point(var, x)?)?))).collect::<Result<_>>()?;

    let out = OutputDir::lock(&cfg.output_dir(args.out.as_deref()))?;
    let path = out.write_csv("scan.csv", |w| {
        writeln!(w, "{},{}", column_name(var), ctx.header(target))?;
        for (x, cols) in &rows {
            let cols: Vec<String> = cols.iter().map(|c| c.map(|v| format!("{v:e}")).unwrap_or_default()).collect();
            writeln!(w, "{x:e},{}", cols.join(","))?;
        }
        Ok(())
    })?;
    println!("wrote {} rows to {}", rows.len(), path.display());
    if target == Target::J && rows.len() > 1 {
        let j: Vec<f64> = rows.iter().map(|r| r.1[0].unwrap_or(f64::NAN)).collect();
        println!("log-log slope of J against {} = {:.6}", column_name(var), log_log_slope(&values, &j));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_names() {
        assert_eq!("Omega".parse::<Variable>().unwrap(), Variable::Omega);
        assert_eq!("V".parse::<Variable>().unwrap(), Variable::V);
        let e = "T".parse::<Variable>().unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert_eq!("j".parse::<Target>().unwrap(), Target::J);
        assert!("depth".parse::<Target>().is_err());
    }
}
