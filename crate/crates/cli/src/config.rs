//! TOML run configuration. SI inside, explicit unit suffixes on every key
//! that carries a unit. Relative paths resolve against the config file.

use std::path::{Path, PathBuf};

use latticetrap::coulomb::{PairForce, Screening};
use latticetrap::dynamics::{BiasCoefficient, DriveConfig, IonSpecies, MACROION_DIAMETER, MACROION_Q_OVER_M, POLYSTYRENE_DENSITY};
use latticetrap::fieldsolver::SolverMethod;
use latticetrap::geometry::{length_from, GeometryConfig};
use latticetrap::scaling::{ScalingConstraint, ScanMode};
use latticetrap::units::{hz_to_angular, SR88_ION_MASS_AMU};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: Option<GeometryConfig>,
    pub drive: Option<DriveSection>,
    pub ion: Option<IonSection>,
    pub solver: Option<SolverSection>,
    pub output: Option<OutputSection>,
    pub trap: Option<TrapSection>,
    pub traj: Option<TrajSection>,
    pub stability: Option<StabilitySection>,
    pub repulsion: Option<RepulsionSection>,
    pub coupling: Option<CouplingSection>,
    pub scaling: Option<ScalingSection>,
    pub qm_fit: Option<QmFitSection>,
    pub scan: Option<ScanSection>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn section<'a, T>(s: &'a Option<T>, name: &str) -> Result<&'a T> {
    s.as_ref().ok_or_else(|| CliError::config(format!("missing [{name}] section")))
}

fn required(name: &str, m: Option<f64>, mm: Option<f64>) -> Result<f64> {
    length_from(name, m, mm)?.ok_or_else(|| CliError::config(format!("missing `{name}_m` (or `{name}_mm`)")))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("cannot read {}", path.display()), e))?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|source| CliError::Toml { path: path.into(), source })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.into()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn geometry(&self) -> Result<&GeometryConfig> {
        section(&self.geometry, "geometry")
    }

    pub fn drive(&self) -> Result<DriveConfig> {
        section(&self.drive, "drive")?.to_drive()
    }

    pub fn ion(&self) -> Result<IonSpecies> {
        section(&self.ion, "ion")?.to_species()
    }

    pub fn trap(&self) -> Result<TrapConstants> {
        section(&self.trap, "trap")?.resolve()
    }

    pub fn output_dir(&self, flag: Option<&Path>) -> PathBuf {
        match flag {
            Some(p) => p.into(),
            None => self.resolve(&self.output.as_ref().map(|o| o.directory.clone()).unwrap_or_else(default_out)),
        }
    }

    pub fn wants(&self, f: OutputFormat) -> bool {
        self.output.as_ref().map(|o| o.formats.contains(&f)).unwrap_or(f != OutputFormat::Vtk)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveSection {
    pub v_rf_volt: f64,
    pub omega_hz: Option<f64>,
    pub omega_rad_s: Option<f64>,
    #[serde(default)]
    pub u0_volt: f64,
    #[serde(default)]
    pub u_top_volt: f64,
}

impl DriveSection {
    pub fn to_drive(&self) -> Result<DriveConfig> {
        let omega = match (self.omega_hz, self.omega_rad_s) {
            (Some(f), None) => hz_to_angular(f),
            (None, Some(w)) => w,
            (Some(_), Some(_)) => return Err(CliError::config("[drive] takes omega_hz or omega_rad_s, not both")),
            (None, None) => return Err(CliError::config("[drive] needs omega_hz or omega_rad_s")),
        };
        Ok(DriveConfig { v_rf: self.v_rf_volt, omega, u0: self.u0_volt, u_top: self.u_top_volt }.validated()?)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IonSection {
    /// "sr88" or "macroion"; otherwise give charge_e and mass_amu.
    pub species: Option<String>,
    pub charge_e: Option<f64>,
    pub mass_amu: Option<f64>,
    pub diameter_um: Option<f64>,
    pub density_kg_m3: Option<f64>,
    pub q_over_m_e_amu: Option<f64>,
    #[serde(default)]
    pub drag_per_s: f64,
}

impl IonSection {
    pub fn to_species(&self) -> Result<IonSpecies> {
        let macro_keys = self.diameter_um.is_some() || self.density_kg_m3.is_some() || self.q_over_m_e_amu.is_some();
        let ion = match self.species.as_deref() {
            Some("macroion") => {
                if self.charge_e.is_some() || self.mass_amu.is_some() {
                    return Err(CliError::config("macroion takes diameter_um, density_kg_m3 and q_over_m_e_amu, not charge_e/mass_amu"));
                }
                IonSpecies::macroion(
                    self.diameter_um.map(|d| d * 1e-6).unwrap_or(MACROION_DIAMETER),
                    self.density_kg_m3.unwrap_or(POLYSTYRENE_DENSITY),
                    self.q_over_m_e_amu.unwrap_or(MACROION_Q_OVER_M),
                )?
            }
            _ if macro_keys => return Err(CliError::config("diameter_um, density_kg_m3 and q_over_m_e_amu need species = \"macroion\"")),
            Some("sr88") => {
                if self.charge_e.is_some() || self.mass_amu.is_some() {
                    return Err(CliError::config("species = \"sr88\" fixes charge and mass"));
                }
                IonSpecies::from_e_amu(1.0, SR88_ION_MASS_AMU)?
            }
            Some(other) => return Err(CliError::config(format!("unknown species `{other}` (expected sr88 or macroion)"))),
            None => match (self.charge_e, self.mass_amu) {
                (Some(q), Some(m)) => IonSpecies::from_e_amu(q, m)?,
                _ => return Err(CliError::config("[ion] needs species, or both charge_e and mass_amu")),
            },
        };
        Ok(ion.with_drag(self.drag_per_s)?)
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub spacing_m: Option<f64>,
    pub spacing_mm: Option<f64>,
    pub margin_m: Option<f64>,
    pub margin_mm: Option<f64>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub max_nodes: Option<usize>,
    #[serde(default)]
    pub method: SolverMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Csv,
    Vtk,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_formats() -> Vec<OutputFormat> {
    vec![OutputFormat::Json, OutputFormat::Csv]
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out")]
    pub directory: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<OutputFormat>,
}

/// Fitted multipole constants, for commands that work without a field.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrapSection {
    pub r1_m: Option<f64>,
    pub r1_mm: Option<f64>,
    pub alpha: f64,
    pub z1_m: Option<f64>,
    pub z1_mm: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrapConstants {
    pub r1: f64,
    pub alpha: f64,
    pub z1: Option<f64>,
}

impl TrapSection {
    fn resolve(&self) -> Result<TrapConstants> {
        let r1 = required("r1", self.r1_m, self.r1_mm)?;
        let z1 = length_from("z1", self.z1_m, self.z1_mm)?;
        if !(r1 > 0.0 && self.alpha.is_finite() && z1.is_none_or(|z| z > 0.0)) {
            return Err(CliError::config("[trap] needs r1 > 0, finite alpha and z1 > 0"));
        }
        Ok(TrapConstants { r1, alpha: self.alpha, z1 })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TrajModel {
    #[default]
    Multipole,
    Mathieu,
    Solved,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajSection {
    #[serde(default)]
    pub model: TrajModel,
    /// Duration in drive periods.
    #[serde(default = "default_periods")]
    pub periods: f64,
    #[serde(default = "default_offset")]
    pub offset_um: [f64; 3],
    #[serde(default)]
    pub velocity_m_s: [f64; 3],
    #[serde(default = "default_stride")]
    pub stride: usize,
    /// Standard-form a of the radial motion (mathieu model).
    #[serde(default)]
    pub mathieu_a: f64,
    /// Standard-form q of the radial motion; defaults to the value implied by [trap].
    pub mathieu_q: Option<f64>,
    pub tickle_volt: Option<f64>,
    pub tickle_hz: Option<f64>,
    pub site: Option<(usize, usize)>,
}

fn default_periods() -> f64 {
    2000.0
}

fn default_offset() -> [f64; 3] {
    [2.0, 2.0, 2.0]
}

fn default_stride() -> usize {
    10
}

impl Default for TrajSection {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilitySection {
    #[serde(default)]
    pub a_min: f64,
    #[serde(default)]
    pub a_max: f64,
    #[serde(default = "one")]
    pub a_steps: usize,
    #[serde(default)]
    pub q_min: f64,
    #[serde(default = "q_max")]
    pub q_max: f64,
    #[serde(default = "q_steps")]
    pub q_steps: usize,
    /// Damping rate over drive angular frequency.
    #[serde(default)]
    pub drag: f64,
}

fn one() -> usize {
    1
}

fn q_max() -> f64 {
    1.2
}

fn q_steps() -> usize {
    121
}

impl Default for StabilitySection {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum ScreeningKey {
    Named(String),
    Value(f64),
}

impl ScreeningKey {
    pub fn to_screening(&self) -> Result<Screening> {
        match self {
            Self::Named(s) if s == "image" => Ok(Screening::Image),
            Self::Named(s) if s == "quoted" => Ok(Screening::Quoted),
            Self::Named(s) => Err(CliError::config(format!("screening must be \"image\", \"quoted\" or a number, got `{s}`"))),
            Self::Value(v) => Ok(Screening::Fixed(*v)),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepulsionMethod {
    ClosedForm,
    Equilibrium,
    #[default]
    Both,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepulsionSection {
    /// Well separation; defaults to the geometry pitch.
    pub d_m: Option<f64>,
    pub d_mm: Option<f64>,
    pub height_m: Option<f64>,
    pub height_mm: Option<f64>,
    pub screening: Option<ScreeningKey>,
    pub omega_hz_min: f64,
    pub omega_hz_max: f64,
    #[serde(default = "repulsion_steps")]
    pub omega_steps: usize,
    #[serde(default)]
    pub method: RepulsionMethod,
    #[serde(default)]
    pub force: PairForce,
    /// Second ion; defaults to a copy of [ion].
    pub ion2_charge_e: Option<f64>,
    pub ion2_mass_amu: Option<f64>,
}

fn repulsion_steps() -> usize {
    16
}

pub struct RepulsionSetup {
    pub d: f64,
    pub height: f64,
    pub screening: Screening,
}

impl RunConfig {
    pub fn repulsion_setup(&self) -> Result<RepulsionSetup> {
        let r = section(&self.repulsion, "repulsion")?;
        let d = match length_from("d", r.d_m, r.d_mm)? {
            Some(d) => d,
            None => self.geometry()?.to_stack()?.hole_pitch,
        };
        let height = required("height", r.height_m, r.height_mm)?;
        let screening = r.screening.as_ref().map(ScreeningKey::to_screening).transpose()?.unwrap_or_default();
        Ok(RepulsionSetup { d, height, screening })
    }

    pub fn second_ion(&self, first: &IonSpecies) -> Result<IonSpecies> {
        let r = section(&self.repulsion, "repulsion")?;
        let q = r.ion2_charge_e.map(|q| q * latticetrap::units::ELEMENTARY_CHARGE).unwrap_or(first.charge);
        let m = r.ion2_mass_amu.map(|m| m * latticetrap::units::AMU).unwrap_or(first.mass);
        Ok(IonSpecies { charge: q, mass: m, drag_gamma: first.drag_gamma }.validated()?)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSection {
    pub force_n: f64,
    #[serde(default = "wavelength")]
    pub wavelength_nm: f64,
}

fn wavelength() -> f64 {
    422.0
}

impl RunConfig {
    pub fn coupling(&self) -> Result<&CouplingSection> {
        section(&self.coupling, "coupling")
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingSection {
    pub d_min_m: f64,
    pub d_max_m: f64,
    #[serde(default = "scaling_steps")]
    pub steps: usize,
    /// Depth at the base geometry and drive.
    pub base_depth_ev: f64,
    #[serde(default = "q_target")]
    pub q_target: f64,
    #[serde(default = "depth_min")]
    pub depth_min_ev: f64,
    pub v_max_volt: Option<f64>,
    /// Lower V after loading until the depth reaches this floor.
    pub depth_floor_ev: Option<f64>,
}

fn scaling_steps() -> usize {
    11
}

fn q_target() -> f64 {
    0.3
}

fn depth_min() -> f64 {
    0.1
}

impl ScalingSection {
    pub fn constraint(&self) -> ScalingConstraint {
        ScalingConstraint {
            q_target: self.q_target,
            depth_min: self.depth_min_ev,
            v_max: self.v_max_volt.unwrap_or(f64::INFINITY),
        }
    }

    pub fn mode(&self) -> ScanMode {
        match self.depth_floor_ev {
            Some(depth_floor) => ScanMode::PostLoadReduction { depth_floor },
            None => ScanMode::FixedVoltage,
        }
    }
}

impl RunConfig {
    pub fn scaling(&self) -> Result<&ScalingSection> {
        section(&self.scaling, "scaling")
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QmFitSection {
    /// CSV with columns Omega_Hz, omega_z_Hz.
    pub data: Option<PathBuf>,
    /// Overrides the [drive] top-plate bias.
    pub u_top_volt: Option<f64>,
    #[serde(default)]
    pub coefficient: BiasCoefficient,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSection {
    pub variable: String,
    pub target: String,
    pub from: f64,
    pub to: f64,
    #[serde(default = "scan_steps")]
    pub steps: usize,
    #[serde(default)]
    pub log: bool,
}

fn scan_steps() -> usize {
    21
}

/// Evenly spaced values from `from` to `to` inclusive, geometric when `log`.
pub fn sweep(from: f64, to: f64, steps: usize, log: bool) -> Result<Vec<f64>> {
    if steps == 0 || !from.is_finite() || !to.is_finite() {
        return Err(CliError::config("sweep needs finite bounds and at least one step"));
    }
    if log && !(from > 0.0 && to > 0.0) {
        return Err(CliError::config("log sweep needs positive bounds"));
    }
    if steps == 1 {
        return Ok(vec![from]);
    }
    let n = (steps - 1) as f64;
    Ok((0..steps)
        .map(|i| {
            let t = i as f64 / n;
            if log {
                (from.ln() + t * (to.ln() - from.ln())).exp()
            } else {
                from + t * (to - from)
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use latticetrap::units::{AMU, ELEMENTARY_CHARGE};

    fn parse(s: &str) -> RunConfig {
        toml::from_str(s).unwrap()
    }

    #[test]
    fn ion_units_convert_exactly() {
        let c = parse("[ion]\ncharge_e = 2\nmass_amu = 40\n");
        let ion = c.ion().unwrap();
        assert_eq!(ion.charge, 2.0 * 1.602_176_634e-19);
        assert_eq!(ion.mass, 40.0 * 1.660_539_066_60e-27);
        assert_eq!(ion.charge, 2.0 * ELEMENTARY_CHARGE);
        assert_eq!(ion.mass, 40.0 * AMU);
    }

    #[test]
    fn drive_takes_exactly_one_frequency() {
        let d = parse("[drive]\nv_rf_volt = 300\nomega_hz = 1e6\n").drive().unwrap();
        assert_eq!(d.omega, hz_to_angular(1e6));
        assert!(parse("[drive]\nv_rf_volt = 300\nomega_hz = 1e6\nomega_rad_s = 1\n").drive().is_err());
        assert!(parse("[drive]\nv_rf_volt = 300\n").drive().is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<RunConfig>("[drive]\nv_rf = 300\n").is_err());
        assert!(toml::from_str::<RunConfig>("[nonsense]\n").is_err());
    }

    #[test]
    fn missing_section_is_a_config_error() {
        let e = RunConfig::default().geometry().unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn species_presets() {
        let m = parse("[ion]\nspecies = \"macroion\"\n").ion().unwrap();
        let r = IonSpecies::macroion_default();
        assert!((m.mass / r.mass - 1.0).abs() < 1e-15 && (m.charge / r.charge - 1.0).abs() < 1e-15);
        assert!(parse("[ion]\nspecies = \"sr88\"\nmass_amu = 3\n").ion().is_err());
        assert!(parse("[ion]\nspecies = \"xe\"\n").ion().is_err());
    }

    #[test]
    fn sweeps() {
        assert_eq!(sweep(1.0, 3.0, 3, false).unwrap(), vec![1.0, 2.0, 3.0]);
        let g = sweep(1.0, 100.0, 3, true).unwrap();
        assert!((g[1] - 10.0).abs() < 1e-12);
        assert!(sweep(0.0, 1.0, 3, true).is_err());
    }

    #[test]
    fn screening_keys() {
        let c = parse("[repulsion]\nheight_mm = 0.25\nd_mm = 1\nscreening = 3.5\nomega_hz_min = 1\nomega_hz_max = 2\n");
        assert_eq!(c.repulsion_setup().unwrap().screening, Screening::Fixed(3.5));
        let c = parse("[repulsion]\nheight_mm = 0.25\nd_mm = 1\nscreening = \"quoted\"\nomega_hz_min = 1\nomega_hz_max = 2\n");
        assert_eq!(c.repulsion_setup().unwrap().screening, Screening::Quoted);
    }
}
