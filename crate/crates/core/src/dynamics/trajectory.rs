use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{DriveConfig, IonSpecies};
use crate::error::{Error, Result};
use crate::fieldsolver::multipole_gradient;
use crate::grid::ScalarField3D;
use crate::interp::CubicSpline3D;

/// Conservative force on an ion at time `t`, excluding drag and tickle.
pub trait ForceModel: Sync {
    fn force(&self, ion: &IonSpecies, drive: &DriveConfig, t: f64, x: [f64; 3]) -> [f64; 3];
    /// False once the ion has left the region where the model is defined.
    fn contains(&self, x: [f64; 3]) -> bool;
}

/// Independent Mathieu oscillators per axis:
/// `x_i'' = -(Omega^2 / 4)(a_i - 2 q_i cos Omega t) x_i`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MathieuForce {
    pub a: [f64; 3],
    pub q: [f64; 3],
    pub escape_radius: f64,
}

impl ForceModel for MathieuForce {
    fn force(&self, ion: &IonSpecies, drive: &DriveConfig, t: f64, x: [f64; 3]) -> [f64; 3] {
        let w = 0.25 * drive.omega * drive.omega * ion.mass;
        let c = (drive.omega * t).cos();
        [0, 1, 2].map(|i| -w * (self.a[i] - 2.0 * self.q[i] * c) * x[i])
    }

    fn contains(&self, x: [f64; 3]) -> bool {
        x.iter().map(|v| v * v).sum::<f64>() < self.escape_radius * self.escape_radius
    }
}

/// Cubic multipole field around a null at `centre`, driven at `V cos Omega t`,
/// plus the uniform top-plate force `-Q U / z1` along z when `z1` is set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MultipoleForce {
    pub centre: [f64; 3],
    pub r1: f64,
    pub alpha: f64,
    pub z1: Option<f64>,
    pub escape_radius: f64,
}

impl MultipoleForce {
    pub fn quadrupole(r1: f64) -> Self {
        Self { centre: [0.0; 3], r1, alpha: 0.0, z1: None, escape_radius: r1 }
    }

    /// Standard-form Mathieu q of the x, y and z motion in the pure quadrupole.
    pub fn axis_q(&self, ion: &IonSpecies, drive: &DriveConfig) -> [f64; 3] {
        let q = 4.0 * ion.charge * drive.v_rf / (ion.mass * self.r1 * self.r1 * drive.omega * drive.omega);
        [q, q, 2.0 * q]
    }
}

impl ForceModel for MultipoleForce {
    fn force(&self, ion: &IonSpecies, drive: &DriveConfig, t: f64, x: [f64; 3]) -> [f64; 3] {
        let rel = [x[0] - self.centre[0], x[1] - self.centre[1], x[2] - self.centre[2]];
        let g = multipole_gradient(rel, 1.0, self.r1, self.alpha);
        let s = -ion.charge * drive.v_rf * (drive.omega * t).cos();
        let mut f = g.map(|c| s * c);
        if let Some(z1) = self.z1 {
            f[2] -= ion.charge * drive.u_top / z1;
        }
        f
    }

    fn contains(&self, x: [f64; 3]) -> bool {
        let d2: f64 = (0..3).map(|i| (x[i] - self.centre[i]).powi(2)).sum();
        d2 < self.escape_radius * self.escape_radius
    }
}

/// Tricubic interpolant of a solved rf potential (normalized to 1 V).
#[derive(Clone, Debug)]
pub struct SolvedForce {
    spline: CubicSpline3D,
    pub z1: Option<f64>,
    lo: [f64; 3],
    hi: [f64; 3],
}

impl SolvedForce {
    /// Spline over the sub-box `[lo, hi]` of node indices (inclusive).
    pub fn new(phi: &ScalarField3D, lo: [usize; 3], hi: [usize; 3], z1: Option<f64>) -> Result<Self> {
        let crop = phi.crop(lo, hi);
        let l = crop.layout;
        let a = l.position(0, 0, 0);
        let b = l.position(l.dims[0] - 1, l.dims[1] - 1, l.dims[2] - 1);
        // one node of clearance keeps the spline away from its mirrored edge
        let pad = l.spacing;
        Ok(Self {
            spline: CubicSpline3D::new(&crop)?,
            z1,
            lo: [0, 1, 2].map(|i| a[i] + pad[i]),
            hi: [0, 1, 2].map(|i| b[i] - pad[i]),
        })
    }

    /// Spline over a cube of `half_width` nodes on each side of `centre`.
    pub fn around(phi: &ScalarField3D, centre: [f64; 3], half_width: usize, z1: Option<f64>) -> Result<Self> {
        let c = phi.layout.nearest(centre);
        let lo = c.map(|v| v.saturating_sub(half_width));
        let hi = [0, 1, 2].map(|i| (c[i] + half_width).min(phi.layout.dims[i] - 1));
        Self::new(phi, lo, hi, z1)
    }
}

impl ForceModel for SolvedForce {
    fn force(&self, ion: &IonSpecies, drive: &DriveConfig, t: f64, x: [f64; 3]) -> [f64; 3] {
        let g = self.spline.gradient(x);
        let s = -ion.charge * drive.v_rf * (drive.omega * t).cos();
        let mut f = g.map(|c| s * c);
        if let Some(z1) = self.z1 {
            f[2] -= ion.charge * drive.u_top / z1;
        }
        f
    }

    fn contains(&self, x: [f64; 3]) -> bool {
        (0..3).all(|i| x[i] > self.lo[i] && x[i] < self.hi[i])
    }
}

/// Uniform oscillating z force `Q A cos(w t) / z1` from a small top-plate voltage.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tickle {
    /// Volts on the top plate.
    pub amplitude: f64,
    /// Angular frequency, rad/s.
    pub frequency: f64,
    pub z1: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryOptions {
    /// Time step; `None` means `2 pi / (200 Omega)`.
    pub dt: Option<f64>,
    /// Keep every `stride`-th step.
    pub stride: usize,
    pub tickle: Option<Tickle>,
}

impl Default for TrajectoryOptions {
    fn default() -> Self {
        Self { dt: None, stride: 10, tickle: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub x: Vec<[f64; 3]>,
    pub v: Vec<[f64; 3]>,
    pub drive_omega: f64,
    /// Time at which the ion left the model domain, if it did.
    pub escaped_at: Option<f64>,
}

impl Trajectory {
    pub fn escaped(&self) -> bool {
        self.escaped_at.is_some()
    }

    pub fn sample_interval(&self) -> f64 {
        if self.t.len() < 2 {
            0.0
        } else {
            self.t[1] - self.t[0]
        }
    }

    /// Largest |x_axis| over samples with `t >= from`.
    pub fn max_abs(&self, axis: usize, from: f64) -> f64 {
        self.t
            .iter()
            .zip(&self.x)
            .filter(|(t, _)| **t >= from)
            .map(|(_, p)| p[axis].abs())
            .fold(0.0, f64::max)
    }
}

/// Position-Verlet integration with the force evaluated at half steps.
/// Drag enters through the exact velocity decay over each kick.
pub fn integrate_trajectory(
    model: &dyn ForceModel,
    ion: &IonSpecies,
    drive: &DriveConfig,
    x0: [f64; 3],
    v0: [f64; 3],
    duration: f64,
    opts: &TrajectoryOptions,
) -> Result<Trajectory> {
    ion.validated()?;
    drive.validated()?;
    let max = 2.0 * PI / (50.0 * drive.omega);
    let dt = opts.dt.unwrap_or(2.0 * PI / (200.0 * drive.omega));
    if !(dt > 0.0 && dt <= max) {
        return Err(Error::StepSize { dt, max });
    }
    if !(duration >= 0.0 && duration.is_finite()) {
        return Err(Error::InvalidParameter(format!("duration must be >= 0, got {duration}")));
    }
    let stride = opts.stride.max(1);
    let steps = (duration / dt).round() as usize;
    let decay = (-ion.drag_gamma * dt).exp();
    // (1 - e^{-g dt}) / g, tending to dt without drag
    let kick = if ion.drag_gamma > 0.0 { (1.0 - decay) / ion.drag_gamma } else { dt };
    let mut x = x0;
    let mut v = v0;
    let cap = steps / stride + 1;
    let mut out = Trajectory {
        t: Vec::with_capacity(cap),
        x: Vec::with_capacity(cap),
        v: Vec::with_capacity(cap),
        drive_omega: drive.omega,
        escaped_at: None,
    };
    out.t.push(0.0);
    out.x.push(x);
    out.v.push(v);
    for n in 0..steps {
        let t = n as f64 * dt;
        let th = t + 0.5 * dt;
        for i in 0..3 {
            x[i] += 0.5 * dt * v[i];
        }
        if !model.contains(x) {
            out.escaped_at = Some(th);
            break;
        }
        let mut f = model.force(ion, drive, th, x);
        if let Some(tk) = opts.tickle {
            f[2] += ion.charge * tk.amplitude * (tk.frequency * th).cos() / tk.z1;
        }
        for i in 0..3 {
            v[i] = v[i] * decay + f[i] / ion.mass * kick;
            x[i] += 0.5 * dt * v[i];
        }
        if (n + 1) % stride == 0 {
            out.t.push(t + dt);
            out.x.push(x);
            out.v.push(v);
        }
    }
    Ok(out)
}

pub const TRAJECTORY_CSV_HEADER: &str = "t,x,y,z,vx,vy,vz";

pub fn write_trajectory_csv<W: Write>(mut w: W, traj: &Trajectory) -> Result<()> {
    writeln!(w, "{TRAJECTORY_CSV_HEADER}")?;
    for ((t, x), v) in traj.t.iter().zip(&traj.x).zip(&traj.v) {
        writeln!(w, "{t:e},{:e},{:e},{:e},{:e},{:e},{:e}", x[0], x[1], x[2], v[0], v[1], v[2])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mathieu(q: f64) -> MathieuForce {
        MathieuForce { a: [0.0; 3], q: [0.0, 0.0, q], escape_radius: 1.0 }
    }

    #[test]
    fn step_limit() {
        let ion = IonSpecies::strontium88();
        let drive = DriveConfig::reference();
        let opts = TrajectoryOptions { dt: Some(2.0 * PI / (10.0 * drive.omega)), ..Default::default() };
        let r = integrate_trajectory(&mathieu(0.3), &ion, &drive, [0.0; 3], [0.0; 3], 1e-6, &opts);
        assert!(matches!(r, Err(Error::StepSize { .. })));
    }

    #[test]
    fn stable_amplitude_is_constant() {
        let ion = IonSpecies::strontium88();
        let drive = DriveConfig::reference();
        // secular period for q = 0.3 is about 2 pi / (0.21 Omega)
        let t_sec = 2.0 * PI / (0.2125 * drive.omega);
        let tr = integrate_trajectory(
            &mathieu(0.3),
            &ion,
            &drive,
            [0.0, 0.0, 1e-5],
            [0.0; 3],
            110.0 * t_sec,
            &TrajectoryOptions::default(),
        )
        .unwrap();
        assert!(!tr.escaped());
        let early = tr.t.iter().zip(&tr.x).filter(|(t, _)| **t < 10.0 * t_sec).map(|(_, p)| p[2].abs()).fold(0.0, f64::max);
        let late = tr.max_abs(2, 100.0 * t_sec);
        assert!((late / early - 1.0).abs() < 0.01, "{early} {late}");
    }

    #[test]
    fn unstable_escapes() {
        let ion = IonSpecies::strontium88();
        let drive = DriveConfig::reference();
        let tr = integrate_trajectory(
            &MathieuForce { escape_radius: 1e-3, ..mathieu(1.2) },
            &ion,
            &drive,
            [0.0, 0.0, 1e-6],
            [0.0; 3],
            1e-4,
            &TrajectoryOptions::default(),
        )
        .unwrap();
        assert!(tr.escaped());
    }

    #[test]
    fn drag_damps_motion() {
        let ion = IonSpecies::strontium88().with_drag(1e5).unwrap();
        let drive = DriveConfig::reference();
        let tr = integrate_trajectory(&mathieu(0.3), &ion, &drive, [0.0, 0.0, 1e-5], [0.0; 3], 2e-4, &TrajectoryOptions::default())
            .unwrap();
        assert!(tr.max_abs(2, 1.5e-4) < 1e-5 * 1e-3);
    }

    #[test]
    fn csv_shape() {
        let ion = IonSpecies::strontium88();
        let drive = DriveConfig::reference();
        let tr = integrate_trajectory(&mathieu(0.3), &ion, &drive, [0.0, 0.0, 1e-5], [0.0; 3], 1e-6, &TrajectoryOptions::default())
            .unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &tr).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().count(), tr.t.len() + 1);
        assert_eq!(s.lines().nth(1).unwrap().split(',').count(), 7);
    }
}
