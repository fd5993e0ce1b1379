//! Mathieu stability, secular frequencies and time-domain ion trajectories.

mod mathieu;
mod ode;
mod secular;
mod species;
mod spectrum;
mod trajectory;

pub use mathieu::{
    is_stable, mathieu_parameters, stability_boundary, stability_map, write_stability_csv, StabilityPoint,
    MULTIPLIER_TOLERANCE, STABILITY_CSV_HEADER,
};
pub use secular::{bias_bracket, omega_z_biased, omega_z_biased_with, secular_frequencies, BiasCoefficient};
pub use species::{DriveConfig, IonSpecies, MACROION_DIAMETER, MACROION_Q_OVER_M, POLYSTYRENE_DENSITY};
pub use spectrum::{extract_secular_frequency, spectral_peak, MIN_SECULAR_PERIODS};
pub use trajectory::{
    integrate_trajectory, write_trajectory_csv, ForceModel, MathieuForce, MultipoleForce, SolvedForce, Tickle,
    Trajectory, TrajectoryOptions, TRAJECTORY_CSV_HEADER,
};

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn z_only(q: f64) -> MathieuForce {
        MathieuForce { a: [0.0; 3], q: [0.0, 0.0, q], escape_radius: 1.0 }
    }

    fn run(model: &dyn ForceModel, drive: &DriveConfig, periods: f64, w_est: f64, opts: TrajectoryOptions) -> Trajectory {
        let ion = IonSpecies::strontium88();
        integrate_trajectory(model, &ion, drive, [0.0, 0.0, 1e-6], [0.0; 3], periods * 2.0 * PI / w_est, &opts).unwrap()
    }

    #[test]
    fn fft_recovers_adiabatic_frequency() {
        let drive = DriveConfig::reference();
        let q = 0.3;
        let w_est = q * drive.omega / (2.0 * 2f64.sqrt());
        let tr = run(&z_only(q), &drive, 60.0, w_est, TrajectoryOptions::default());
        let w = extract_secular_frequency(&tr, 2).unwrap();
        assert!((w / w_est - 1.0).abs() < 0.03, "{w} {w_est}");
    }

    #[test]
    fn fft_converges_to_floquet_exponent() {
        let drive = DriveConfig::reference();
        let mut errs = Vec::new();
        for q in [0.2, 0.1, 0.05] {
            let beta = is_stable(0.0, q, 0.0).floquet_exponent;
            let w_floquet = beta * drive.omega / 2.0;
            let tr = run(&z_only(q), &drive, 60.0, w_floquet, TrajectoryOptions::default());
            let err = (extract_secular_frequency(&tr, 2).unwrap() / w_floquet - 1.0).abs();
            assert!(err < 2e-3, "q={q} err={err}");
            errs.push(err);
        }
        assert!(errs.windows(2).all(|w| w[1] <= w[0]), "{errs:?}");
    }

    #[test]
    fn at_rest_has_no_peak() {
        let drive = DriveConfig::reference();
        let ion = IonSpecies::strontium88();
        let tr =
            integrate_trajectory(&z_only(0.3), &ion, &drive, [0.0; 3], [0.0; 3], 1e-4, &TrajectoryOptions::default()).unwrap();
        assert!(matches!(extract_secular_frequency(&tr, 2), Err(crate::Error::NoPeak(_))));
    }

    #[test]
    fn multipole_matches_closed_form_frequencies() {
        let ion = IonSpecies::strontium88();
        let drive = DriveConfig::reference();
        let model = MultipoleForce { alpha: -4.0, escape_radius: 1e-3, ..MultipoleForce::quadrupole(3.1e-3) };
        let (wr, wz) = secular_frequencies(&ion, &drive, 3.1e-3).unwrap();
        let opts = TrajectoryOptions::default();
        let tr = integrate_trajectory(&model, &ion, &drive, [1e-6, 0.0, 1e-6], [0.0; 3], 40.0 * 2.0 * PI / wr, &opts).unwrap();
        let fz = extract_secular_frequency(&tr, 2).unwrap();
        let fx = extract_secular_frequency(&tr, 0).unwrap();
        assert!((fz / wz - 1.0).abs() < 0.02, "{fz} {wz}");
        assert!((fx / wr - 1.0).abs() < 0.02, "{fx} {wr}");
    }

    #[test]
    fn resonant_tickle_grows_and_off_resonance_stays_bounded() {
        let ion = IonSpecies::strontium88();
        let drive = DriveConfig::reference();
        let model = MultipoleForce::quadrupole(3.1e-3);
        let (_, wz) = secular_frequencies(&ion, &drive, 3.1e-3).unwrap();
        let t_sec = 2.0 * PI / wz;
        let amp = |w: f64| {
            let opts = TrajectoryOptions { tickle: Some(Tickle { amplitude: 0.02, frequency: w, z1: 0.019 }), ..Default::default() };
            let tr = integrate_trajectory(&model, &ion, &drive, [0.0; 3], [0.0; 3], 200.0 * t_sec, &opts).unwrap();
            (0..4)
                .map(|i| {
                    let (a, b) = (i as f64 * 50.0 * t_sec, (i + 1) as f64 * 50.0 * t_sec);
                    tr.t.iter().zip(&tr.x).filter(|(t, _)| **t >= a && **t < b).map(|(_, p)| p[2].abs()).fold(0.0, f64::max)
                })
                .collect::<Vec<f64>>()
        };
        let on = amp(wz);
        assert!(on.windows(2).all(|w| w[1] > w[0]), "{on:?}");
        let off = amp(1.5 * wz);
        assert!(off[3] < 0.2 * on[3], "{off:?} {on:?}");
    }
}
