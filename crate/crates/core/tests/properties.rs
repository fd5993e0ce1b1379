use latticetrap::coulomb::screening_factor_image;
use latticetrap::dynamics::{DriveConfig, IonSpecies};
use latticetrap::fieldsolver::{multipole_potential, solve_laplace, SolverOptions};
use latticetrap::geometry::{BoundaryGrid, ElectrodeStack};
use latticetrap::grid::{GridLayout, ScalarField3D};
use latticetrap::pseudopot::{fit_multipole_with, pseudopotential_from_potential, FitOptions};
use latticetrap::scaling::{j_coupling, CouplingParams};
use proptest::prelude::*;

const N: usize = 17;

/// Grounded bottom face, driven top face and one interior box electrode.
fn grid(top: f64, blob: f64, centre: [usize; 3], half: usize) -> BoundaryGrid {
    let l = GridLayout::cubic([N, N, N], [0.0; 3], 1e-4).unwrap();
    BoundaryGrid::from_fn(l, vec![0.0, 0.0, top, blob], |ijk, _| {
        if ijk[2] == 0 {
            Some(1)
        } else if ijk[2] == N - 1 {
            Some(2)
        } else if (0..3).all(|a| ijk[a].abs_diff(centre[a]) <= half) {
            Some(3)
        } else {
            None
        }
    })
    .unwrap()
}

fn grid_strategy() -> impl Strategy<Value = BoundaryGrid> {
    (-3.0..3.0f64, -3.0..3.0f64, prop::array::uniform3(3usize..N - 3), 0usize..3)
        .prop_map(|(top, blob, c, h)| grid(top, blob, c, h))
}

fn solve(g: &BoundaryGrid) -> ScalarField3D {
    solve_laplace(g, &SolverOptions::default()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn maximum_principle(g in grid_strategy()) {
        let phi = solve(&g);
        let fixed: Vec<f64> = (0..g.node_count()).filter(|&n| g.is_dirichlet(n)).map(|n| g.dirichlet_value(n)).collect();
        let lo = fixed.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = fixed.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for v in &phi.values {
            prop_assert!(*v >= lo - 1e-12 && *v <= hi + 1e-12);
        }
        for n in 0..g.node_count() {
            if g.is_dirichlet(n) {
                prop_assert_eq!(phi.values[n], g.dirichlet_value(n));
            }
        }
    }

    #[test]
    fn solve_is_linear(g in grid_strategy()) {
        let a = solve(&g);
        let b = solve(&g.scaled(2.0));
        let scale = g.potential_scale();
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!((2.0 * x - y).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn psi_nonnegative_and_scales(g in grid_strategy(), c in 0.1..10.0f64, mass in 1.0..1e6f64) {
        let phi = solve(&g);
        let ion = IonSpecies::from_e_amu(1.0, mass).unwrap();
        let drive = DriveConfig::reference();
        let psi = pseudopotential_from_potential(&phi, &ion, &drive, None).unwrap();
        let psi_v = pseudopotential_from_potential(&phi, &ion, &DriveConfig { v_rf: c * drive.v_rf, ..drive }, None).unwrap();
        let heavy = IonSpecies::from_e_amu(1.0, c * mass).unwrap();
        let psi_m = pseudopotential_from_potential(&phi, &heavy, &drive, None).unwrap();
        for ((a, b), m) in psi.values().iter().zip(psi_v.values()).zip(psi_m.values()) {
            prop_assert!(*a >= 0.0);
            prop_assert!((c * c * a - b).abs() <= 1e-12 * b.abs().max(f64::MIN_POSITIVE));
            prop_assert!((a / c - m).abs() <= 1e-12 * a.abs().max(f64::MIN_POSITIVE) / c);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn multipole_fit_round_trip(
        r1 in 1e-3..10e-3f64,
        alpha in -8.0..0.0f64,
        x0 in -3e-5..3e-5f64,
        y0 in -3e-5..3e-5f64,
        z0 in 0.4e-3..0.6e-3f64,
    ) {
        let mut stack = ElectrodeStack::reference();
        stack.lattice_dims = (1, 1);
        let h = 1e-4;
        let l = GridLayout::cubic([25, 25, 61], [-12.0 * h, -12.0 * h, -1e-3], h).unwrap();
        let phi = ScalarField3D::from_fn(l, |p| {
            let (dx, dy, dz) = (p[0] - x0, p[1] - y0, p[2] - z0);
            0.8 + multipole_potential((dx * dx + dy * dy).sqrt(), dz, 1.0, r1, alpha)
        });
        let t = fit_multipole_with(&phi, &stack, (0, 0), &FitOptions::default()).unwrap();
        prop_assert!((t.r1 / r1 - 1.0).abs() < 1e-3);
        prop_assert!((t.alpha - alpha).abs() < 1e-3 * alpha.abs().max(1.0));
        prop_assert!((t.minimum_position[2] - z0).abs() < 1e-3 * r1);
    }

    #[test]
    fn screening_decreases_with_height(h in 1e-6..1e-1f64, f in 1.01..10.0f64, d in 1e-5..1e-2f64) {
        let s = screening_factor_image(h, d).unwrap();
        let s_up = screening_factor_image(h * f, d).unwrap();
        prop_assert!(s >= 1.0);
        prop_assert!(s_up <= s);
    }

    #[test]
    fn coupling_is_homogeneous_in_force(f in 1e-22..1e-18f64, c in 0.01..100.0f64, d in 1e-5..1e-2f64) {
        let p = CouplingParams { force: f, d, omega: 2e6, ion: IonSpecies::strontium88() };
        let a = j_coupling(&p).unwrap();
        let b = j_coupling(&CouplingParams { force: c * f, ..p }).unwrap();
        prop_assert!((b / (c * c * a) - 1.0).abs() < 1e-13);
    }
}

#[test]
fn screening_limits() {
    assert!(screening_factor_image(1e4, 1.64e-3).unwrap() - 1.0 < 1e-12);
    // s goes as d^2 / (6 h^2) for a low ion
    let s = screening_factor_image(1e-8, 1.64e-3).unwrap();
    assert!((s / (1.64e-3f64.powi(2) / 6e-16) - 1.0).abs() < 1e-3, "{s}");
}
