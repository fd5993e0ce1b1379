use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use latticetrap::dynamics::{
    integrate_trajectory, is_stable, spectral_peak, DriveConfig, IonSpecies, MultipoleForce, TrajectoryOptions,
};
use latticetrap::fieldsolver::{solve_laplace, SolverMethod, SolverOptions};
use latticetrap::interp::CubicSpline3D;
use latticetrap::pseudopot::fit_multipole_with;
use latticetrap_bench::{small_grid, small_solved, small_stack, two_tone};
use std::hint::black_box;

fn laplace(c: &mut Criterion) {
    let grid = small_grid();
    let mut g = c.benchmark_group("laplace");
    g.sample_size(10);
    g.bench_function("multigrid_3x3", |b| {
        b.iter(|| solve_laplace(&grid, &SolverOptions { method: SolverMethod::Multigrid, ..Default::default() }).unwrap())
    });
    g.finish();
}

fn spline(c: &mut Criterion) {
    let solved = small_solved();
    let stack = small_stack();
    let centre = stack.site_center(stack.center_site()).unwrap();
    let p = [centre[0], centre[1], 0.5e-3];
    let crop = {
        let n = solved.rf.layout.nearest(p);
        solved.rf.crop(n.map(|v| v - 8), n.map(|v| v + 8))
    };
    c.bench_function("spline_build_17", |b| b.iter(|| CubicSpline3D::new(black_box(&crop)).unwrap()));
    let s = CubicSpline3D::new(&crop).unwrap();
    c.bench_function("spline_gradient", |b| b.iter(|| s.gradient(black_box(p))));
    c.bench_function("multipole_fit", |b| {
        b.iter(|| fit_multipole_with(&solved.rf, &solved.stack, stack.center_site(), &Default::default()).unwrap())
    });
}

fn floquet(c: &mut Criterion) {
    c.bench_function("floquet_point", |b| b.iter(|| is_stable(black_box(0.0), black_box(0.7), 0.0)));
}

fn trajectory(c: &mut Criterion) {
    let ion = IonSpecies::strontium88();
    let drive = DriveConfig::reference();
    let model = MultipoleForce { alpha: -4.0, ..MultipoleForce::quadrupole(3.1e-3) };
    let duration = 200.0 * 2.0 * std::f64::consts::PI / drive.omega;
    c.bench_function("trajectory_200_periods", |b| {
        b.iter(|| {
            integrate_trajectory(&model, &ion, &drive, [2e-6; 3], [0.0; 3], duration, &TrajectoryOptions::default()).unwrap()
        })
    });
}

fn fft(c: &mut Criterion) {
    let dt = 1e-8;
    c.bench_function("spectral_peak_16k", |b| {
        b.iter_batched(|| two_tone(16_384, dt), |s| spectral_peak(&s, dt, 5.0e6).unwrap(), BatchSize::SmallInput)
    });
}

criterion_group!(benches, laplace, spline, floquet, trajectory, fft);
criterion_main!(benches);
