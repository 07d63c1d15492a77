use std::f64::consts::PI;

use num_complex::Complex64;

use sdc_kit::collocation::{NodeFamily, QDeltaKind};
use sdc_kit::harness::{fit_order, normalized_l2_error, run_study, ConvergenceRow, ProblemKind, ProblemSpec, ReferenceKind, StudyConfig};
use sdc_kit::imex::SolverTolerances;
use sdc_kit::problems::{AcousticAdvection1D, Advection1D, DahlquistTwoRate, GravityWave2D};
use sdc_kit::sdc::{collocation_residual, collocation_update, solve_collocation_direct, Sdc, SdcConfig, StepReport};
use sdc_kit::ImexSystem;

fn tols(tol: f64) -> SolverTolerances {
    SolverTolerances { nonlinear_abs: 1e-15, linear_abs: 1e-15, ..SolverTolerances::uniform(tol) }
}

fn dahlquist_order(m: usize, k: usize, dts: &[f64]) -> f64 {
    let p = DahlquistTwoRate::new(Complex64::new(-0.5, 4.0), Complex64::new(0.0, 1.0));
    let sdc = Sdc::new(SdcConfig::new(m, k).with_tolerances(tols(1e-14))).unwrap();
    let exact = p.exact(1.0);
    let mut rows: Vec<ConvergenceRow> = dts
        .iter()
        .map(|&dt| {
            let steps = (1.0 / dt).round() as usize;
            let run = sdc.integrate(&p, &p.initial_state(), 0.0, 1.0, steps, None).unwrap();
            ConvergenceRow { dt, error_l2: normalized_l2_error(&run.final_state, &exact).unwrap(), observed_order: None }
        })
        .collect();
    fit_order(&mut rows).unwrap()
}

#[test]
fn dahlquist_orders_match_min_of_sweeps_and_quadrature() {
    // dyadic dt sequences start where the leading error term dominates; SDC(2,2)
    // shows 3.7 over 0.2..0.025 before settling to 3
    let dyadic = |start: f64| -> Vec<f64> { (0..4).map(|i| start / 2f64.powi(i)).collect() };
    for (m, k, start) in [(1, 1, 0.2), (1, 3, 0.2), (2, 1, 0.2), (2, 2, 0.0125), (2, 3, 0.2), (2, 5, 0.2), (3, 3, 0.1), (3, 5, 0.1)] {
        let expected = (k + 1).min(2 * m) as f64;
        let order = dahlquist_order(m, k, &dyadic(start));
        assert!((order - expected).abs() <= 0.4, "SDC({m},{k}): {order} vs {expected}");
    }
}

#[test]
fn collocation_residual_decreases_across_sweeps() {
    let dt = 1.0;
    for radius in [0.2, 0.4, 0.6, 0.8, 1.0] {
        for angle in [0.5, 0.625, 0.75, 0.875, 1.0] {
            let lambda = Complex64::from_polar(radius, angle * PI);
            let p = DahlquistTwoRate::new(lambda, Complex64::new(0.0, 0.0));
            let sdc = Sdc::new(SdcConfig::new(3, 6).with_tolerances(tols(1e-14))).unwrap();
            let x0 = p.initial_state();
            let mut report = StepReport::default();
            let mut nodes = sdc.initial_guess(&p, &x0, 0.0, dt, &mut report).unwrap();
            let mut last = collocation_residual(sdc.table(), &nodes, &x0, dt);
            for _ in 0..6 {
                nodes = sdc.sweep(&p, &nodes, &x0, 0.0, dt, &mut report).unwrap();
                let r = collocation_residual(sdc.table(), &nodes, &x0, dt);
                assert!(r <= last * (1.0 + 1e-12) + 1e-15, "lambda {lambda}: {r:e} after {last:e}");
                last = r;
            }
        }
    }
}

// (name, system, state, dt, fixed-point bound in units of the solve tolerance)
fn shipped() -> Vec<(&'static str, Box<dyn ImexSystem>, Vec<f64>, f64, f64)> {
    let dahlquist = DahlquistTwoRate::new(Complex64::new(-1.0, 10.0), Complex64::new(0.0, 1.0));
    let advection = Advection1D::new(16, 1.0, 1.0, 0.25).unwrap();
    let acoustic = AcousticAdvection1D::new(16, 1.0, 1.0, 10.0).unwrap();
    let gravity = GravityWave2D::new(30, 5).unwrap();
    vec![
        ("dahlquist", Box::new(dahlquist), dahlquist.initial_state(), 0.1, 10.0),
        ("advection", Box::new(advection.clone()), advection.initial_state(), 0.5 * advection.dx(), 10.0),
        ("acoustic", Box::new(acoustic.clone()), acoustic.gaussian_pulse(0.1), 0.05, 10.0),
        // p carries c_s^2 relative to u and w, so in the plain Euclidean norm the
        // node solves amplify their residual by up to about c_s
        ("gravity", Box::new(gravity.clone()), gravity.initial_state(), 12.0, 10.0 * gravity.sound_speed),
    ]
}

#[test]
fn direct_collocation_is_a_fixed_point_for_every_problem() {
    let tol = 1e-12;
    for (name, system, x0, dt, bound) in shipped() {
        for (m, k) in [(2, 3), (3, 5), (4, 7)] {
            for (imp, exp) in [(QDeltaKind::Lu, QDeltaKind::ExplicitEuler), (QDeltaKind::MinSrFlex, QDeltaKind::MinSrNs)] {
                let cfg = SdcConfig::new(m, k).with_preconditioners(imp, exp).unwrap().with_tolerances(tols(tol));
                let sdc = Sdc::new(cfg).unwrap();
                let direct = solve_collocation_direct(system.as_ref(), sdc.table(), &x0, 0.0, dt, &tols(tol)).unwrap();
                let mut report = StepReport::default();
                let swept = sdc.sweep(system.as_ref(), &direct, &x0, 0.0, dt, &mut report).unwrap();
                for (s, d) in swept.states.iter().zip(&direct.states) {
                    let moved = normalized_l2_error(s, d).unwrap();
                    assert!(moved <= bound * tol, "{name} SDC({m},{k}) {imp:?}: {moved:e}");
                }
                assert!(report.max_solve_residual_ratio <= 1.0);
            }
        }
    }
}

#[test]
fn converged_sdc_matches_direct_collocation() {
    let p = DahlquistTwoRate::new(Complex64::new(0.0, 10.0), Complex64::new(0.0, 1.0));
    for family in NodeFamily::ALL {
        let sdc = Sdc::new(SdcConfig::new(3, 20).with_family(family).with_tolerances(tols(1e-14))).unwrap();
        let x0 = p.initial_state();
        let (x1, _) = sdc.step(&p, &x0, 0.0, 0.02).unwrap();
        let direct = solve_collocation_direct(&p, sdc.table(), &x0, 0.0, 0.02, &tols(1e-14)).unwrap();
        let oracle = collocation_update(sdc.table(), &direct, &x0, 0.02);
        assert!(normalized_l2_error(&x1, &oracle).unwrap() <= 1e-8, "{family}");
    }
}

#[test]
fn fixed_point_does_not_depend_on_preconditioners() {
    let tol = 1e-12;
    let system = AcousticAdvection1D::new(16, 1.0, 1.0, 4.0).unwrap();
    let x0 = system.gaussian_pulse(0.1);
    let dt = 0.1 * system.dx();
    let end = |imp, exp| {
        let cfg = SdcConfig::new(3, 8).with_preconditioners(imp, exp).unwrap().with_tolerances(tols(tol));
        Sdc::new(cfg).unwrap().step(&system, &x0, 0.0, dt).unwrap().0
    };
    let a = end(QDeltaKind::Lu, QDeltaKind::ExplicitEuler);
    let b = end(QDeltaKind::MinSrFlex, QDeltaKind::MinSrNs);
    let c = end(QDeltaKind::ImplicitEuler, QDeltaKind::ExplicitEuler);
    assert!(normalized_l2_error(&b, &a).unwrap() <= 100.0 * tol);
    assert!(normalized_l2_error(&c, &a).unwrap() <= 100.0 * tol);
}

#[test]
fn steps_are_deterministic() {
    for (name, system, x0, dt, _) in shipped() {
        let sdc = Sdc::new(SdcConfig::new(3, 4).with_tolerances(tols(1e-10))).unwrap();
        let a = sdc.step(system.as_ref(), &x0, 0.0, dt).unwrap();
        let b = sdc.step(system.as_ref(), &x0, 0.0, dt).unwrap();
        assert_eq!(a.0, b.0, "{name}");
        assert_eq!(a.1, b.1, "{name}");
    }
}

#[test]
fn advection_reaches_eighth_order_against_exact_semidiscrete_solution() {
    let study = |m: usize, k: usize| StudyConfig {
        problem: ProblemSpec::new(ProblemKind::Advection1d),
        sdc: SdcConfig::new(m, k).with_preconditioners(QDeltaKind::Lu, QDeltaKind::ExplicitEuler).unwrap(),
        dt_list: vec![1000.0, 500.0, 250.0, 125.0],
        t_end: 50_000.0,
        reference: ReferenceKind::Analytic,
        output_path: None,
        cache_dir: None,
    };
    for (m, k, expected, tol) in [(2, 3, 4.0, 0.4), (3, 5, 6.0, 0.5), (4, 7, 8.0, 0.75)] {
        let order = run_study(&study(m, k)).unwrap().fitted_order().unwrap();
        assert!((order - expected).abs() <= tol, "SDC({m},{k}): {order}");
    }
}

#[test]
fn advection_mean_is_conserved_by_explicit_sweeps() {
    let p = Advection1D::new(32, 1.0, 1.0, 0.25).unwrap();
    let x0 = p.initial_state();
    let mean0: f64 = x0.iter().sum::<f64>() / 32.0;
    for (imp, exp) in [(QDeltaKind::Lu, QDeltaKind::ExplicitEuler), (QDeltaKind::MinSrFlex, QDeltaKind::MinSrNs)] {
        let sdc = Sdc::new(SdcConfig::new(3, 5).with_preconditioners(imp, exp).unwrap()).unwrap();
        let run = sdc.integrate(&p, &x0, 0.0, 1.0, 64, Some(1)).unwrap();
        for snap in &run.snapshots {
            let mean: f64 = snap.state.iter().sum::<f64>() / 32.0;
            assert!((mean - mean0).abs() <= 1e-12 * mean0.abs());
        }
    }
}

#[test]
fn collocation_conserves_acoustic_energy() {
    // the drift left by converged SDC is a time-discretisation effect: the
    // Gauss collocation limit itself conserves the quadratic energy
    for fast_cfl in [1.0, 2.0, 5.0] {
        let p = AcousticAdvection1D::new(32, 1.0, 0.0, 1.0).unwrap();
        let dt = fast_cfl * p.dx();
        let sdc = Sdc::new(SdcConfig::new(3, 0)).unwrap();
        let mut x = p.gaussian_pulse(0.1);
        let e0 = p.energy(&x);
        for _ in 0..10 {
            let direct = solve_collocation_direct(&p, sdc.table(), &x, 0.0, dt, &tols(1e-14)).unwrap();
            let next = collocation_update(sdc.table(), &direct, &x, dt);
            assert!(((p.energy(&next) - p.energy(&x)) / e0).abs() <= 1e-6);
            x = next;
        }
        assert!(((p.energy(&x) - e0) / e0).abs() <= 1e-10, "CFL {fast_cfl}");
    }
    let p = AcousticAdvection1D::new(32, 1.0, 1.0, 4.0).unwrap();
    let dt = 0.5 * p.dx();
    let sdc = Sdc::new(SdcConfig::new(3, 12).with_tolerances(tols(1e-13))).unwrap();
    let mut x = p.gaussian_pulse(0.1);
    for _ in 0..10 {
        let (next, _) = sdc.step(&p, &x, 0.0, dt).unwrap();
        assert!(((p.energy(&next) - p.energy(&x)) / p.energy(&x)).abs() <= 1e-6);
        x = next;
    }
}

#[test]
fn gravity_wave_symmetry_holds_for_the_reference_integrator() {
    let g = GravityWave2D::new(150, 10).unwrap();
    let t_end = 600.0;
    let x = sdc_kit::reference::integrate(&g, &g.initial_state(), 0.0, t_end, sdc_kit::reference::Ssprk3Config::new(0.5).unwrap()).unwrap();
    assert!(g.symmetry_defect(g.buoyancy(&x), g.advected_centre(t_end)) < 0.02);
}
