use ipm_lab::evolution::{run, step_coupled, step_ipm, step_stable_ipm, SolverConfig, SolverState, TimeStep};
use ipm_lab::experiments::{interior_profile, rk4_convergence_factor};
use ipm_lab::model_flow::{transport_exact, DeformationSchedule};
use ipm_lab::profiles;
use ipm_lab::{make_grid, ScalarField};

fn data(n: usize, l: f64) -> ScalarField {
    interior_profile().sample(&make_grid(n, l).unwrap())
}

fn fixed(dt: f64, stable: bool) -> SolverConfig {
    SolverConfig {
        time_step: TimeStep::Fixed(dt),
        stable_mode: stable,
        quadrature_k: false,
        // the identities below are algebraic, resolution is irrelevant
        tail_limit: 1.0,
        ..Default::default()
    }
}

#[test]
fn coupled_pair_sums_to_single_field() {
    let grid = make_grid(64, 2.0).unwrap();
    let inter = interior_profile().rescaled(4.0).sample(&grid);
    let ext = profiles::cone_layer((0.4, 0.8), 2.0)
        .unwrap()
        .sample(&grid)
        .scale(0.3);
    for stable in [false, true] {
        let a = SolverState::new(inter.clone(), fixed(1e-3, stable));
        let b = SolverState::new(ext.clone(), fixed(1e-3, stable));
        let (i1, p1) = step_coupled(&a, &b, 1e-3).unwrap();
        let total = SolverState::new(inter.add(&ext), fixed(1e-3, stable));
        let single = if stable {
            step_stable_ipm(&total, 1e-3).unwrap()
        } else {
            step_ipm(&total, 1e-3).unwrap()
        };
        let gap = i1.rho_pert.add(&p1.rho_pert).sub(&single.rho_pert).max_abs();
        assert!(
            gap < 1e-12 * single.rho_pert.max_abs(),
            "stable={stable} gap={gap}"
        );
    }
}

#[test]
fn coupled_with_zero_interior_is_stable_ipm() {
    let grid = make_grid(64, 2.0).unwrap();
    let p = data(64, 2.0);
    let zero = SolverState::new(ScalarField::zeros(grid), fixed(2e-3, true));
    let ext = SolverState::new(p.clone(), fixed(2e-3, true));
    let (i1, p1) = step_coupled(&zero, &ext, 2e-3).unwrap();
    let single = step_stable_ipm(&ext, 2e-3).unwrap();
    assert!(i1.rho_pert.max_abs() < 1e-15 * p.max_abs());
    assert!(p1.rho_pert.sub(&single.rho_pert).max_abs() < 1e-13 * p.max_abs());
}

#[test]
fn trace_m_is_trapezoid_of_k() {
    let state = SolverState::new(data(64, 2.0), fixed(5e-3, true));
    let (trace, _) = run(&state, 0.1, 0.02).unwrap();
    assert_eq!(trace.rows.len(), 6);
    let mut m = 0.0;
    for w in trace.rows.windows(2) {
        m -= 0.5 * (w[0].k + w[1].k) * (w[1].t - w[0].t);
        assert!((w[1].m - m).abs() < 1e-15 + 1e-12 * m.abs());
    }
    assert!((trace.rows.last().unwrap().t - 0.1).abs() < 1e-15);
}

#[test]
fn runs_are_deterministic() {
    let state = SolverState::new(data(128, 2.0), SolverConfig::default());
    let (a, sa) = run(&state, 0.05, 0.01).unwrap();
    let (b, sb) = run(&state, 0.05, 0.01).unwrap();
    assert_eq!(a.rows, b.rows);
    assert_eq!(a.steps, b.steps);
    assert_eq!(sa.rho_pert.values, sb.rho_pert.values);
}

#[test]
fn symmetry_class_is_preserved() {
    let state = SolverState::new(data(128, 2.0), fixed(2e-3, true));
    let (trace, end) = run(&state, 0.1, 0.05).unwrap();
    assert!(end.rho_pert.symmetry_defect() <= 1e-10 * end.rho_pert.max_abs());
    assert!(trace.max_symmetry_defect <= 1e-10);
}

#[test]
fn forced_transport_matches_exact_flow() {
    let grid = make_grid(256, 2.0).unwrap();
    let f = interior_profile();
    let schedule = DeformationSchedule::constant(-1.0, 0.5, 2).unwrap();
    let cfg = SolverConfig {
        forcing: Some(schedule.clone()),
        self_advection: false,
        quadrature_k: false,
        ..Default::default()
    };
    let (_, end) = run(&SolverState::new(f.sample(&grid), cfg), 0.5, 0.5).unwrap();
    let exact = transport_exact(&f, &schedule, 0.5, &grid).unwrap();
    let err = end.rho_pert.sub(&exact).max_abs();
    assert!(err < 1e-3 * exact.max_abs(), "err = {err}");
}

#[test]
fn rk4_error_ratio_near_sixteen() {
    let q = rk4_convergence_factor(&data(128, 2.0), 0.05, 0.01).unwrap();
    assert!((q - 16.0).abs() < 3.2, "factor {q}");
}

#[test]
fn invalid_configs_are_rejected() {
    let f = data(32, 2.0);
    for cfg in [
        fixed(0.0, false),
        SolverConfig {
            time_step: TimeStep::Cfl(-1.0),
            ..Default::default()
        },
        SolverConfig {
            support_threshold: 0.0,
            ..Default::default()
        },
    ] {
        assert!(run(&SolverState::new(f.clone(), cfg), 0.01, 0.01).is_err());
    }
    let s = SolverState::new(f, fixed(1e-3, false));
    assert!(step_stable_ipm(&s, 1e-3).is_err());
}
