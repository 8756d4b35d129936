use approx::assert_relative_eq;
use ipm_lab::experiments::{cone_sign_batch, synthetic_schedule, verify_lemma23_batch};
use ipm_lab::kernel_quad::{origin_deformation, KernelQuadOptions};
use ipm_lab::model_flow::{self, DeformationSchedule};
use ipm_lab::profiles::{self, ConeStackSpec, HoleProfileSpec, OscillatorySpec};
use ipm_lab::{make_grid, spectral};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn hole_profile_equals_x2_inside_hole() {
    let spec = HoleProfileSpec::geometric(3, 2.1, 2.1).unwrap();
    let p = profiles::hole_profile(&spec);
    let r = 0.5 / spec.lambda[2];
    for i in 0..40 {
        let a = i as f64 * 0.157;
        for s in [0.1, 0.5, 0.99] {
            let (x, y) = (s * r * a.cos(), s * r * a.sin());
            assert!((p.eval(x, y) - y).abs() <= 1e-10);
        }
    }
}

#[test]
fn hole_norm_matches_grid_norm() {
    let spec = HoleProfileSpec::geometric(2, 1.25, 2.1).unwrap();
    let grid = make_grid(1024, 2.0).unwrap();
    let field = profiles::build_hole_profile(&spec, &grid).unwrap();
    assert_relative_eq!(
        spectral::sobolev_norm(&field, 2.0),
        spec.h2_norm().unwrap(),
        max_relative = 1e-6
    );
}

#[test]
fn hole_scales_must_separate() {
    assert!(HoleProfileSpec::new(vec![2.0, 3.9]).is_err());
    assert!(HoleProfileSpec::new(vec![0.5]).is_err());
}

#[test]
fn cone_stack_layers_are_disjoint_and_negative() {
    let spec = ConeStackSpec::new(3, 1.0, 2.0);
    let grid = make_grid(512, 2.0).unwrap();
    let layers: Vec<_> = profiles::cone_stack_layers(&spec)
        .unwrap()
        .iter()
        .map(|l| l.sample(&grid))
        .collect();
    assert!(profiles::supports_disjoint(&layers));
    let o = KernelQuadOptions::default();
    for l in profiles::cone_stack_layers(&spec).unwrap() {
        assert!(origin_deformation(&l.density(), &o).unwrap() < 0.0);
    }
}

#[test]
fn cone_constant_below_sqrt3_rejected() {
    assert!(profiles::cone_layer((1.0, 2.0), 1.5).is_err());
}

#[test]
fn cone_sign_law_on_random_layers() {
    let ks = cone_sign_batch(10, 11).unwrap();
    assert!(ks.iter().all(|k| *k < 0.0), "{ks:?}");
}

#[test]
fn oscillatory_layer_has_target_l2() {
    let spec = OscillatorySpec {
        n: 4,
        theta0: 0.0,
        l2_target: 0.3,
    };
    let base = profiles::oscillatory_base(0.3);
    let grid = make_grid(512, 1.0).unwrap();
    assert_relative_eq!(base.sample(&grid).l2_norm(), 0.3, max_relative = 1e-6);
    let layer = profiles::build_oscillatory_layer(&spec, &grid).unwrap();
    assert!(layer.is_symmetric(1e-12));
    assert!(layer.max_abs() > 0.0);
}

#[test]
fn transport_preserves_l2_and_inverts() {
    let grid = make_grid(256, 2.0).unwrap();
    let f = profiles::cone_layer((0.4, 0.8), 2.0).unwrap();
    let l0 = f.sample(&grid).l2_norm();
    let moved = model_flow::transport_by_integral(&f, -0.3, &grid);
    assert_relative_eq!(moved.l2_norm(), l0, max_relative = 2e-3);
    let (a, b) = model_flow::flow_map(model_flow::flow_map((0.3, -0.7), 0.4), -0.4);
    assert_relative_eq!(a, 0.3, max_relative = 1e-14);
    assert_relative_eq!(b, -0.7, max_relative = 1e-14);
}

#[test]
fn deformation_under_flow_matches_direct_quadrature() {
    let f = profiles::cone_layer((1.0, 1.8), 4.0).unwrap();
    let o = KernelQuadOptions::default();
    let i: f64 = -0.5;
    let direct = {
        let g = f.f.clone();
        let moved = ipm_lab::kernel_quad::SampledDensity::from_fn(
            move |x, y| {
                let (a, b) = model_flow::flow_map((x, y), -i);
                g(a, b)
            },
            (-i.abs()).exp(),
            1.8 * i.abs().exp(),
        );
        origin_deformation(&moved, &o).unwrap()
    };
    let k = model_flow::deformation_at_integral(&f.density(), i, &o).unwrap();
    assert_relative_eq!(k, direct, max_relative = 1e-6);
}

#[test]
fn model_flow_certificates_hold() {
    let (cases, report) = verify_lemma23_batch(4, 5, 21).unwrap();
    assert!(report.all_pass(), "{:?}", report.failures());
    for c in cases {
        assert!(c.cert.all_pass());
        // e^{7I} >= e^{-7M} and k̃(0) < 0, so the I-bound is the tighter one
        assert!(c.cert.margins.e7i <= c.cert.margins.e7m + 1e-15);
    }
}

#[test]
fn certification_rejects_narrow_cone_and_positive_k() {
    let rho = profiles::cone_layer((1.0, 2.0), 2.0).unwrap().density();
    let s = DeformationSchedule::constant(-1.0, 1.0, 5).unwrap();
    let o = KernelQuadOptions::default();
    assert!(model_flow::verify_lemma23(&rho, &s, 2.0, 1.0, &o).is_err());
    let rho = profiles::cone_layer((1.0, 2.0), 4.0).unwrap().density();
    let pos = DeformationSchedule::constant(0.5, 1.0, 5).unwrap();
    assert!(model_flow::verify_lemma23(&rho, &pos, 4.0, 1.0, &o).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn synthetic_schedules_are_admissible(seed in 0u64..1000, m in 0.1f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = synthetic_schedule(&mut rng, m, 1.0, 41).unwrap();
        prop_assert!(s.check_admissible(m).is_ok());
        prop_assert!((s.total() - m).abs() < 1e-12 * m);
    }

    #[test]
    fn stretch_is_exp_of_minus_integral(k in -3.0f64..-0.01, t in 0.0f64..1.0) {
        let s = DeformationSchedule::constant(k, 1.0, 3).unwrap();
        prop_assert!((s.stretch(t).unwrap() - (-k * t).exp()).abs() < 1e-12 * (-k * t).exp());
        prop_assert!(model_flow::stretch_lower_bound_margin(&s, 0.0) >= -1e-12);
    }

    #[test]
    fn rescaling_keeps_cone_deformation(lambda in 1.0f64..16.0) {
        let f = profiles::cone_layer((1.0, 2.0), 3.0).unwrap();
        let o = KernelQuadOptions::default();
        let a = origin_deformation(&f.density(), &o).unwrap();
        let b = origin_deformation(&f.rescaled(lambda).density(), &o).unwrap();
        prop_assert!((a - b).abs() < 1e-8 * a.abs());
    }
}
