use std::f64::consts::PI;

use approx::assert_relative_eq;
use proptest::prelude::*;

use cplab::continuum::{
    ab_identity_check, angular_bracket_kernels, angular_factor, angular_factor_quadrature,
    closed_integral, cp_constant, fourth_order_error, fourth_order_main,
    integral_quadrature_oracle, FourthOrderRoute, IntegralKind,
};
use cplab::model::{build_lattice, make_gaussian_profile, ChargeProfile, Geometry, ModelParams};
use cplab::quad::QuadSpec;
use cplab::traces::{trace_words, IndexWord, QuadratureSpec, TraceSystem};

fn defaults() -> (ModelParams, ChargeProfile) {
    (
        ModelParams::new(0.5, 2.0).unwrap(),
        make_gaussian_profile(1.0).unwrap(),
    )
}

fn i111(a: f64, b: f64, c: f64) -> f64 {
    let (x, y, z) = (a.sqrt(), b.sqrt(), c.sqrt());
    1.0 / ((x + y) * (y + z) * (z + x))
}

#[test]
fn closed_integral_examples() {
    assert_relative_eq!(
        closed_integral(IntegralKind::I111, 1.0, 1.0, 1.0).unwrap(),
        0.125,
        max_relative = 1e-15
    );
    assert_relative_eq!(
        closed_integral(IntegralKind::I111, 1.0, 4.0, 9.0).unwrap(),
        1.0 / 60.0,
        max_relative = 1e-15
    );
    assert!((integral_quadrature_oracle(1, 1, 1, 1.0, 1.0, 1.0).unwrap() - 0.125).abs() <= 1e-10);
    assert!(closed_integral(IntegralKind::I221, 0.0, 1.0, 1.0).is_err());
    assert!(closed_integral(IntegralKind::I311, 1.0, -1.0, 1.0).is_err());
}

#[test]
fn exponents() {
    assert_eq!(IntegralKind::I111.exponents(), (1, 1, 1));
    assert_eq!(IntegralKind::I221.exponents(), (2, 2, 1));
    assert_eq!(IntegralKind::I212.exponents(), (2, 1, 2));
    assert_eq!(IntegralKind::I311.exponents(), (3, 1, 1));
}

proptest! {
    #[test]
    fn higher_kinds_are_parameter_derivatives(a in 0.2f64..5.0, b in 0.2f64..5.0, c in 0.2f64..5.0) {
        // Raising an exponent is -d/d(parameter) of the lower integral.
        prop_assert!((closed_integral(IntegralKind::I111, a, b, c).unwrap() / i111(a, b, c) - 1.0).abs() < 1e-14);
        let h = 1e-3;
        let d_ab = (i111(a + h, b + h, c) - i111(a + h, b - h, c) - i111(a - h, b + h, c) + i111(a - h, b - h, c))
            / (4.0 * h * h);
        let d_ac = (i111(a + h, b, c + h) - i111(a + h, b, c - h) - i111(a - h, b, c + h) + i111(a - h, b, c - h))
            / (4.0 * h * h);
        let d_aa = (i111(a + h, b, c) - 2.0 * i111(a, b, c) + i111(a - h, b, c)) / (2.0 * h * h);
        let check = |kind, fd: f64| (closed_integral(kind, a, b, c).unwrap() / fd - 1.0).abs() < 1e-4;
        prop_assert!(check(IntegralKind::I221, d_ab));
        prop_assert!(check(IntegralKind::I212, d_ac));
        prop_assert!(check(IntegralKind::I311, d_aa));
    }

    #[test]
    fn bracket_kernels_are_bounded(q in 0.0f64..200.0) {
        let (k0, k2) = angular_bracket_kernels(q);
        prop_assert!(k0.abs() <= 2.0 + 1e-15);
        prop_assert!(k2.abs() <= 2.0 / 3.0 + 1e-15);
    }
}

#[test]
fn angular_factor_examples() {
    assert_relative_eq!(
        angular_factor(0.0, 0.0),
        6.0 * PI * PI,
        max_relative = 1e-15
    );
    assert_relative_eq!(
        angular_factor(1.0, 1.0),
        8.0 * PI * PI,
        max_relative = 1e-15
    );
    assert_relative_eq!(
        angular_factor_quadrature(1.0, 1.0),
        8.0 * PI * PI,
        max_relative = 1e-12
    );
    assert_relative_eq!(
        angular_factor_quadrature(0.3, -0.8),
        angular_factor(0.3, -0.8),
        max_relative = 1e-12
    );
}

#[test]
fn bracket_kernel_values() {
    let (k0, k2) = angular_bracket_kernels(0.0);
    assert_eq!((k0, k2), (2.0, 2.0 / 3.0));
    let (k0, k2) = angular_bracket_kernels(PI);
    assert!(k0.abs() < 1e-15);
    assert_relative_eq!(k2, -4.0 / (PI * PI), max_relative = 1e-14);
    // the series branch below q = 1 joins the closed form continuously
    let below = angular_bracket_kernels(1.0 - 1e-12);
    let above = angular_bracket_kernels(1.0);
    assert!((below.0 - above.0).abs() < 1e-11 && (below.1 - above.1).abs() < 1e-11);
}

#[test]
fn ab_identity_and_constant() {
    assert_relative_eq!(ab_identity_check(), 23.0 * PI, max_relative = 1e-10);
    assert_relative_eq!(
        ab_identity_check() * 4.0 * PI * PI,
        92.0 * PI.powi(3),
        max_relative = 1e-10
    );
    assert_relative_eq!(cp_constant(1.0), 2.89760e-3, max_relative = 1e-5);
    assert_relative_eq!(cp_constant(2.0), 1.81100e-4, max_relative = 1e-5);
}

#[test]
fn fourth_order_frozen_and_routes_agree() {
    let (params, prof) = defaults();
    let spec = QuadSpec::default();
    let a = fourth_order_main(
        20.0,
        &params,
        &prof,
        FourthOrderRoute::TRepresentation,
        &spec,
    )
    .unwrap();
    assert_relative_eq!(a.value, 1.424_677_422e-13, max_relative = 1e-8);
    for r in [20.0, 50.0] {
        let t =
            fourth_order_main(r, &params, &prof, FourthOrderRoute::TRepresentation, &spec).unwrap();
        let d = fourth_order_main(r, &params, &prof, FourthOrderRoute::DirectQuadrature, &spec)
            .unwrap();
        assert_relative_eq!(t.value, d.value, max_relative = 1e-10);
        assert_relative_eq!(
            t.value,
            t.regular_part.unwrap() + t.irregular_part.unwrap(),
            max_relative = 1e-15
        );
        let te = fourth_order_error(r, &params, &prof, FourthOrderRoute::TRepresentation, &spec)
            .unwrap();
        let de = fourth_order_error(r, &params, &prof, FourthOrderRoute::DirectQuadrature, &spec)
            .unwrap();
        assert_relative_eq!(te.value, de.value, max_relative = 1e-9);
    }
}

#[test]
fn fourth_order_rejects_bad_inputs() {
    let (params, prof) = defaults();
    let spec = QuadSpec::default();
    let route = FourthOrderRoute::TRepresentation;
    assert!(fourth_order_main(0.0, &params, &prof, route, &spec).is_err());
    assert!(fourth_order_main(-3.0, &params, &prof, route, &spec).is_err());
    assert!(fourth_order_error(10.0, &params, &ChargeProfile::zero(), route, &spec).is_err());
}

#[test]
fn long_range_limit_depends_only_on_the_trap() {
    let spec = QuadSpec::default();
    let prof = make_gaussian_profile(1.0).unwrap();
    for (e, nu0) in [(0.6, 2.0), (0.5, 3.0)] {
        let params = ModelParams::new(e, nu0).unwrap();
        let r = 120.0;
        let a =
            fourth_order_main(r, &params, &prof, FourthOrderRoute::TRepresentation, &spec).unwrap();
        assert_relative_eq!(r.powi(7) * a.value, cp_constant(nu0), max_relative = 5e-3);
    }
}

#[test]
fn error_term_scales_like_inverse_e2_nu6() {
    // R^9 <Q2 Q1 Q1 Q2> tends to a profile constant divided by e^2 nu^6.
    let spec = QuadSpec::default();
    let prof = make_gaussian_profile(1.0).unwrap();
    let r = 120.0;
    let scaled = |e: f64, nu0: f64| {
        let params = ModelParams::new(e, nu0).unwrap();
        let b = fourth_order_error(r, &params, &prof, FourthOrderRoute::TRepresentation, &spec)
            .unwrap();
        r.powi(9) * b.value * e * e * params.nu().powi(6)
    };
    let base = scaled(0.5, 2.0);
    assert_relative_eq!(scaled(0.7, 2.0), base, max_relative = 1e-2);
    assert_relative_eq!(scaled(0.5, 3.0), base, max_relative = 1e-2);
}

#[test]
fn lattice_fourth_order_converges_to_continuum() {
    let params = ModelParams::new(0.5, 2.0).unwrap();
    let prof = make_gaussian_profile(1.0).unwrap();
    let r = 2.0;
    let continuum = fourth_order_main(
        r,
        &params,
        &prof,
        FourthOrderRoute::TRepresentation,
        &QuadSpec::default(),
    )
    .unwrap()
    .value;
    let words = [
        IndexWord::parse("1122").unwrap(),
        IndexWord::parse("2211").unwrap(),
    ];
    let lattice = |l: f64| {
        let lat = build_lattice(l, 0.7).unwrap();
        let system = TraceSystem::two_electron(&params, &lat, &prof, &Geometry::new(r).unwrap());
        let v = trace_words(&words, &system, &QuadratureSpec::default()).unwrap();
        v[0].value + v[1].value
    };
    let ladder: Vec<f64> = [16.0, 24.0, 32.0].iter().map(|&l| lattice(l)).collect();
    let gaps: Vec<f64> = ladder.iter().map(|v| (v - continuum).abs()).collect();
    assert!(
        gaps[0] > gaps[1] && gaps[1] > gaps[2],
        "ladder {ladder:?} vs {continuum}"
    );
    assert!(
        gaps[2] <= (ladder[2] - ladder[1]).abs(),
        "ladder {ladder:?} vs {continuum}"
    );
    assert!(gaps[2] / continuum < 5e-3);
}
